import numpy as np
import pytest

from workembed.hyper import Hyper
from workembed.synthbench import SynthSpec, generate
from workembed.traces import apply_scaler, fit_scaler

SMALL_SPEC = SynthSpec(n_templates=3, workloads_per_template=2, k_true=2, s=4, p=8,
                       configs_per_workload=12, shared_config_count=5, noise_std=0.0, seed=3)

FAST = Hyper(k=3, hidden=(8,), epochs=3, batch_size=16, reg_hidden=(8,), reg_epochs=3,
             incr_steps=20, snn_workloads=2, snn_configs=2)


@pytest.fixture(scope="session")
def small():
    """Tiny noiseless trace set, its ground truth, scaler and scaled copy."""
    ts, gt = generate(SMALL_SPEC)
    scaler = fit_scaler(ts)
    return ts, gt, scaler, apply_scaler(scaler, ts)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
