"""Workload-encoding extraction under admission schemes, and the latency regressor."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .embedders.base import Embedder, fit_loop, mlp_from_json, mlp_to_json, row_batches
from .hyper import Hyper
from .nn import MLP, Tensor, concat
from .traces import Observation, ScalerStats, TraceSet

POOLS = ("shared", "arbitrary")


@dataclass(frozen=True)
class AdmissionScheme:
    pool: str
    n_obs: int

    def __post_init__(self):
        if self.pool not in POOLS:
            raise ValueError(f"pool must be one of {POOLS}, got {self.pool!r}")
        if self.n_obs not in (1, 5):
            raise ValueError(f"n_obs must be 1 or 5, got {self.n_obs}")

    @property
    def label(self) -> str:
        return f"{self.pool}/{self.n_obs}"


ALL_SCHEMES = tuple(AdmissionScheme(pool, n) for pool in POOLS for n in (5, 1))


def in_pool(configs: np.ndarray, pool) -> np.ndarray:
    """Boolean mask of rows whose configuration belongs to the shared pool."""
    keys = {tuple(c) for c in np.atleast_2d(np.asarray(pool, dtype=np.float64))} if len(pool) else set()
    return np.array([tuple(c) in keys for c in np.atleast_2d(configs)], dtype=bool)


def choose_admitted(configs: np.ndarray, scheme: AdmissionScheme, pool, seed: int,
                    key: str = "") -> np.ndarray:
    """Indices of the admitted observations among ``configs``, drawn without replacement.

    The shared scheme draws from observations under shared-pool
    configurations; the arbitrary scheme draws from the remaining ones.
    """
    shared = in_pool(configs, pool if pool is not None else [])
    candidates = np.flatnonzero(shared if scheme.pool == "shared" else ~shared)
    if len(candidates) < scheme.n_obs:
        raise ValueError(f"workload {key!r} has {len(candidates)} {scheme.pool}-pool "
                         f"observations; scheme {scheme.label} needs {scheme.n_obs}")
    rng = np.random.default_rng([seed, _stable_hash(key)])
    return np.sort(rng.choice(candidates, size=scheme.n_obs, replace=False))


def select_admission(ts: TraceSet, workload_id: str, scheme: AdmissionScheme, pool,
                     seed: int) -> np.ndarray:
    """Rows of ``workload_id`` admitted under ``scheme``."""
    rows = ts.rows_of(workload_id)
    return rows[choose_admitted(ts.configs[rows], scheme, pool, seed, workload_id)]


def _stable_hash(text: str) -> int:
    h = 0
    for ch in text.encode("utf-8"):
        h = (h * 131 + ch) % (2**31 - 1)
    return h


def extract_workload_encoding(e: Embedder, obs: list[Observation], scheme: AdmissionScheme | None = None,
                              pool=None, seed: int = 0) -> np.ndarray:
    """Centroid of the encodings of the admitted observations.

    Without a scheme every observation is admitted. With one, the admitted
    observations are drawn from ``obs`` as the scheme prescribes.
    """
    if not obs:
        raise ValueError("no observations to extract an encoding from")
    ids = {o.workload_id for o in obs}
    if len(ids) != 1:
        raise ValueError(f"observations span several workloads: {sorted(ids)}")
    if scheme is not None:
        configs = np.array([o.config for o in obs])
        if scheme.pool == "shared" and (pool is None or not in_pool(configs, pool).any()):
            raise ValueError("shared scheme but no observation comes from the shared pool")
        obs = [obs[i] for i in choose_admitted(configs, scheme, pool, seed, obs[0].workload_id)]
    return e.encode(np.array([o.metrics for o in obs])).mean(axis=0)


class Regressor:
    """FC network ``f(z || v)`` predicting min-max scaled latency."""

    def __init__(self, net: MLP, embedder: Embedder, scaler: ScalerStats, finetune: bool = False):
        self.net = net
        self.embedder = embedder
        self.scaler = scaler
        self.finetune = finetune

    @property
    def k(self) -> int:
        return self.net.sizes[0] - self.s

    @property
    def s(self) -> int:
        return len(self.scaler.knob_names)

    def predict_scaled(self, z, configs) -> np.ndarray:
        configs = np.atleast_2d(np.asarray(configs, dtype=np.float64))
        z = np.asarray(z, dtype=np.float64)
        if z.shape[-1] != self.k or configs.shape[1] != self.s:
            raise ValueError(f"expected z of length {self.k} and configs of length {self.s}, "
                             f"got {z.shape} and {configs.shape}")
        z = np.broadcast_to(z, (configs.shape[0], self.k))
        return self.net(Tensor(np.hstack([z, configs]))).data[:, 0]

    def predict(self, z, configs) -> np.ndarray:
        return self.scaler.unscale_latency(self.predict_scaled(z, configs))

    def to_json(self) -> dict:
        return {"schema_version": 1, "net": mlp_to_json(self.net), "finetune": self.finetune,
                "embedder_kind": self.embedder.kind, "scaler_id": self.scaler.fingerprint()}

    @classmethod
    def from_json(cls, doc: dict, embedder: Embedder, scaler: ScalerStats) -> "Regressor":
        if doc["scaler_id"] != scaler.fingerprint():
            raise ValueError("regressor artifact was trained against a different scaler")
        return cls(mlp_from_json(doc["net"]), embedder, scaler, bool(doc["finetune"]))


def predict_latency(r: Regressor, z, v) -> np.ndarray | float:
    """Latency in seconds for scaled configuration(s) ``v`` of a workload encoded as ``z``."""
    single = np.asarray(v).ndim == 1
    out = r.predict(z, v)
    return float(out[0]) if single else out


def workload_centroids(e: Embedder, train: TraceSet) -> tuple[np.ndarray, np.ndarray]:
    """Per-workload mean encoding over all its rows, and each row's workload index."""
    ids = train.workloads()
    which = np.empty(len(train), dtype=int)
    for j, w in enumerate(ids):
        which[train.rows_of(w)] = j
    z = e.encode(train.metrics)
    cents = np.zeros((len(ids), z.shape[1]))
    np.add.at(cents, which, z)
    cents /= np.bincount(which)[:, None]
    return cents, which


def regressor_loss(net: MLP, z: Tensor, v: np.ndarray, y: np.ndarray) -> Tensor:
    return (net(concat([z, Tensor(v)], axis=1))[:, 0] - y).square().mean()


def train_regressor(e: Embedder, train: TraceSet, scaler: ScalerStats, hyper: Hyper,
                    finetune: bool | None = None) -> Regressor:
    """Fit ``f`` on training-workload centroids; optionally fine-tune the encoder too."""
    finetune = hyper.finetune if finetune is None else finetune
    if e.scaler_id is not None and e.scaler_id != scaler.fingerprint():
        raise ValueError("embedder was trained with a different scaler")
    if train.p != e.p:
        raise ValueError(f"embedder expects {e.p} metrics, training set has {train.p}")
    y = scaler.scale_latency(train.latency)
    v = train.configs
    rng = np.random.default_rng([hyper.seed, 2])
    net = MLP([e.k + train.s, *hyper.reg_hidden, 1], int(rng.integers(2**31 - 1)),
              hidden=hyper.activation, name="regressor")
    batches = row_batches(len(train), hyper.reg_batch_size, hyper.seed + 1)
    tune = finetune and e.trainable
    if tune:
        cents, which = workload_centroids(e, train)
        counts = np.bincount(which)
        averaging = np.zeros((len(counts), len(train)))
        averaging[which, np.arange(len(train))] = 1.0 / counts[which]
        x_all = Tensor(train.metrics)
        avg = Tensor(averaging)

        def step(rows):
            cent = avg @ e.encode_graph(x_all)
            return regressor_loss(net, cent[which[rows]], v[rows], y[rows])

        params = net.parameters() + e.parameters()
    else:
        cents, which = workload_centroids(e, train)

        def step(rows):
            return regressor_loss(net, Tensor(cents[which[rows]]), v[rows], y[rows])

        params = net.parameters()
    history = fit_loop(params, hyper.reg_epochs, hyper.reg_lr, batches, step, label="regressor")
    reg = Regressor(net, e, scaler, tune)
    reg.history = history
    return reg
