"""Acceptance suite: one PASS/FAIL line per criterion at pinned tolerances.

Run ``pytest tests/test_acceptance.py -v -s`` to see the verdict lines; they
are also written to the terminal when output is captured.
"""

import itertools
import time

import numpy as np
import pytest

from workembed.cli import main
from workembed.embedders import (contractive_penalty, custom_ae_loss, embedding_loss, gaussian_kl,
                                 hybrid1_loss, hybrid2_loss, kpca, pca, snn_loss, triplet_loss,
                                 vae_loss)
from workembed.embedders.autoencoders import build_vae
from workembed.evalharness import evaluate_pipeline, mape, score_scheme
from workembed.hyper import for_method
from workembed.nn import MLP, Tensor, grad_check, param
from workembed.pipeline import fit_pipeline
from workembed.predictor import ALL_SCHEMES, AdmissionScheme, regressor_loss
from workembed.synthbench import SynthSpec, generate
from workembed.traces import apply_scaler, fit_scaler, split_workloads
from workembed.tuner import recommend, tuning_study

GRAD_TOL = 1e-4
GRAD_INSTANCES = 20
EXACT_TOL = 1e-9
EIGEN_TOL = 1e-8
C5_SEEDS = range(5)
C5_RUNS = 3
C5_RELATIVE_GAIN = 0.30
C7_FOLDS = 5
C7_MIN_IMPROVEMENT = 0.15


@pytest.fixture
def verdict(capsys):
    def emit(n, ok, detail):
        with capsys.disabled():
            print(f"\ncriterion {n}: {'PASS' if ok else 'FAIL'} ({detail})")
        return ok
    return emit


# -- 1. gradient correctness ------------------------------------------------------

def _grad_cases(rng):
    """One freshly drawn small instance of every loss."""
    x, v = rng.random((4, 5)), rng.random((4, 2))
    enc, dec = MLP([5, 6, 4], int(rng.integers(1 << 30))), MLP([4, 6, 5], int(rng.integers(1 << 30)))
    yield "custom_ae", lambda: custom_ae_loss(enc, dec, x, v, 0.7), enc.parameters() + dec.parameters()

    enc_c, dec_c = MLP([5, 6, 4], int(rng.integers(1 << 30))), MLP([4, 6, 5], int(rng.integers(1 << 30)))
    yield ("contractive", lambda: custom_ae_loss(enc_c, dec_c, x, v, 0.7, 0.3),
           enc_c.parameters() + dec_c.parameters())

    from workembed.hyper import Hyper
    enc_v, dec_v = build_vae(5, Hyper(k=2, hidden=(6,)), int(rng.integers(1 << 30)))
    eps = rng.normal(size=(4, 2))
    yield "beta_vae", lambda: vae_loss(enc_v, dec_v, x, eps, 0.5), enc_v.parameters() + dec_v.parameters()

    za, zp, zn = (param(rng.normal(size=(3, 2))) for _ in range(3))
    # a large margin keeps every triplet on the differentiable side of the hinge
    yield "triplet", lambda: triplet_loss(za, zp, zn, 50.0).mean(), [za, zp, zn]

    xs = tuple(rng.random((3, 5)) for _ in range(3))
    vs = tuple(rng.random((3, 2)) for _ in range(3))
    enc_h, dec_h = MLP([5, 6, 5], int(rng.integers(1 << 30))), MLP([5, 6, 5], int(rng.integers(1 << 30)))
    yield ("hybrid1", lambda: hybrid1_loss(enc_h, dec_h, xs, vs, 50.0, 0.3, 0.2),
           enc_h.parameters() + dec_h.parameters())

    enc_s, dec_s = MLP([5, 6, 2], int(rng.integers(1 << 30))), MLP([2, 6, 5], int(rng.integers(1 << 30)))
    yield ("hybrid2", lambda: hybrid2_loss(enc_s, dec_s, x, ["a", "a", "b", "b"], [0, 1, 0, 1], 0.5, 1.0),
           enc_s.parameters() + dec_s.parameters())

    z = param(rng.normal(size=(2, 3)))
    net = MLP([5, 4, 1], int(rng.integers(1 << 30)))
    y = rng.random(4)
    yield "embedding", lambda: embedding_loss(z, net, np.array([0, 1, 1, 0]), v, y), [z] + net.parameters()

    reg = MLP([5, 4, 1], int(rng.integers(1 << 30)))
    zc = rng.random((4, 3))
    yield "regressor", lambda: regressor_loss(reg, Tensor(zc), v, y), reg.parameters()


def test_criterion_1_gradients(verdict):
    start = time.perf_counter()
    rng = np.random.default_rng(2024)
    worst = {}
    for _ in range(GRAD_INSTANCES):
        for name, f, params in _grad_cases(rng):
            worst[name] = max(worst.get(name, 0.0), grad_check(f, params))
    elapsed = time.perf_counter() - start
    ok = all(w < GRAD_TOL for w in worst.values()) and len(worst) == 8 and elapsed < 120
    detail = ", ".join(f"{k}={v:.1e}" for k, v in worst.items())
    assert verdict(1, ok, f"max rel err {detail}; {GRAD_INSTANCES} instances each; {elapsed:.1f}s")


# -- 2. closed-form identities -------------------------------------------------------

def test_criterion_2_closed_forms(verdict):
    t = lambda v: Tensor(np.asarray(v, dtype=float))  # noqa: E731
    errs = [
        abs(triplet_loss(t([0, 0]), t([0, 0]), t([0, 0]), 0.5).item() - 0.5),
        abs(triplet_loss(t([0, 0]), t([1, 0]), t([2, 0]), 0.5).item() - 0.0),
        abs(triplet_loss(t([0, 0]), t([1, 0]), t([1, 0]), 0.5).item() - 0.5),
        abs(gaussian_kl(t([[1.0]]), t([[0.0]])).data[0] - 0.5),
        abs(gaussian_kl(t([[1.0, 1.0, 1.0]]), t([[0.0, 0.0, 0.0]])).data[0] - 1.5),
        abs(mape([2, 2], [1, 4]) - 75.0),
    ]
    rng = np.random.default_rng(0)
    for _ in range(5):
        enc = MLP([6, 4], int(rng.integers(1 << 30)), output="identity")
        w = enc.layers[0].weight.data
        pen = contractive_penalty(enc, rng.random((3, 6)), slice(1, 4)).data
        errs.append(float(np.abs(pen - (w[:, 1:4] ** 2).sum()).max()))
    worst = max(errs)
    assert verdict(2, worst < EXACT_TOL, f"max abs deviation {worst:.1e} over {len(errs)} identities")


# -- 3. oracle equivalences ------------------------------------------------------------

def _snn_oracle(z, w, c, temperature):
    total = 0.0
    for i in range(len(z)):
        num = sum(np.exp(-np.sum((z[i] - z[j]) ** 2) / temperature)
                  for j in range(len(z)) if j != i and w[i] == w[j] and c[i] != c[j])
        den = sum(np.exp(-np.sum((z[i] - z[j]) ** 2) / temperature)
                  for j in range(len(z)) if w[i] != w[j] and c[i] != c[j])
        total -= np.log(num / den)
    return total / len(z)


class _Hook:
    def __init__(self, fn):
        self.fn = fn

    def predict(self, z, configs):
        return self.fn(configs)


def test_criterion_3_oracles(verdict):
    from workembed.traces import Observation
    from workembed.tuner import KnobSpace
    rng = np.random.default_rng(7)
    eig_err = 0.0
    for _ in range(10):
        p = int(rng.integers(2, 9))
        x = rng.normal(size=(int(rng.integers(p + 1, 20)), p))
        model = pca(x, p)
        ref_vals, ref_vecs = np.linalg.eigh(np.cov(x, rowvar=False))
        ref_vals, ref_vecs = ref_vals[::-1], ref_vecs[:, ::-1]
        eig_err = max(eig_err, np.abs(model.eigenvalues - ref_vals).max())
        for j in range(p):
            s = np.sign(model.components[:, j] @ ref_vecs[:, j])
            eig_err = max(eig_err, np.abs(model.components[:, j] - s * ref_vecs[:, j]).max())

        n = int(rng.integers(4, 9))
        xk = rng.normal(size=(n, p))
        gamma = float(rng.uniform(0.05, 0.5))
        km, _ = kpca(xk, 2, gamma)
        kern = np.exp(-gamma * ((xk[:, None] - xk[None]) ** 2).sum(-1))
        one = np.full((n, n), 1.0 / n)
        kc = kern - one @ kern - kern @ one + one @ kern @ one
        kv, kvec = np.linalg.eigh(kc)
        kv, kvec = kv[::-1][:2], kvec[:, ::-1][:, :2]
        eig_err = max(eig_err, np.abs(km.eigenvalues - kv).max())
        unit = km.alphas * np.sqrt(km.eigenvalues)
        for j in range(2):
            s = np.sign(unit[:, j] @ kvec[:, j])
            eig_err = max(eig_err, np.abs(unit[:, j] - s * kvec[:, j]).max())

    tuner_ok = True
    for _ in range(50):
        cands = [tuple(np.round(rng.random(int(rng.integers(1, 4))), 1)) for _ in range(3)]
        ks = KnobSpace(("a", "b", "c"), ("resource", "shuffle", "sql"), cands)
        w = rng.normal(size=3)
        fn = lambda c: np.round((np.atleast_2d(c) * w).sum(axis=1), 1)  # noqa: E731
        rec = recommend(_Hook(fn), None, ks, Observation("w", "t", np.zeros(3), np.zeros(1), 1.0))
        best = min(itertools.product(*cands), key=lambda combo: (fn(np.array(combo))[0], combo))
        tuner_ok &= tuple(rec.config) == best

    snn_err = 0.0
    hand = np.array([[0.0, 0.0], [0.0, 1.0], [3.0, 0.0], [3.0, 1.0]])
    batches = [(hand, ["a", "a", "b", "b"], [0, 1, 0, 1], 1.0)]
    for _ in range(10):
        batches.append((rng.normal(size=(6, 2)), list("aabbcc"), [0, 1, 0, 1, 0, 1], float(rng.uniform(0.5, 2))))
    for z, w, c, temp in batches:
        snn_err = max(snn_err, abs(snn_loss(Tensor(z), w, c, temp).item() - _snn_oracle(z, w, c, temp)))

    ok = eig_err < EIGEN_TOL and tuner_ok and snn_err < EXACT_TOL
    assert verdict(3, ok, f"eigen err {eig_err:.1e}, tuner argmin matches={tuner_ok}, snn err {snn_err:.1e}")


# -- 4. invariance property --------------------------------------------------------------

def _intra_inter(z, ids):
    sq = (z ** 2).sum(1)
    d = np.sqrt(np.maximum(sq[:, None] + sq[None] - 2 * z @ z.T, 0.0))
    same = ids[:, None] == ids[None]
    off = ~np.eye(len(z), dtype=bool)
    return d[same & off].mean() / d[~same].mean()


@pytest.mark.slow
def test_criterion_4_invariance(verdict):
    from workembed.embedders import train_siamese
    ts, _ = generate(SynthSpec(noise_std=0.0))
    train, _ = split_workloads(ts, 0.25, 0)
    scaled = apply_scaler(fit_scaler(train), train)
    ids = np.asarray(scaled.workload_ids)
    hyper = for_method("siamese")
    before = _intra_inter(train_siamese(scaled, hyper.updated({"epochs": 0})).encode(scaled.metrics), ids)
    after = _intra_inter(train_siamese(scaled, hyper).encode(scaled.metrics), ids)
    raw = _intra_inter(scaled.metrics, ids)
    ok = after < before and after < raw
    assert verdict(4, ok, f"ratio trained {after:.3f}, untrained {before:.3f}, raw metrics {raw:.3f}")


# -- 5. comparative ordering ---------------------------------------------------------------

@pytest.mark.slow
def test_criterion_5_ordering(verdict):
    start = time.perf_counter()
    a1, s5 = AdmissionScheme("arbitrary", 1), AdmissionScheme("shared", 5)
    res = {("identity", a1): [], ("siamese", a1): [], ("siamese", s5): []}
    for seed in C5_SEEDS:
        ts, _ = generate(SynthSpec(seed=seed))
        train, test = split_workloads(ts, 0.25, seed)
        for method in ("identity", "siamese"):
            pipe = fit_pipeline(method, train, for_method(method, {"seed": seed}))
            scaled = pipe.scale(test)
            for (m, scheme), vals in res.items():
                if m == method:
                    vals.append(np.mean([evaluate_pipeline(pipe, scaled, scheme, r).mape
                                         for r in range(C5_RUNS)]))
    ident, siam, siam_s5 = (float(np.mean(v)) for v in res.values())
    elapsed = time.perf_counter() - start
    ok = siam <= (1 - C5_RELATIVE_GAIN) * ident and siam <= 2 * siam_s5 and elapsed < 1800
    assert verdict(5, ok, f"arbitrary/1 MAPE siamese {siam:.1f}% vs identity {ident:.1f}% "
                          f"(ratio {siam / ident:.2f}); siamese shared/5 {siam_s5:.1f}%; "
                          f"{len(C5_SEEDS)} seeds; {elapsed:.0f}s")


# -- 6. leakage guards -------------------------------------------------------------------------

def test_criterion_6_leakage(verdict, monkeypatch):
    ts, gt = generate(SynthSpec(n_templates=4, workloads_per_template=3, k_true=2, s=3, p=8,
                                configs_per_workload=12, shared_config_count=5, seed=5))
    train, test = split_workloads(ts, 0.25, 5)
    checks = {"disjoint workloads": not set(train.workloads()) & set(test.workloads())}

    seen = []
    original = MLP.__call__

    def spy(self, x):
        seen.append(np.array(x.data, copy=True))
        return original(self, x)
    monkeypatch.setattr(MLP, "__call__", spy)
    hyper = for_method("siamese", {"epochs": 3, "reg_epochs": 3})
    pipes = {m: fit_pipeline(m, train, hyper) for m in ("siamese", "custom_ae", "hybrid2", "embedding")}
    monkeypatch.setattr(MLP, "__call__", original)

    scaler = pipes["siamese"].scaler
    ref = fit_scaler(train)
    checks["scaler fitted on train only"] = all(
        np.array_equal(getattr(scaler, f), getattr(ref, f))
        for f in ("knob_min", "knob_max", "metric_min", "metric_max")) and \
        scaler.latency_min == ref.latency_min and scaler.latency_max == ref.latency_max

    test_rows = {apply_scaler(scaler, test).metrics[i].tobytes() for i in range(len(test))}
    fed = {row.tobytes() for arr in seen if arr.ndim == 2 and arr.shape[1] == scaler.retained_metrics
           for row in arr}
    checks["no test metrics in training batches"] = bool(fed) and not (test_rows & fed)

    scaled = apply_scaler(scaler, test)
    disjoint = True
    for scheme in ALL_SCHEMES:
        res = score_scheme(lambda t, rows: 0, lambda z, c: np.ones(len(c)), scaled, scheme,
                           pipes["siamese"].pool, seed=1)
        disjoint &= all(np.intersect1d(res.admitted[w], res.scored[w]).size == 0 for w in res.admitted)
    checks["admission rows never scored"] = disjoint
    ok = all(checks.values())
    assert verdict(6, ok, "; ".join(f"{k}={v}" for k, v in checks.items()))


# -- 7. end-to-end tuning -------------------------------------------------------------------

@pytest.mark.slow
def test_criterion_7_tuning(verdict):
    start = time.perf_counter()
    ts, gt = generate(SynthSpec(seed=0))
    ids = ts.workloads()
    order = np.random.default_rng(0).permutation(len(ids))
    outcomes = []
    # rotate held-out folds so that every workload is tuned once as a test workload
    for f in range(C7_FOLDS):
        held = [ids[i] for i in order[f::C7_FOLDS]]
        pipe = fit_pipeline("siamese", ts.select_workloads([w for w in ids if w not in held]))
        outcomes += tuning_study(pipe, ts.select_workloads(held), gt, seed=0)
    model = float(np.mean([o.model_improvement for o in outcomes]))
    oracle = [o.oracle_improvement for o in outcomes]
    optimal = [o.optimal_improvement for o in outcomes]
    exact = oracle == optimal
    elapsed = time.perf_counter() - start
    ok = len(outcomes) >= 30 and model > C7_MIN_IMPROVEMENT and exact
    assert verdict(7, ok, f"{len(outcomes)} test workloads; mean improvement siamese {model:.3f}, "
                          f"oracle {np.mean(oracle):.3f}, grid optimum {np.mean(optimal):.3f}, "
                          f"oracle exact={exact}; {elapsed:.0f}s")


# -- 8. reproducibility -----------------------------------------------------------------------

def _snapshot(root):
    return {str(p.relative_to(root)): p.read_bytes() for p in sorted(root.rglob("*")) if p.is_file()}


def _run_all(root):
    import json
    root.mkdir(parents=True, exist_ok=True)
    spec = root / "spec.json"
    spec.write_text(json.dumps({"n_templates": 3, "workloads_per_template": 3, "k_true": 2, "s": 3,
                                "p": 6, "configs_per_workload": 12, "shared_config_count": 5,
                                "seed": 9}))
    fast = ["--set", "epochs=5", "--set", "reg_epochs=5", "--set", "hidden=8", "--set", "reg_hidden=8"]
    cmds = [
        ["generate", "--spec", str(spec), "--out", str(root / "gen")],
        ["split", "--traces", str(root / "gen/traces.csv"), "--seed", "1", "--out", str(root / "split")],
        ["train", "--traces", str(root / "split/train.csv"), "--method", "siamese", *fast,
         "--out", str(root / "model")],
        ["evaluate", "--model", str(root / "model"), "--traces", str(root / "split/test.csv"),
         "--runs", "2", "--out", str(root / "eval")],
        ["sweep", "--traces", str(root / "split/train.csv"), "--test", str(root / "split/test.csv"),
         "--methods", "identity,pca,embedding", "--runs", "1", "--out", str(root / "sweep")],
        ["recommend", "--model", str(root / "model"), "--traces", str(root / "split/test.csv"),
         "--knobspace", str(root / "gen/knobspace.json"), "--row", "3", "--out", str(root / "rec")],
    ]
    codes = [main(c) for c in cmds]
    return codes, [c[0] for c in cmds]


def test_criterion_8_reproducibility(verdict, tmp_path):
    # identical paths: run_config.json echoes them, so rerun in place after snapshotting
    root = tmp_path / "run"
    codes_a, names = _run_all(root)
    first = _snapshot(root)
    codes_b, _ = _run_all(root)
    second = _snapshot(root)
    differing = sorted(k for k in first if first[k] != second.get(k))
    per_command = {n: any(k.startswith(d) for k in first) for n, d in
                   zip(names, ("gen", "split", "model", "eval", "sweep", "rec"))}
    ok = codes_a == codes_b == [0] * len(names) and not differing and set(first) == set(second) \
        and all(per_command.values())
    assert verdict(8, ok, f"{len(first)} artifacts from {len(names)} commands, "
                          f"{len(differing)} differ on rerun")
