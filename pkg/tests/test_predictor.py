import json

import numpy as np
import pytest

from conftest import FAST
from workembed.embedders import IdentityEmbedder, train_embedder
from workembed.nn import grad_check
from workembed.pipeline import NotAdmissible, Pipeline, fit_pipeline
from workembed.predictor import (ALL_SCHEMES, AdmissionScheme, Regressor, choose_admitted,
                                 extract_workload_encoding, in_pool, predict_latency,
                                 regressor_loss, select_admission, train_regressor,
                                 workload_centroids)
from workembed.nn import MLP, Tensor
from workembed.traces import Observation, TraceSet, fit_scaler, shared_configs


def obs(w, cfg, metrics, lat=1.0):
    return Observation(w, "t", np.asarray(cfg, float), np.asarray(metrics, float), lat)


def test_scheme_validation_and_labels():
    assert [s.label for s in ALL_SCHEMES] == ["shared/5", "shared/1", "arbitrary/5", "arbitrary/1"]
    with pytest.raises(ValueError):
        AdmissionScheme("shared", 3)
    with pytest.raises(ValueError):
        AdmissionScheme("random", 1)


def test_centroid_of_two_encodings():
    e = IdentityEmbedder(2)
    z = extract_workload_encoding(e, [obs("w", [0], [0, 0]), obs("w", [1], [2, 2])])
    np.testing.assert_array_equal(z, [1.0, 1.0])


def test_single_observation_equals_its_encoding(small):
    _, _, _, scaled = small
    e, _ = train_embedder("siamese", scaled, FAST)
    o = scaled.observation(0)
    np.testing.assert_array_equal(extract_workload_encoding(e, [o]), e.encode(o.metrics[None])[0])


def test_extract_errors():
    e = IdentityEmbedder(2)
    with pytest.raises(ValueError, match="several workloads"):
        extract_workload_encoding(e, [obs("a", [0], [0, 0]), obs("b", [0], [1, 1])])
    with pytest.raises(ValueError):
        extract_workload_encoding(e, [])
    with pytest.raises(ValueError, match="shared"):
        extract_workload_encoding(e, [obs("a", [0], [0, 0])], AdmissionScheme("shared", 1), pool=[[9.0]])


def test_extract_with_scheme_selects_from_pool():
    e = IdentityEmbedder(2)
    o = [obs("a", [0], [0, 0]), obs("a", [1], [4, 4]), obs("a", [2], [8, 8])]
    z = extract_workload_encoding(e, o, AdmissionScheme("shared", 1), pool=[[1.0]], seed=0)
    np.testing.assert_array_equal(z, [4, 4])
    z = extract_workload_encoding(e, o, AdmissionScheme("arbitrary", 1), pool=[[1.0]], seed=0)
    assert z.tolist() in ([0, 0], [8, 8])


def test_admission_draws_are_seeded_and_disjoint_from_pool(small):
    _, _, _, scaled = small
    pool = np.array(shared_configs(scaled))
    for w in scaled.workloads():
        a = select_admission(scaled, w, AdmissionScheme("arbitrary", 5), pool, 7)
        assert np.array_equal(a, select_admission(scaled, w, AdmissionScheme("arbitrary", 5), pool, 7))
        assert not in_pool(scaled.configs[a], pool).any()
        s = select_admission(scaled, w, AdmissionScheme("shared", 1), pool, 7)
        assert in_pool(scaled.configs[s], pool).all()
    with pytest.raises(ValueError, match="needs 5"):
        choose_admitted(np.zeros((3, 1)), AdmissionScheme("arbitrary", 5), [], 0)


def test_identity_centroid_is_mean_raw_metrics(small):
    _, _, _, scaled = small
    e = IdentityEmbedder(scaled.p)
    cents, which = workload_centroids(e, scaled)
    for j, w in enumerate(scaled.workloads()):
        np.testing.assert_allclose(cents[j], scaled.metrics[scaled.rows_of(w)].mean(axis=0), atol=1e-15)


def test_frozen_encoder_is_untouched(small):
    _, _, scaler, scaled = small
    e, _ = train_embedder("siamese", scaled, FAST, scaler.fingerprint())
    before = [p.data.copy() for p in e.parameters()]
    r = train_regressor(e, scaled, scaler, FAST, finetune=False)
    assert not r.finetune
    assert all(np.array_equal(b, p.data) for b, p in zip(before, e.parameters()))


def test_finetune_moves_the_encoder(small):
    _, _, scaler, scaled = small
    e, _ = train_embedder("siamese", scaled, FAST, scaler.fingerprint())
    before = [p.data.copy() for p in e.parameters()]
    r = train_regressor(e, scaled, scaler, FAST, finetune=True)
    assert r.finetune
    assert any(not np.array_equal(b, p.data) for b, p in zip(before, e.parameters()))


def test_constant_latency_regressor():
    rng = np.random.default_rng(0)
    ids = [f"w{i // 6}" for i in range(24)]
    lat = np.full(24, 3.0)
    lat[0], lat[1] = 1.0, 5.0  # the scaler needs a non-degenerate range
    full = TraceSet(ids, ids, rng.random((24, 2)), rng.random((24, 3)), lat, ("a", "b"), ("x", "y", "z"))
    scaler = fit_scaler(full)
    ts = full.subset(np.arange(2, 24))
    e = IdentityEmbedder(ts.p)
    r = train_regressor(e, ts, scaler, FAST.updated({"reg_epochs": 5000, "reg_lr": 3e-2, "reg_batch_size": 64}))
    cents, which = workload_centroids(e, ts)
    pred = np.array([r.predict_scaled(cents[j], ts.configs[i])[0] for i, j in enumerate(which)])
    # Adam with a fixed step leaves a small residual wobble at the tails
    assert np.abs(pred - 0.5).mean() < 1e-3
    assert np.abs(pred - 0.5).max() < 5e-3


def test_scaler_mismatch_rejected(small):
    ts, _, scaler, scaled = small
    e, _ = train_embedder("pca", scaled, FAST, "other-scaler")
    with pytest.raises(ValueError, match="different scaler"):
        train_regressor(e, scaled, scaler, FAST)


def test_prediction_dimension_checks_and_determinism(small):
    _, _, scaler, scaled = small
    e = IdentityEmbedder(scaled.p)
    r = train_regressor(e, scaled, scaler, FAST)
    z = scaled.metrics[0]
    v = scaled.configs[0]
    assert predict_latency(r, z, v) == predict_latency(r, z, v)
    assert isinstance(predict_latency(r, z, v), float)
    assert predict_latency(r, z, scaled.configs).shape == (len(scaled),)
    with pytest.raises(ValueError):
        r.predict(z[:-1], v)
    with pytest.raises(ValueError):
        r.predict(z, np.append(v, 0.0))


def test_regressor_round_trip(small):
    _, _, scaler, scaled = small
    e = IdentityEmbedder(scaled.p)
    r = train_regressor(e, scaled, scaler, FAST)
    back = Regressor.from_json(json.loads(json.dumps(r.to_json())), e, scaler)
    z = scaled.metrics[0]
    np.testing.assert_array_equal(back.predict(z, scaled.configs), r.predict(z, scaled.configs))
    other = fit_scaler(scaled)
    with pytest.raises(ValueError):
        Regressor.from_json(r.to_json(), e, other)


def test_regressor_gradient(rng):
    net = MLP([5, 6, 1], seed=0)
    z, v, y = rng.random((4, 3)), rng.random((4, 2)), rng.random(4)
    assert grad_check(lambda: regressor_loss(net, Tensor(z), v, y), net.parameters()) < 1e-4


def test_pipeline_save_load_round_trip(small, tmp_path):
    ts, _, _, _ = small
    for method in ("siamese", "embedding"):
        pipe = fit_pipeline(method, ts, FAST)
        pipe.save(tmp_path / method)
        back = Pipeline.load(tmp_path / method)
        scaled = pipe.scale(ts)
        rows = scaled.rows_of(scaled.workloads()[0])
        z1, z2 = pipe.admit(scaled, rows), back.admit(scaled, rows)
        np.testing.assert_array_equal(z1, z2)
        np.testing.assert_array_equal(pipe.predict(z1, scaled.configs), back.predict(z2, scaled.configs))


def test_pipeline_admission_rules(small):
    ts, _, _, _ = small
    pipe = fit_pipeline("embedding", ts, FAST)
    scaled = pipe.scale(ts)
    rows = scaled.rows_of(scaled.workloads()[0])
    with pytest.raises(NotAdmissible):
        pipe.admit(scaled, rows[:1])
    with pytest.raises(ValueError, match="several workloads"):
        pipe.admit(scaled, [0, len(scaled) - 1])
    with pytest.raises(NotAdmissible):
        pipe.encode(scaled.metrics)
