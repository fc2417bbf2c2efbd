import itertools
import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import FAST
from workembed.pipeline import fit_pipeline
from workembed.synthbench import true_latencies
from workembed.traces import Observation
from workembed.tuner import (GridTooLarge, KnobSpace, OracleModel, enumerate_grid, grid_array,
                             improvement, rank, recommend, tuning_study)


def space(*cands):
    n = len(cands)
    return KnobSpace(tuple(f"k{i}" for i in range(n)), ("resource",) * n,
                     tuple(tuple(float(x) for x in c) for c in cands))


def initial(cfg, lat=1.0):
    return Observation("w", "t", np.asarray(cfg, float), np.zeros(1), lat)


class Hook:
    """Prediction hook backed by a plain function of the config rows."""

    def __init__(self, fn):
        self.fn = fn

    def predict(self, z, configs):
        return self.fn(np.atleast_2d(configs))


def test_two_by_three_grid_order():
    got = [tuple(c) for c in enumerate_grid(space([0, 1], [0, 1, 2]))]
    assert got == [(0, 0), (0, 1), (0, 2), (1, 0), (1, 1), (1, 2)]
    np.testing.assert_array_equal(grid_array(space([0, 1], [0, 1, 2])), np.array(got))


def test_single_candidate_grid():
    assert [c.tolist() for c in enumerate_grid(space([0.3]))] == [[0.3]]


@settings(max_examples=30, deadline=None)
@given(st.lists(st.integers(1, 4), min_size=1, max_size=4))
def test_grid_count_and_uniqueness(lengths):
    ks = space(*[range(n) for n in lengths])
    rows = [tuple(c) for c in enumerate_grid(ks)]
    assert len(rows) == int(np.prod(lengths)) == ks.size
    assert len(set(rows)) == len(rows)
    assert rows == sorted(rows)
    np.testing.assert_array_equal(grid_array(ks), np.array(rows))


def test_grid_cap():
    ks = space(range(10), range(10), range(10))
    with pytest.raises(GridTooLarge, match="fewer candidates"):
        list(enumerate_grid(ks, cap=999))
    with pytest.raises(GridTooLarge):
        grid_array(ks, cap=999)


def test_knobspace_validation_and_json():
    with pytest.raises(ValueError):
        KnobSpace(("a",), ("resource",), ((),))
    with pytest.raises(ValueError):
        KnobSpace(("a",), ("memory",), ((1.0,),))
    with pytest.raises(ValueError):
        KnobSpace(("a", "b"), ("resource",), ((1.0,),))
    with pytest.raises(ValueError):
        KnobSpace.from_json({"nope": []})
    ks = space([0, 0.5], [1])
    assert KnobSpace.from_json(json.loads(json.dumps(ks.to_json()))) == ks


@pytest.mark.parametrize("initial_latency,new,expected", [(100, 47.6, 0.524), (100, 100, 0.0), (100, 120, -0.2)])
def test_improvement(initial_latency, new, expected):
    assert improvement(initial_latency, new) == pytest.approx(expected)


def test_improvement_rejects_non_positive():
    with pytest.raises(ValueError):
        improvement(0, 1)
    with pytest.raises(ValueError):
        improvement(1, -1)


def brute_force(fn, ks):
    best = None
    for combo in itertools.product(*ks.candidates):
        val = fn(np.array([combo]))[0]
        if best is None or val < best[0] or (val == best[0] and combo < best[1]):
            best = (val, combo)
    return best


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10_000))
def test_recommend_matches_brute_force(seed):
    rng = np.random.default_rng(seed)
    ks = space(*[np.round(rng.random(rng.integers(1, 4)), 1) for _ in range(3)])
    w = rng.normal(size=3)
    fn = lambda c: np.round((c * w).sum(axis=1), 1) + 5.0  # noqa: E731  rounding creates ties
    rec = recommend(Hook(fn), None, ks, initial(np.array([c[0] for c in ks.candidates])))
    val, combo = brute_force(fn, ks)
    assert tuple(rec.config) == combo
    assert rec.predicted_latency == val
    assert rec.predicted_latency <= fn(rec.initial_config[None])[0]
    assert rec.grid_size == ks.size


def test_ties_break_to_smallest_config():
    ks = space([0, 1], [0, 1])
    rec = recommend(Hook(lambda c: np.ones(len(c))), None, ks, initial([1, 1]))
    assert rec.config.tolist() == [0, 0]
    assert [c.tolist() for c, _ in rec.top] == [[0, 0], [0, 1], [1, 0], [1, 1]]


@settings(max_examples=30, deadline=None)
@given(st.floats(0.01, 100), st.floats(-100, 100))
def test_affine_transform_leaves_argmin(scale, shift):
    ks = space([0, 0.25, 0.5, 1], [0, 1], [0.1, 0.9])
    fn = lambda c: np.sin(3 * c).sum(axis=1) + c[:, 0] * c[:, 2]  # noqa: E731
    a = recommend(Hook(fn), None, ks, initial([0, 0, 0.1]))
    b = recommend(Hook(lambda c: scale * fn(c) + shift), None, ks, initial([0, 0, 0.1]))
    np.testing.assert_array_equal(a.config, b.config)


def test_non_finite_predictions_skipped():
    ks = space([0, 1, 2])
    rec = recommend(Hook(lambda c: np.array([np.nan, np.inf, 3.0])), None, ks, initial([0]))
    assert rec.config.tolist() == [2.0] and rec.skipped == 2
    with pytest.raises(FloatingPointError):
        recommend(Hook(lambda c: np.full(len(c), np.nan)), None, ks, initial([0]))


def test_rank_orders_finite_rows():
    grid = np.array([[1.0], [0.0], [2.0]])
    assert rank(np.array([1.0, 1.0, np.nan]), grid).tolist() == [1, 0]


def test_recommend_is_deterministic_and_serializes(small):
    ts, _, _, _ = small
    pipe = fit_pipeline("siamese", ts, FAST)
    scaled = pipe.scale(ts)
    ks = KnobSpace.from_traces(scaled, ["resource"] * scaled.s)
    o = scaled.observation(0)
    z = pipe.admit(scaled, [0])
    a = recommend(pipe, z, ks, o, top_m=3)
    b = recommend(pipe, z, ks, o, top_m=3)
    assert a.dumps() == b.dumps()
    doc = json.loads(a.dumps(pipe.scaler))
    assert set(doc) >= {"config", "predicted_latency", "initial_config", "initial_latency",
                        "grid_size", "top", "config_raw", "knob_names"}
    assert len(doc["top"]) == 3
    assert doc["predicted_latency"] == pytest.approx(float(pipe.predict(z, a.config[None])[0]))


def test_oracle_recommendation_is_true_argmin(small):
    _, gt, scaler, scaled = small
    ks = KnobSpace.from_ground_truth(gt, scaler)
    grid = grid_array(ks)
    for w in scaled.workloads():
        oracle = OracleModel(gt, w, scaler)
        rec = recommend(oracle, None, ks, scaled.observation(int(scaled.rows_of(w)[0])))
        truth = true_latencies(gt, w, oracle.raw(grid))
        assert rec.predicted_latency == truth.min()
        np.testing.assert_array_equal(rec.config, grid[np.argmin(truth)])


def test_tuning_study_oracle_never_regresses(small):
    ts, gt, _, _ = small
    pipe = fit_pipeline("siamese", ts, FAST)
    outcomes = tuning_study(pipe, ts, gt, seed=0)
    assert len(outcomes) == len(ts.workloads())
    for o in outcomes:
        assert o.oracle_improvement >= 0
        assert o.oracle_latency == pytest.approx(o.optimal_latency)
        assert o.model_latency >= o.optimal_latency
