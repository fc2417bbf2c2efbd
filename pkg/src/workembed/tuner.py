"""Grid-enumeration configuration recommendation and latency improvement."""

from __future__ import annotations

import itertools
import json
from dataclasses import dataclass, field

import numpy as np

from .synthbench import GroundTruth, true_latencies
from .traces import Observation, ScalerStats, TraceSet

CATEGORIES = ("resource", "parallelism", "shuffle", "sql")
DEFAULT_GRID_CAP = 10**6


class GridTooLarge(ValueError):
    pass


@dataclass(frozen=True)
class KnobSpace:
    """Ordered candidate values per knob, in the scaled configuration domain."""

    names: tuple[str, ...]
    categories: tuple[str, ...]
    candidates: tuple[tuple[float, ...], ...]

    def __post_init__(self):
        if not (len(self.names) == len(self.categories) == len(self.candidates)):
            raise ValueError("names, categories and candidates must align")
        if not self.names:
            raise ValueError("a knob space needs at least one knob")
        for n, c, vals in zip(self.names, self.categories, self.candidates):
            if c not in CATEGORIES:
                raise ValueError(f"knob {n!r}: category must be one of {CATEGORIES}, got {c!r}")
            if len(vals) == 0:
                raise ValueError(f"knob {n!r} has no candidates")
            if not all(np.isfinite(vals)):
                raise ValueError(f"knob {n!r} has non-finite candidates")

    @property
    def s(self) -> int:
        return len(self.names)

    @property
    def size(self) -> int:
        return int(np.prod([len(c) for c in self.candidates], dtype=object))

    def to_json(self) -> dict:
        return {"knobs": [{"name": n, "category": c, "candidates": list(v)}
                          for n, c, v in zip(self.names, self.categories, self.candidates)]}

    @classmethod
    def from_json(cls, doc: dict) -> "KnobSpace":
        try:
            knobs = doc["knobs"]
            return cls(tuple(str(k["name"]) for k in knobs), tuple(str(k["category"]) for k in knobs),
                       tuple(tuple(float(x) for x in k["candidates"]) for k in knobs))
        except (KeyError, TypeError) as exc:
            raise ValueError(f"malformed knob space: {exc}") from None

    @classmethod
    def from_ground_truth(cls, gt: GroundTruth, scaler: ScalerStats) -> "KnobSpace":
        """Every generator level of every knob, mapped through ``scaler``."""
        if tuple(scaler.knob_names) != tuple(gt.knob_names):
            raise ValueError("scaler and ground truth disagree on the knob names")
        unit = np.linspace(0.0, 1.0, gt.knob_levels)
        scaled = scaler.scale_configs(gt.from_unit(np.repeat(unit[:, None], gt.s, axis=1)))
        return cls(tuple(gt.knob_names), tuple(gt.knob_categories),
                   tuple(tuple(float(x) for x in scaled[:, q]) for q in range(gt.s)))

    @classmethod
    def from_traces(cls, ts_scaled: TraceSet, categories) -> "KnobSpace":
        """Sorted distinct values seen per knob in a scaled TraceSet."""
        return cls(tuple(ts_scaled.knob_names), tuple(categories),
                   tuple(tuple(float(x) for x in np.unique(ts_scaled.configs[:, q]))
                         for q in range(ts_scaled.s)))

    def check_names(self, knob_names) -> None:
        if tuple(knob_names) != self.names:
            raise ValueError(f"knob space {list(self.names)} does not match model knobs {list(knob_names)}")


def enumerate_grid(ks: KnobSpace, cap: int = DEFAULT_GRID_CAP):
    """Every config of the grid, lexicographic over candidate indices."""
    if ks.size > cap:
        raise GridTooLarge(f"grid has {ks.size} configurations, above the cap of {cap}; "
                           "use fewer candidates per knob")
    for combo in itertools.product(*ks.candidates):
        yield np.array(combo, dtype=np.float64)


def grid_array(ks: KnobSpace, cap: int = DEFAULT_GRID_CAP) -> np.ndarray:
    """The enumerated grid as one (size, s) array, same order as ``enumerate_grid``."""
    if ks.size > cap:
        raise GridTooLarge(f"grid has {ks.size} configurations, above the cap of {cap}; "
                           "use fewer candidates per knob")
    mesh = np.meshgrid(*[np.asarray(c, dtype=np.float64) for c in ks.candidates], indexing="ij")
    return np.stack([m.reshape(-1) for m in mesh], axis=1)


def improvement(initial_latency: float, new_latency: float) -> float:
    """Fractional latency reduction 1 - new/initial; negative for a regression."""
    if not initial_latency > 0 or not new_latency > 0:
        raise ValueError("latencies must be positive")
    return 1.0 - new_latency / initial_latency


@dataclass
class Recommendation:
    config: np.ndarray
    predicted_latency: float
    initial_config: np.ndarray
    initial_latency: float
    grid_size: int
    top: list[tuple[np.ndarray, float]] = field(default_factory=list)
    skipped: int = 0

    def to_json(self, scaler: ScalerStats | None = None) -> dict:
        doc = {
            "schema_version": 1,
            "config": self.config.tolist(),
            "predicted_latency": self.predicted_latency,
            "initial_config": self.initial_config.tolist(),
            "initial_latency": self.initial_latency,
            "grid_size": self.grid_size,
            "skipped_non_finite": self.skipped,
            "top": [{"config": c.tolist(), "predicted_latency": p} for c, p in self.top],
        }
        if scaler is not None:
            doc["knob_names"] = list(scaler.knob_names)
            doc["config_raw"] = scaler.unscale_configs(self.config[None])[0].tolist()
            doc["initial_config_raw"] = scaler.unscale_configs(self.initial_config[None])[0].tolist()
            doc["top"] = [{**t, "config_raw": scaler.unscale_configs(c[None])[0].tolist()}
                          for t, (c, _) in zip(doc["top"], self.top)]
        return doc

    def dumps(self, scaler: ScalerStats | None = None) -> str:
        return json.dumps(self.to_json(scaler), sort_keys=True, indent=1) + "\n"


def rank(preds: np.ndarray, grid: np.ndarray) -> np.ndarray:
    """Finite candidates ordered by prediction, ties broken by the smaller config."""
    finite = np.flatnonzero(np.isfinite(preds))
    # lexsort: last key is primary
    keys = [grid[finite, q] for q in range(grid.shape[1] - 1, -1, -1)] + [preds[finite]]
    return finite[np.lexsort(keys)]


def recommend(model, z, ks: KnobSpace, initial: Observation, top_m: int = 5,
              cap: int = DEFAULT_GRID_CAP) -> Recommendation:
    """Argmin of ``model.predict(z, config)`` over the full grid.

    ``model`` is anything exposing ``predict(z, configs_scaled) -> seconds``,
    such as a Regressor, a Pipeline or ``OracleModel``. ``initial`` carries a
    scaled config and its observed latency in seconds.
    """
    grid = grid_array(ks, cap)
    with np.errstate(all="ignore"):
        preds = np.asarray(model.predict(z, grid), dtype=np.float64).reshape(-1)
    if preds.shape[0] != grid.shape[0]:
        raise ValueError("model returned the wrong number of predictions")
    order = rank(preds, grid)
    if order.size == 0:
        raise FloatingPointError("every grid candidate produced a non-finite prediction")
    best = order[0]
    top = [(grid[i].copy(), float(preds[i])) for i in order[:max(1, top_m)]]
    return Recommendation(grid[best].copy(), float(preds[best]),
                          np.asarray(initial.config, dtype=np.float64).copy(), float(initial.latency),
                          len(grid), top, int(len(preds) - order.size))


class OracleModel:
    """Stands in for a regressor: noiseless latency of one synthetic workload."""

    def __init__(self, gt: GroundTruth, workload_id: str, scaler: ScalerStats):
        gt.latent(workload_id)
        self.gt = gt
        self.workload_id = workload_id
        self.scaler = scaler

    def raw(self, configs_scaled) -> np.ndarray:
        raw = self.scaler.unscale_configs(np.atleast_2d(configs_scaled))
        # undo float drift so the domain check in the oracle passes
        lo, hi = self.gt.knob_low, self.gt.knob_high
        return np.clip(raw, lo, hi)

    def predict(self, z, configs_scaled) -> np.ndarray:
        return true_latencies(self.gt, self.workload_id, self.raw(configs_scaled))


@dataclass
class TuningOutcome:
    workload_id: str
    initial_latency: float
    model_latency: float
    oracle_latency: float
    optimal_latency: float

    @property
    def model_improvement(self) -> float:
        return improvement(self.initial_latency, self.model_latency)

    @property
    def oracle_improvement(self) -> float:
        return improvement(self.initial_latency, self.oracle_latency)

    @property
    def optimal_improvement(self) -> float:
        return improvement(self.initial_latency, self.optimal_latency)


def tuning_study(pipe, test_raw: TraceSet, gt: GroundTruth, seed: int) -> list[TuningOutcome]:
    """Tune every test workload from one arbitrary observation.

    Realized latencies of the initial and recommended configs are read from
    the noiseless surface so that model, oracle and grid optimum are compared
    on equal footing.
    """
    from .predictor import AdmissionScheme, select_admission

    scheme = AdmissionScheme("arbitrary", 1)
    test = pipe.scale(test_raw)
    ks = KnobSpace.from_ground_truth(gt, pipe.scaler)
    grid = grid_array(ks)
    outcomes = []
    for w in test.workloads():
        rows = select_admission(test, w, scheme, pipe.pool, seed)
        initial = test.observation(int(rows[0]))
        oracle = OracleModel(gt, w, pipe.scaler)
        truth = true_latencies(gt, w, oracle.raw(grid))
        rec = recommend(pipe, pipe.admit(test, rows, seed=seed), ks, initial)
        rec_oracle = recommend(oracle, None, ks, initial)
        realized = lambda cfg: float(true_latencies(gt, w, oracle.raw(cfg[None]))[0])  # noqa: E731
        outcomes.append(TuningOutcome(w, realized(initial.config), realized(rec.config),
                                      realized(rec_oracle.config), float(truth.min())))
    return outcomes
