"""MAPE, admission-scheme evaluation and k-fold hyperparameter selection."""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .embedders import Embedder, TrainingError
from .hyper import Hyper, for_method
from .pipeline import NotAdmissible, Pipeline, fit_pipeline
from .predictor import ALL_SCHEMES, AdmissionScheme, Regressor, select_admission
from .traces import TraceSet

log = logging.getLogger(__name__)


def mape(predictions, actuals) -> float:
    """Mean absolute percentage error, in percent."""
    pred = np.asarray(predictions, dtype=np.float64).reshape(-1)
    act = np.asarray(actuals, dtype=np.float64).reshape(-1)
    if pred.size != act.size or act.size == 0:
        raise ValueError(f"need equal, non-zero lengths; got {pred.size} and {act.size}")
    if np.any(act <= 0):
        raise ValueError("actual latencies must be positive")
    return float(100.0 * np.mean(np.abs(pred - act) / act))


@dataclass
class SchemeResult:
    mape: float
    macro_mape: float
    n_scored: int
    admitted: dict[str, np.ndarray] = field(repr=False)
    scored: dict[str, np.ndarray] = field(repr=False)


def score_scheme(admit: Callable[[TraceSet, np.ndarray], np.ndarray],
                 predict: Callable[[np.ndarray, np.ndarray], np.ndarray],
                 test: TraceSet, scheme: AdmissionScheme, pool, seed: int) -> SchemeResult:
    """Admit each test workload per ``scheme`` and score the remaining observations.

    ``test`` is a scaled TraceSet whose latency column is in seconds. Errors
    are pooled over every scored (workload, configuration) pair; the
    per-workload macro average is reported alongside.
    """
    preds, actual, per_workload = [], [], []
    admitted, scored = {}, {}
    for w in test.workloads():
        rows = test.rows_of(w)
        chosen = select_admission(test, w, scheme, pool, seed)
        rest = np.setdiff1d(rows, chosen)
        if rest.size == 0:
            raise ValueError(f"workload {w!r} has no observations left to score")
        if np.intersect1d(chosen, rest).size:
            raise AssertionError(f"admission rows leaked into the scored set for {w!r}")
        z = admit(test, chosen)
        p = predict(z, test.configs[rest])
        admitted[w], scored[w] = chosen, rest
        preds.append(p)
        actual.append(test.latency[rest])
        per_workload.append(mape(p, test.latency[rest]))
    return SchemeResult(mape(np.concatenate(preds), np.concatenate(actual)),
                        float(np.mean(per_workload)), int(sum(len(a) for a in actual)),
                        admitted, scored)


def evaluate_scheme(e: Embedder, r: Regressor, test: TraceSet, scheme: AdmissionScheme,
                    seed: int, pool) -> float:
    """Pooled MAPE of an encoder/regressor pair on a scaled test TraceSet."""
    return score_scheme(lambda ts, rows: e.encode(ts.metrics[rows]).mean(axis=0),
                        r.predict, test, scheme, pool, seed).mape


def evaluate_pipeline(pipe: Pipeline, test_scaled: TraceSet, scheme: AdmissionScheme,
                      seed: int) -> SchemeResult:
    return score_scheme(lambda ts, rows: pipe.admit(ts, rows, seed=seed), pipe.predict,
                        test_scaled, scheme, pipe.pool, seed)


@dataclass
class EvalReport:
    """MAPE per (method, scheme); ``runs`` keeps every per-run value."""

    runs: dict[str, dict[str, list[float | None]]] = field(default_factory=dict)
    macro: dict[str, dict[str, list[float | None]]] = field(default_factory=dict)
    seeds: list[int] = field(default_factory=list)

    def add(self, method: str, scheme: AdmissionScheme, value: float | None, macro: float | None = None):
        self.runs.setdefault(method, {}).setdefault(scheme.label, []).append(value)
        self.macro.setdefault(method, {}).setdefault(scheme.label, []).append(macro)

    @property
    def n_runs(self) -> int:
        return len(self.seeds)

    def mean(self, method: str, label: str) -> float | None:
        vals = self.runs.get(method, {}).get(label, [])
        if not vals or any(v is None for v in vals):
            return None
        return float(np.mean(vals))

    def to_json(self) -> dict:
        def mean_of(vals):
            return None if not vals or any(v is None for v in vals) else float(np.mean(vals))
        return {
            "schema_version": 1, "n_runs": self.n_runs, "seeds": self.seeds,
            "results": {
                m: {label: {"mape": mean_of(vals), "runs": vals,
                            "macro_mape": mean_of(self.macro[m][label])}
                    for label, vals in per.items()}
                for m, per in self.runs.items()
            },
        }

    def to_text(self, labels: list[str] | None = None) -> str:
        labels = labels or [s.label for s in ALL_SCHEMES]
        width = max([len("method")] + [len(m) for m in self.runs]) + 2
        head = f"{'method':<{width}}" + "".join(f"{lab:>14}" for lab in labels)
        lines = [head, "-" * len(head)]
        for m in self.runs:
            cells = []
            for lab in labels:
                v = self.mean(m, lab)
                cells.append(f"{'-':>14}" if v is None else f"{v:>14.2f}")
            lines.append(f"{m:<{width}}" + "".join(cells))
        lines.append(f"MAPE (%) pooled over test observations, averaged over {self.n_runs} run(s)")
        return "\n".join(lines) + "\n"

    def dumps(self) -> str:
        return json.dumps(self.to_json(), sort_keys=True, indent=1) + "\n"


def evaluate_runs(pipe: Pipeline, test_scaled: TraceSet, schemes, runs: int, seed: int,
                  report: EvalReport | None = None, name: str | None = None) -> EvalReport:
    """Evaluate one trained pipeline over ``runs`` admission draws (seed + run index)."""
    report = report or EvalReport()
    name = name or pipe.method
    for run in range(runs):
        s = seed + run
        if s not in report.seeds:
            report.seeds.append(s)
        for scheme in schemes:
            try:
                res = evaluate_pipeline(pipe, test_scaled, scheme, s)
                report.add(name, scheme, res.mape, res.macro_mape)
            except NotAdmissible:
                report.add(name, scheme, None)
    return report


def kfold_tune(candidates: list, train: TraceSet, folds: int, seed: int,
               fit: Callable[[TraceSet, object], Pipeline] | None = None):
    """Candidate with the lowest mean arbitrary/1 MAPE over workload folds.

    ``candidates`` are ``(method, Hyper)`` pairs by default; a custom ``fit``
    may accept any candidate type. Ties go to the earlier candidate, and a
    candidate whose training diverges scores infinity.
    """
    if not candidates:
        raise ValueError("empty hyperparameter grid")
    if folds < 2:
        raise ValueError("need at least 2 folds")
    if len(candidates) == 1:
        return candidates[0]
    ids = train.workloads()
    if len(ids) < folds:
        raise ValueError(f"{len(ids)} workloads cannot fill {folds} folds")
    order = np.random.default_rng(seed).permutation(len(ids))
    fold_ids = [[ids[i] for i in order[f::folds]] for f in range(folds)]
    fit = fit or (lambda ts, cand: fit_pipeline(cand[0], ts, cand[1]))
    scheme = AdmissionScheme("arbitrary", 1)

    best, best_score = None, np.inf
    for cand in candidates:
        scores = []
        for f in range(folds):
            held = set(fold_ids[f])
            inner = train.select_workloads([w for w in ids if w not in held])
            outer = train.select_workloads(fold_ids[f])
            try:
                pipe = fit(inner, cand)
                scores.append(evaluate_pipeline(pipe, pipe.scale(outer), scheme, seed).mape)
            except (TrainingError, FloatingPointError) as exc:
                log.info("candidate %r diverged on fold %d: %s", cand, f, exc)
                scores.append(np.inf)
                break
        score = float(np.mean(scores))
        if not np.isfinite(score):
            score = np.inf
        log.info("candidate %r: mean arbitrary/1 MAPE %.4g", cand, score)
        if best is None or score < best_score:
            best, best_score = cand, score
    return best


def sweep_methods() -> list[tuple[str, str, Hyper]]:
    """The eleven table rows: (row name, method, hyperparameters)."""
    rows = [(m, m, for_method(m)) for m in ("identity", "pca", "kpca", "embedding", "custom_ae",
                                             "contractive_ae", "beta_vae", "siamese", "hybrid1")]
    rows.append(("hybrid1_lam0", "hybrid1", for_method("hybrid1", {"lam": 0.0})))
    rows.append(("hybrid2", "hybrid2", for_method("hybrid2")))
    return rows
