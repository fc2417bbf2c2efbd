"""Observations, trace CSV ingestion, min-max scaling and workload splits.

CSV layout: ``workload_id, template_id, latency`` followed by knob columns
(prefix ``k_``) and metric columns (prefix ``m_``). Each data row is one job
run whose metrics were already averaged over the execution period.
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
import math
from dataclasses import dataclass, field

import numpy as np

SCALER_SCHEMA_VERSION = 1
_FIXED = ("workload_id", "template_id", "latency")


class TraceParseError(ValueError):
    def __init__(self, message: str, row: int | None = None, column: str | None = None):
        where = []
        if row is not None:
            where.append(f"row {row}")
        if column is not None:
            where.append(f"column {column!r}")
        super().__init__(f"{', '.join(where)}: {message}" if where else message)
        self.row = row
        self.column = column


@dataclass(frozen=True)
class Observation:
    workload_id: str
    template_id: str
    config: np.ndarray
    metrics: np.ndarray
    latency: float


def _frozen(arr, ndim: int) -> np.ndarray:
    out = np.array(arr, dtype=np.float64, copy=True)
    if out.ndim != ndim:
        raise ValueError(f"expected a {ndim}-d array, got shape {out.shape}")
    out.flags.writeable = False
    return out


@dataclass(frozen=True, eq=False)
class TraceSet:
    """Column-oriented collection of observations with shared dimensions."""

    workload_ids: tuple[str, ...]
    template_ids: tuple[str, ...]
    configs: np.ndarray
    metrics: np.ndarray
    latency: np.ndarray
    knob_names: tuple[str, ...]
    metric_names: tuple[str, ...]
    _index: dict = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        for name, nd in (("configs", 2), ("metrics", 2), ("latency", 1)):
            object.__setattr__(self, name, _frozen(getattr(self, name), nd))
        object.__setattr__(self, "workload_ids", tuple(self.workload_ids))
        object.__setattr__(self, "template_ids", tuple(self.template_ids))
        object.__setattr__(self, "knob_names", tuple(self.knob_names))
        object.__setattr__(self, "metric_names", tuple(self.metric_names))
        n = len(self.workload_ids)
        if n < 1:
            raise ValueError("a TraceSet needs at least one observation")
        if len(self.template_ids) != n or self.configs.shape[0] != n \
                or self.metrics.shape[0] != n or self.latency.shape[0] != n:
            raise ValueError("observation columns have inconsistent lengths")
        if self.configs.shape[1] != len(self.knob_names):
            raise ValueError("config width does not match knob_names")
        if self.metrics.shape[1] != len(self.metric_names):
            raise ValueError("metric width does not match metric_names")
        if any(not w for w in self.workload_ids):
            raise ValueError("workload ids must be non-empty")
        if not (np.all(np.isfinite(self.configs)) and np.all(np.isfinite(self.metrics))
                and np.all(np.isfinite(self.latency))):
            raise ValueError("trace values must be finite")
        if np.any(self.latency <= 0):
            raise ValueError("latency must be positive")
        index: dict[str, list[int]] = {}
        for i, w in enumerate(self.workload_ids):
            index.setdefault(w, []).append(i)
        object.__setattr__(self, "_index", {w: np.array(r) for w, r in index.items()})

    @classmethod
    def from_observations(cls, observations: list[Observation], knob_names, metric_names) -> "TraceSet":
        if not observations:
            raise ValueError("a TraceSet needs at least one observation")
        return cls(
            workload_ids=[o.workload_id for o in observations],
            template_ids=[o.template_id for o in observations],
            configs=np.array([o.config for o in observations], dtype=np.float64),
            metrics=np.array([o.metrics for o in observations], dtype=np.float64),
            latency=np.array([o.latency for o in observations], dtype=np.float64),
            knob_names=knob_names, metric_names=metric_names,
        )

    def __len__(self) -> int:
        return len(self.workload_ids)

    @property
    def s(self) -> int:
        return len(self.knob_names)

    @property
    def p(self) -> int:
        return len(self.metric_names)

    def observation(self, i: int) -> Observation:
        return Observation(self.workload_ids[i], self.template_ids[i], self.configs[i],
                           self.metrics[i], float(self.latency[i]))

    @property
    def observations(self) -> list[Observation]:
        return [self.observation(i) for i in range(len(self))]

    def workloads(self) -> list[str]:
        """Distinct workload ids in order of first appearance."""
        return list(self._index)

    def rows_of(self, workload_id: str) -> np.ndarray:
        try:
            return self._index[workload_id]
        except KeyError:
            raise KeyError(f"unknown workload {workload_id!r}") from None

    def subset(self, rows) -> "TraceSet":
        rows = np.asarray(rows, dtype=int)
        return TraceSet(
            workload_ids=[self.workload_ids[i] for i in rows],
            template_ids=[self.template_ids[i] for i in rows],
            configs=self.configs[rows], metrics=self.metrics[rows], latency=self.latency[rows],
            knob_names=self.knob_names, metric_names=self.metric_names,
        )

    def select_workloads(self, ids) -> "TraceSet":
        wanted = set(ids)
        return self.subset([i for i, w in enumerate(self.workload_ids) if w in wanted])

    def replace(self, **changes) -> "TraceSet":
        base = dict(workload_ids=self.workload_ids, template_ids=self.template_ids,
                    configs=self.configs, metrics=self.metrics, latency=self.latency,
                    knob_names=self.knob_names, metric_names=self.metric_names)
        base.update(changes)
        return TraceSet(**base)

    def equals(self, other: "TraceSet") -> bool:
        return (self.workload_ids == other.workload_ids
                and self.template_ids == other.template_ids
                and self.knob_names == other.knob_names
                and self.metric_names == other.metric_names
                and np.array_equal(self.configs, other.configs)
                and np.array_equal(self.metrics, other.metrics)
                and np.array_equal(self.latency, other.latency))


# -- CSV ----------------------------------------------------------------------

def parse_trace_csv(data: bytes | str) -> TraceSet:
    text = data.decode("utf-8") if isinstance(data, (bytes, bytearray)) else data
    reader = csv.reader(io.StringIO(text))
    header = next(reader, None)
    if not header or [h.strip() for h in header[:3]] != list(_FIXED):
        raise TraceParseError(f"missing header; expected columns to start with {', '.join(_FIXED)}", row=1)
    header = [h.strip() for h in header]
    knob_cols = [i for i, h in enumerate(header) if h.startswith("k_")]
    metric_cols = [i for i, h in enumerate(header) if h.startswith("m_")]
    for i, h in enumerate(header[3:], start=3):
        if i not in knob_cols and i not in metric_cols:
            raise TraceParseError("column must be prefixed k_ or m_", row=1, column=h)
    if knob_cols and metric_cols and max(knob_cols) > min(metric_cols):
        raise TraceParseError("knob columns must precede metric columns", row=1)

    wids, tids, configs, metrics, lat = [], [], [], [], []
    for rowno, row in enumerate(reader, start=2):
        if not row or (len(row) == 1 and not row[0].strip()):
            continue
        if len(row) != len(header):
            raise TraceParseError(f"expected {len(header)} cells, got {len(row)}", row=rowno)
        wid = row[0].strip()
        if not wid:
            raise TraceParseError("empty workload id", row=rowno, column="workload_id")

        def number(col: int) -> float:
            cell = row[col].strip()
            try:
                value = float(cell)
            except ValueError:
                raise TraceParseError(f"non-numeric cell {cell!r}", row=rowno, column=header[col]) from None
            if not math.isfinite(value):
                raise TraceParseError(f"non-finite cell {cell!r}", row=rowno, column=header[col])
            return value

        y = number(2)
        if y <= 0:
            raise TraceParseError(f"latency must be > 0, got {row[2].strip()}", row=rowno, column="latency")
        wids.append(wid)
        tids.append(row[1].strip())
        lat.append(y)
        configs.append([number(c) for c in knob_cols])
        metrics.append([number(c) for c in metric_cols])
    if not wids:
        raise TraceParseError("no data rows")
    return TraceSet(
        workload_ids=wids, template_ids=tids,
        configs=np.array(configs, dtype=np.float64).reshape(len(wids), len(knob_cols)),
        metrics=np.array(metrics, dtype=np.float64).reshape(len(wids), len(metric_cols)),
        latency=np.array(lat), knob_names=[header[c] for c in knob_cols],
        metric_names=[header[c] for c in metric_cols],
    )


def write_trace_csv(ts: TraceSet) -> bytes:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow([*_FIXED, *ts.knob_names, *ts.metric_names])
    for i in range(len(ts)):
        writer.writerow([ts.workload_ids[i], ts.template_ids[i], repr(float(ts.latency[i])),
                         *(repr(float(v)) for v in ts.configs[i]),
                         *(repr(float(v)) for v in ts.metrics[i])])
    return buf.getvalue().encode("utf-8")


def read_trace_file(path) -> TraceSet:
    with open(path, "rb") as fh:
        return parse_trace_csv(fh.read())


# -- scaling ------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class ScalerStats:
    knob_names: tuple[str, ...]
    knob_min: np.ndarray
    knob_max: np.ndarray
    metric_names: tuple[str, ...]
    metric_min: np.ndarray
    metric_max: np.ndarray
    constant: np.ndarray
    latency_min: float
    latency_max: float

    @property
    def kept_metric_names(self) -> tuple[str, ...]:
        return tuple(n for n, c in zip(self.metric_names, self.constant) if not c)

    @property
    def retained_metrics(self) -> int:
        return int((~self.constant).sum())

    def scale_configs(self, configs: np.ndarray) -> np.ndarray:
        return (np.asarray(configs, dtype=np.float64) - self.knob_min) / (self.knob_max - self.knob_min)

    def unscale_configs(self, scaled: np.ndarray) -> np.ndarray:
        return np.asarray(scaled, dtype=np.float64) * (self.knob_max - self.knob_min) + self.knob_min

    def scale_metrics(self, metrics: np.ndarray) -> np.ndarray:
        keep = ~self.constant
        m = np.asarray(metrics, dtype=np.float64)[..., keep]
        return (m - self.metric_min[keep]) / (self.metric_max[keep] - self.metric_min[keep])

    def scale_latency(self, y) -> np.ndarray:
        span = self.latency_max - self.latency_min
        return (np.asarray(y, dtype=np.float64) - self.latency_min) / (span if span > 0 else 1.0)

    def unscale_latency(self, y) -> np.ndarray:
        span = self.latency_max - self.latency_min
        return np.asarray(y, dtype=np.float64) * (span if span > 0 else 1.0) + self.latency_min

    def fingerprint(self) -> str:
        return hashlib.sha256(json.dumps(self.to_json(), sort_keys=True).encode()).hexdigest()[:16]

    def to_json(self) -> dict:
        return {
            "schema_version": SCALER_SCHEMA_VERSION,
            "knobs": [{"name": n, "min": float(a), "max": float(b)}
                      for n, a, b in zip(self.knob_names, self.knob_min, self.knob_max)],
            "metrics": [{"name": n, "min": float(a), "max": float(b), "constant": bool(c)}
                        for n, a, b, c in zip(self.metric_names, self.metric_min,
                                              self.metric_max, self.constant)],
            "latency": {"min": float(self.latency_min), "max": float(self.latency_max)},
        }

    @classmethod
    def from_json(cls, doc: dict) -> "ScalerStats":
        if doc.get("schema_version") != SCALER_SCHEMA_VERSION:
            raise ValueError(f"unsupported scaler schema_version {doc.get('schema_version')!r}")
        knobs, metrics = doc["knobs"], doc["metrics"]
        return cls(
            knob_names=tuple(k["name"] for k in knobs),
            knob_min=np.array([k["min"] for k in knobs], dtype=np.float64),
            knob_max=np.array([k["max"] for k in knobs], dtype=np.float64),
            metric_names=tuple(m["name"] for m in metrics),
            metric_min=np.array([m["min"] for m in metrics], dtype=np.float64),
            metric_max=np.array([m["max"] for m in metrics], dtype=np.float64),
            constant=np.array([m["constant"] for m in metrics], dtype=bool),
            latency_min=float(doc["latency"]["min"]), latency_max=float(doc["latency"]["max"]),
        )


def fit_scaler(train: TraceSet) -> ScalerStats:
    """Per-column min/max over the training split only."""
    if len(train) < 2:
        raise ValueError("fit_scaler needs at least 2 observations")
    kmin, kmax = train.configs.min(axis=0), train.configs.max(axis=0)
    flat = [n for n, a, b in zip(train.knob_names, kmin, kmax) if a == b]
    if flat:
        raise ValueError(f"constant knob columns cannot be tuned: {flat}")
    mmin, mmax = train.metrics.min(axis=0), train.metrics.max(axis=0)
    return ScalerStats(
        knob_names=train.knob_names, knob_min=kmin, knob_max=kmax,
        metric_names=train.metric_names, metric_min=mmin, metric_max=mmax,
        constant=mmin == mmax,
        latency_min=float(train.latency.min()), latency_max=float(train.latency.max()),
    )


def apply_scaler(stats: ScalerStats, ts: TraceSet) -> TraceSet:
    """Scale knobs and metrics, drop constant metrics. No clamping.

    Latency stays in seconds on the returned set; regression targets are
    scaled with ``stats.scale_latency`` where they are consumed.
    """
    if ts.knob_names != stats.knob_names or ts.metric_names != stats.metric_names:
        raise ValueError("trace columns do not match the fitted scaler")
    return ts.replace(configs=stats.scale_configs(ts.configs),
                      metrics=stats.scale_metrics(ts.metrics),
                      metric_names=stats.kept_metric_names)


def split_workloads(ts: TraceSet, test_fraction: float, seed: int) -> tuple[TraceSet, TraceSet]:
    """Split by workload id; no workload contributes rows to both sides."""
    if not 0.0 < test_fraction < 1.0:
        raise ValueError(f"test_fraction must lie in (0, 1), got {test_fraction}")
    ids = ts.workloads()
    if len(ids) < 2:
        raise ValueError("need at least 2 distinct workloads to split")
    n_test = min(len(ids) - 1, max(1, int(round(test_fraction * len(ids)))))
    order = np.random.default_rng(seed).permutation(len(ids))
    test_ids = {ids[i] for i in order[:n_test]}
    train_ids = [w for w in ids if w not in test_ids]
    return ts.select_workloads(train_ids), ts.select_workloads(test_ids)


def shared_configs(ts: TraceSet) -> list[tuple[float, ...]]:
    """Configurations observed for every workload, in first-appearance order."""
    ids = ts.workloads()
    common = None
    for w in ids:
        seen = {tuple(c) for c in ts.configs[ts.rows_of(w)]}
        common = seen if common is None else common & seen
    order = []
    for c in map(tuple, ts.configs[ts.rows_of(ids[0])]):
        if c in common and c not in order:
            order.append(c)
    return order
