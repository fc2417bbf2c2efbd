"""Synthetic trace generator with a known latency surface.

Each workload owns a hidden latent vector ``w``. Metrics are a fixed random
two-layer tanh mix of ``(w, config)`` plus Gaussian noise, so they reflect
workload and configuration jointly. Latency follows

    y = b(w) * (1 + sum_q c_q(w) * g_q(u_q))

where ``u`` is the configuration rescaled to [0, 1] per knob, resource knobs
have ``g(u) = (1 - u)^2`` (more is always faster) and the remaining knobs have
a quadratic bowl ``g(u) = 2 (u - center_q(w))^2`` whose minimum moves with
the workload.
"""

from __future__ import annotations

import itertools
import json
from dataclasses import asdict, dataclass, fields

import numpy as np

from .traces import TraceSet

GT_SCHEMA_VERSION = 1

# name, category, low, high
_KNOB_CATALOGUE = [
    ("k_executors", "resource", 4.0, 20.0),
    ("k_executor_cores", "resource", 1.0, 5.0),
    ("k_executor_memory_gb", "resource", 2.0, 10.0),
    ("k_default_parallelism", "parallelism", 50.0, 250.0),
    ("k_shuffle_partitions", "shuffle", 100.0, 500.0),
    ("k_broadcast_threshold_mb", "sql", 10.0, 50.0),
]
_CATEGORIES = ("resource", "parallelism", "shuffle", "sql")
_MIX_HIDDEN = 32
# input gains of the metric mix; config knobs move metrics more than the latent does
_LATENT_GAIN = 1.5
_CONFIG_GAIN = 2.0


@dataclass(frozen=True)
class SynthSpec:
    n_templates: int = 8
    workloads_per_template: int = 5
    k_true: int = 4
    s: int = 6
    p: int = 20
    configs_per_workload: int = 30
    shared_config_count: int = 10
    noise_std: float = 0.01
    seed: int = 0
    knob_levels: int = 5

    def __post_init__(self):
        for name in ("n_templates", "workloads_per_template", "k_true", "s", "p",
                     "configs_per_workload", "shared_config_count"):
            if int(getattr(self, name)) < 1:
                raise ValueError(f"{name} must be >= 1")
        if self.knob_levels < 2:
            raise ValueError("knob_levels must be >= 2")
        if self.shared_config_count > self.configs_per_workload:
            raise ValueError("shared_config_count cannot exceed configs_per_workload")
        if self.noise_std < 0:
            raise ValueError("noise_std must be >= 0")
        if self.configs_per_workload > self.knob_levels ** self.s:
            raise ValueError("configs_per_workload exceeds the number of distinct grid configs")

    @property
    def n_workloads(self) -> int:
        return self.n_templates * self.workloads_per_template

    @classmethod
    def from_json(cls, doc: dict) -> "SynthSpec":
        known = {f.name for f in fields(cls)}
        unknown = set(doc) - known
        if unknown:
            raise ValueError(f"unknown SynthSpec fields: {sorted(unknown)}")
        types = {f.name: f.type for f in fields(cls)}
        kwargs = {}
        for key, value in doc.items():
            if types[key] in ("int", int):
                if isinstance(value, bool) or not isinstance(value, int):
                    raise ValueError(f"{key} must be an integer")
            elif not isinstance(value, (int, float)) or isinstance(value, bool):
                raise ValueError(f"{key} must be a number")
            kwargs[key] = value
        return cls(**kwargs)

    def to_json(self) -> dict:
        return asdict(self)


def knob_catalogue(s: int) -> list[tuple[str, str, float, float]]:
    if s <= len(_KNOB_CATALOGUE):
        return _KNOB_CATALOGUE[:s]
    extra = [(f"k_knob{q}", _CATEGORIES[q % len(_CATEGORIES)], 0.0, 1.0)
             for q in range(len(_KNOB_CATALOGUE), s)]
    return _KNOB_CATALOGUE + extra


def bowl_count(s: int) -> int:
    return min(s, max(2, s // 2))


@dataclass(frozen=True, eq=False)
class GroundTruth:
    workload_ids: tuple[str, ...]
    template_ids: tuple[str, ...]
    latents: np.ndarray          # (n_workloads, k_true)
    mix_in: np.ndarray           # (hidden, k_true + s)
    mix_in_bias: np.ndarray      # (hidden,)
    mix_out: np.ndarray          # (p, hidden)
    mix_out_bias: np.ndarray     # (p,)
    base_scale: float
    base_dir: np.ndarray         # (k_true,)
    coef_dirs: np.ndarray        # (s, k_true)
    center_dirs: np.ndarray      # (n_bowl, k_true)
    knob_names: tuple[str, ...]
    knob_categories: tuple[str, ...]
    knob_low: np.ndarray
    knob_high: np.ndarray
    knob_levels: int
    shared_configs: np.ndarray   # (I_s, s) raw units

    @property
    def s(self) -> int:
        return len(self.knob_names)

    @property
    def n_resource(self) -> int:
        return self.s - bowl_count(self.s)

    def latent(self, workload_id: str) -> np.ndarray:
        try:
            return self.latents[self.workload_ids.index(workload_id)]
        except ValueError:
            raise KeyError(f"unknown workload {workload_id!r}") from None

    def to_unit(self, configs: np.ndarray) -> np.ndarray:
        return (np.asarray(configs, dtype=np.float64) - self.knob_low) / (self.knob_high - self.knob_low)

    def from_unit(self, unit: np.ndarray) -> np.ndarray:
        return np.asarray(unit, dtype=np.float64) * (self.knob_high - self.knob_low) + self.knob_low

    def grid(self) -> np.ndarray:
        """Every grid configuration in raw units, lexicographic in level index."""
        steps = np.arange(self.knob_levels) / (self.knob_levels - 1)
        unit = np.array(list(itertools.product(steps, repeat=self.s)), dtype=np.float64)
        return self.from_unit(unit)

    def surface(self, w: np.ndarray, unit: np.ndarray) -> np.ndarray:
        unit = np.atleast_2d(unit)
        base = self.base_scale * np.exp(self.base_dir @ w)
        coef = 0.2 + 0.8 * _sigmoid(self.coef_dirs @ w)
        r = self.n_resource
        terms = np.empty_like(unit)
        terms[:, :r] = (1.0 - unit[:, :r]) ** 2
        centers = 0.15 + 0.7 * _sigmoid(self.center_dirs @ w)
        terms[:, r:] = 2.0 * (unit[:, r:] - centers) ** 2
        return base * (1.0 + _rowdot(terms, coef[None, :]))

    def mix(self, w: np.ndarray, unit: np.ndarray) -> np.ndarray:
        unit = np.atleast_2d(unit)
        inputs = np.hstack([np.broadcast_to(w, (unit.shape[0], w.size)), 2.0 * unit - 1.0])
        hidden = np.tanh(_rowdot(inputs[:, None, :], self.mix_in[None]) + self.mix_in_bias)
        return _rowdot(hidden[:, None, :], self.mix_out[None]) + self.mix_out_bias

    def to_json(self) -> dict:
        arr = lambda a: np.asarray(a).tolist()  # noqa: E731
        return {
            "schema_version": GT_SCHEMA_VERSION,
            "workload_ids": list(self.workload_ids),
            "template_ids": list(self.template_ids),
            "latents": arr(self.latents),
            "mix_in": arr(self.mix_in), "mix_in_bias": arr(self.mix_in_bias),
            "mix_out": arr(self.mix_out), "mix_out_bias": arr(self.mix_out_bias),
            "base_scale": self.base_scale, "base_dir": arr(self.base_dir),
            "coef_dirs": arr(self.coef_dirs), "center_dirs": arr(self.center_dirs),
            "knobs": [{"name": n, "category": c, "low": float(lo), "high": float(hi)}
                      for n, c, lo, hi in zip(self.knob_names, self.knob_categories,
                                              self.knob_low, self.knob_high)],
            "knob_levels": self.knob_levels,
            "shared_configs": arr(self.shared_configs),
        }

    @classmethod
    def from_json(cls, doc: dict) -> "GroundTruth":
        if doc.get("schema_version") != GT_SCHEMA_VERSION:
            raise ValueError(f"unsupported ground-truth schema_version {doc.get('schema_version')!r}")
        a = lambda key: np.array(doc[key], dtype=np.float64)  # noqa: E731
        knobs = doc["knobs"]
        s = len(knobs)
        return cls(
            workload_ids=tuple(doc["workload_ids"]), template_ids=tuple(doc["template_ids"]),
            latents=a("latents"), mix_in=a("mix_in"), mix_in_bias=a("mix_in_bias"),
            mix_out=a("mix_out"), mix_out_bias=a("mix_out_bias"),
            base_scale=float(doc["base_scale"]), base_dir=a("base_dir"),
            coef_dirs=a("coef_dirs"), center_dirs=a("center_dirs").reshape(-1, len(doc["base_dir"])),
            knob_names=tuple(k["name"] for k in knobs),
            knob_categories=tuple(k["category"] for k in knobs),
            knob_low=np.array([k["low"] for k in knobs]), knob_high=np.array([k["high"] for k in knobs]),
            knob_levels=int(doc["knob_levels"]),
            shared_configs=a("shared_configs").reshape(-1, s),
        )


def _rowdot(a, b):
    # elementwise product then a last-axis sum: each row's result is independent
    # of how many rows are evaluated together, unlike a BLAS matmul
    return (a * b).sum(axis=-1)


def _sigmoid(x):
    return 1.0 / (1.0 + np.exp(-x))


def _sample_distinct_levels(rng, count: int, s: int, levels: int, exclude: set) -> list[tuple]:
    picked: list[tuple] = []
    taken = set(exclude)
    while len(picked) < count:
        cand = tuple(int(v) for v in rng.integers(0, levels, size=s))
        if cand not in taken:
            taken.add(cand)
            picked.append(cand)
    return picked


def generate(spec: SynthSpec) -> tuple[TraceSet, GroundTruth]:
    root = np.random.SeedSequence(spec.seed)
    truth_rng, config_rng, noise_rng = (np.random.default_rng(s) for s in root.spawn(3))
    k, s, p = spec.k_true, spec.s, spec.p
    n_bowl = bowl_count(s)

    centroids = truth_rng.normal(0.0, 1.0, size=(spec.n_templates, k))
    offsets = truth_rng.normal(0.0, 0.3, size=(spec.n_workloads, k))
    template_of = np.repeat(np.arange(spec.n_templates), spec.workloads_per_template)
    latents = centroids[template_of] + offsets

    catalogue = knob_catalogue(s)
    gt_kwargs = dict(
        mix_in=truth_rng.normal(0.0, 1.0, size=(_MIX_HIDDEN, k + s))
        * np.r_[np.full(k, _LATENT_GAIN / np.sqrt(k)), np.full(s, _CONFIG_GAIN / np.sqrt(s))],
        mix_in_bias=truth_rng.normal(0.0, 0.3, size=_MIX_HIDDEN),
        mix_out=truth_rng.normal(0.0, 1.0 / np.sqrt(_MIX_HIDDEN), size=(p, _MIX_HIDDEN)),
        mix_out_bias=truth_rng.normal(0.0, 0.5, size=p),
        base_scale=20.0,
        base_dir=truth_rng.normal(0.0, 0.6 / np.sqrt(k), size=k),
        coef_dirs=truth_rng.normal(0.0, 1.5 / np.sqrt(k), size=(s, k)),
        center_dirs=truth_rng.normal(0.0, 2.0 / np.sqrt(k), size=(n_bowl, k)),
    )

    levels = spec.knob_levels
    shared = _sample_distinct_levels(config_rng, spec.shared_config_count, s, levels, set())
    per_workload = [
        shared + _sample_distinct_levels(config_rng, spec.configs_per_workload - len(shared),
                                         s, levels, set(shared))
        for _ in range(spec.n_workloads)
    ]

    wids = tuple(f"t{t:02d}_w{i:02d}" for t in range(spec.n_templates)
                 for i in range(spec.workloads_per_template))
    tids = tuple(f"t{t:02d}" for t in template_of)
    unit_of = lambda lv: np.asarray(lv, dtype=np.float64) / (levels - 1)  # noqa: E731
    gt = GroundTruth(
        workload_ids=wids, template_ids=tids, latents=latents,
        knob_names=tuple(c[0] for c in catalogue), knob_categories=tuple(c[1] for c in catalogue),
        knob_low=np.array([c[2] for c in catalogue]), knob_high=np.array([c[3] for c in catalogue]),
        knob_levels=levels, shared_configs=np.empty((0, s)), **gt_kwargs,
    )
    object.__setattr__(gt, "shared_configs", gt.from_unit(unit_of(shared).reshape(-1, s)))

    configs, metrics, latency, row_wids, row_tids = [], [], [], [], []
    for j, (wid, tid) in enumerate(zip(wids, tids)):
        raw = gt.from_unit(unit_of(per_workload[j]))
        # recompute from raw units so the oracle reproduces these values bit for bit
        unit = gt.to_unit(raw)
        x = gt.mix(latents[j], unit)
        y = gt.surface(latents[j], unit)
        if spec.noise_std > 0:
            x = x + noise_rng.normal(0.0, spec.noise_std, size=x.shape)
            y = y * (1.0 + spec.noise_std * noise_rng.normal(size=y.shape))
            y = np.maximum(y, 1e-3)
        configs.append(raw)
        metrics.append(x)
        latency.append(y)
        row_wids += [wid] * len(unit)
        row_tids += [tid] * len(unit)

    ts = TraceSet(
        workload_ids=row_wids, template_ids=row_tids,
        configs=np.vstack(configs), metrics=np.vstack(metrics), latency=np.concatenate(latency),
        knob_names=gt.knob_names, metric_names=tuple(f"m_{i:03d}" for i in range(p)),
    )
    return ts, gt


def true_latency(gt: GroundTruth, workload_id: str, config) -> float:
    """Noiseless latency of ``workload_id`` under a raw-unit configuration."""
    w = gt.latent(workload_id)
    config = np.asarray(config, dtype=np.float64)
    if config.shape != (gt.s,):
        raise ValueError(f"config must have {gt.s} entries, got shape {config.shape}")
    unit = gt.to_unit(config)
    if np.any(unit < -1e-9) or np.any(unit > 1 + 1e-9):
        raise ValueError("config lies outside the knob domain")
    return float(gt.surface(w, unit)[0])


def true_latencies(gt: GroundTruth, workload_id: str, configs: np.ndarray) -> np.ndarray:
    return gt.surface(gt.latent(workload_id), gt.to_unit(configs))


def write_ground_truth(gt: GroundTruth) -> str:
    return json.dumps(gt.to_json(), sort_keys=True, indent=1) + "\n"
