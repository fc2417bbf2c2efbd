"""Command-line front end: generate, split, train, evaluate, sweep and recommend.

Every command writes ``run_config.json`` next to its outputs. Running the
same command with the same arguments and inputs reproduces every output
byte for byte.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from .embedders import TrainingError
from .evalharness import EvalReport, evaluate_runs, sweep_methods
from .hyper import METHODS, Hyper, for_method
from .pipeline import NotAdmissible, Pipeline, fit_pipeline
from .predictor import ALL_SCHEMES, AdmissionScheme
from .synthbench import SynthSpec, generate, write_ground_truth
from .traces import TraceParseError, read_trace_file, split_workloads, write_trace_csv
from .tuner import DEFAULT_GRID_CAP, GridTooLarge, KnobSpace, recommend

log = logging.getLogger("workembed")

EXIT_OK, EXIT_USAGE, EXIT_NUMERIC = 0, 2, 3


class UsageError(ValueError):
    pass


def _dumps(doc) -> str:
    return json.dumps(doc, sort_keys=True, indent=1) + "\n"


def _read_json(path) -> dict:
    try:
        with open(path) as fh:
            return json.load(fh)
    except json.JSONDecodeError as exc:
        raise UsageError(f"{path}: invalid JSON ({exc})") from None


def _out_dir(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _echo_run_config(out: Path, args, **extra) -> None:
    doc = {k: v for k, v in vars(args).items() if k != "func"}
    doc.update(extra)
    (out / "run_config.json").write_text(_dumps(doc))


def _parse_sets(pairs) -> dict:
    changes = {}
    for item in pairs or []:
        key, sep, value = item.partition("=")
        if not sep or not key:
            raise UsageError(f"--set expects key=value, got {item!r}")
        changes[key.strip()] = value.strip()
    return changes


def _resolve_hyper(args) -> Hyper:
    doc = _read_json(args.hyper) if args.hyper else {}
    if not isinstance(doc, dict):
        raise UsageError("hyperparameter file must hold a JSON object")
    hyper = for_method(args.method, doc).updated(_parse_sets(args.set))
    if args.seed is not None:
        hyper = hyper.updated({"seed": args.seed})
    return hyper


def _schemes(args) -> list[AdmissionScheme]:
    pools = [args.scheme] if args.scheme else ["shared", "arbitrary"]
    counts = [args.obs] if args.obs else [5, 1]
    return [AdmissionScheme(p, n) for p in pools for n in counts]


def _load_pipeline(model_dir) -> Pipeline:
    d = Path(model_dir)
    for name in ("model.json", "scaler.json"):
        if not (d / name).exists():
            raise UsageError(f"model directory {d} is missing {name}")
    try:
        return Pipeline.load(d)
    except FileNotFoundError as exc:
        raise UsageError(f"model directory {d} is incomplete: {exc.filename}") from None


# -- commands -------------------------------------------------------------------

def cmd_generate(args) -> int:
    doc = _read_json(args.spec) if args.spec else {}
    if not isinstance(doc, dict):
        raise UsageError("spec file must hold a JSON object")
    if args.seed is not None:
        doc = {**doc, "seed": args.seed}
    spec = SynthSpec.from_json(doc)
    ts, gt = generate(spec)
    out = _out_dir(args)
    (out / "traces.csv").write_bytes(write_trace_csv(ts))
    (out / "ground_truth.json").write_text(write_ground_truth(gt))
    levels = np.linspace(0.0, 1.0, gt.knob_levels)
    raw = gt.from_unit(np.repeat(levels[:, None], gt.s, axis=1))
    ks = {"domain": "raw", "knobs": [{"name": n, "category": c, "candidates": raw[:, q].tolist()}
                                     for q, (n, c) in enumerate(zip(gt.knob_names, gt.knob_categories))]}
    (out / "knobspace.json").write_text(_dumps(ks))
    _echo_run_config(out, args, spec=spec.to_json())
    print(f"wrote {len(ts)} observations of {len(ts.workloads())} workloads to {out}")
    return EXIT_OK


def cmd_split(args) -> int:
    ts = read_trace_file(args.traces)
    train, test = split_workloads(ts, args.test_fraction, args.seed or 0)
    out = _out_dir(args)
    (out / "train.csv").write_bytes(write_trace_csv(train))
    (out / "test.csv").write_bytes(write_trace_csv(test))
    _echo_run_config(out, args)
    print(f"train: {len(train.workloads())} workloads, test: {len(test.workloads())} workloads")
    return EXIT_OK


def cmd_train(args) -> int:
    hyper = _resolve_hyper(args)
    train = read_trace_file(args.traces)
    pipe = fit_pipeline(args.method, train, hyper)
    out = _out_dir(args)
    pipe.save(out)
    _echo_run_config(out, args, hyper_resolved=hyper.to_json())
    final = {name: vals[-1] for name, vals in pipe.history.items() if vals}
    print(f"trained {args.method}; final losses: " +
          ", ".join(f"{k}={v:.6g}" for k, v in sorted(final.items())))
    return EXIT_OK


def _export_encodings(pipe: Pipeline, test_scaled, path: Path) -> bool:
    if pipe.embedder is None:
        return False
    z = pipe.encode(test_scaled.metrics)
    header = ["workload_id", "template_id", *test_scaled.knob_names, *[f"z_{i}" for i in range(z.shape[1])]]
    lines = [",".join(header)]
    for i in range(len(test_scaled)):
        cells = [test_scaled.workload_ids[i], test_scaled.template_ids[i],
                 *(repr(float(v)) for v in test_scaled.configs[i]), *(repr(float(v)) for v in z[i])]
        lines.append(",".join(cells))
    path.write_text("\n".join(lines) + "\n")
    return True


def _write_report(out: Path, report: EvalReport, labels) -> None:
    (out / "eval.json").write_text(report.dumps())
    text = report.to_text(labels)
    (out / "eval.txt").write_text(text)
    print(text, end="")


def cmd_evaluate(args) -> int:
    test_raw = read_trace_file(args.traces)
    schemes = _schemes(args)
    out = _out_dir(args)
    report = EvalReport()
    for model_dir in args.model:
        pipe = _load_pipeline(model_dir)
        test = pipe.scale(test_raw)
        name = pipe.method if len(args.model) == 1 else Path(model_dir).name
        evaluate_runs(pipe, test, schemes, args.runs, args.seed or 0, report, name=name)
        suffix = "" if len(args.model) == 1 else f"_{name}"
        _export_encodings(pipe, test, out / f"encodings{suffix}.csv")
    _write_report(out, report, [s.label for s in schemes])
    _echo_run_config(out, args)
    return EXIT_OK


def cmd_sweep(args) -> int:
    train = read_trace_file(args.traces)
    test_raw = read_trace_file(args.test)
    schemes = _schemes(args)
    wanted = set(args.methods.split(",")) if args.methods else None
    out = _out_dir(args)
    report = EvalReport()
    for row, method, hyper in sweep_methods():
        if wanted is not None and row not in wanted:
            continue
        if args.seed is not None:
            hyper = hyper.updated({"seed": args.seed})
        log.info("training %s", row)
        pipe = fit_pipeline(method, train, hyper)
        pipe.save(out / "models" / row)
        evaluate_runs(pipe, pipe.scale(test_raw), schemes, args.runs, args.seed or 0, report, name=row)
    _write_report(out, report, [s.label for s in schemes])
    _echo_run_config(out, args)
    return EXIT_OK


def cmd_recommend(args) -> int:
    pipe = _load_pipeline(args.model)
    doc = _read_json(args.knobspace)
    ks = KnobSpace.from_json(doc)
    ks.check_names(pipe.scaler.knob_names)
    domain = doc.get("domain", "scaled")
    if domain == "raw":
        scaled = [pipe.scaler.scale_configs(np.array(c, dtype=np.float64)[:, None].repeat(ks.s, axis=1))[:, q]
                  for q, c in enumerate(ks.candidates)]
        ks = KnobSpace(ks.names, ks.categories, tuple(tuple(float(x) for x in v) for v in scaled))
    elif domain != "scaled":
        raise UsageError(f"knob space domain must be 'raw' or 'scaled', got {domain!r}")
    ts = pipe.scale(read_trace_file(args.traces))
    if not 0 <= args.row < len(ts):
        raise UsageError(f"--row {args.row} is outside the {len(ts)} observations")
    z = pipe.admit(ts, [args.row], seed=args.seed or 0)
    rec = recommend(pipe, z, ks, ts.observation(args.row), top_m=args.top, cap=args.grid_cap)
    out = _out_dir(args)
    (out / "recommendation.json").write_text(rec.dumps(pipe.scaler))
    _echo_run_config(out, args)
    raw = pipe.scaler.unscale_configs(rec.config[None])[0]
    print("recommended " + ", ".join(f"{n}={v:.6g}" for n, v in zip(pipe.scaler.knob_names, raw))
          + f" (predicted {rec.predicted_latency:.4g}s, observed initial {rec.initial_latency:.4g}s)")
    return EXIT_OK


# -- parser ---------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="workembed", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, traces=True):
        if traces:
            p.add_argument("--traces", required=True, help="trace CSV file")
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--out", required=True, help="output directory")

    p = sub.add_parser("generate", help="write a synthetic trace set and its ground truth")
    p.add_argument("--spec", help="SynthSpec JSON (defaults used when omitted)")
    common(p, traces=False)
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("split", help="split a trace set by workload into train and test")
    p.add_argument("--test-fraction", type=float, default=0.25)
    common(p)
    p.set_defaults(func=cmd_split)

    p = sub.add_parser("train", help="train an encoder and latency regressor")
    p.add_argument("--method", required=True, choices=METHODS)
    p.add_argument("--hyper", help="hyperparameter JSON overriding the method defaults")
    p.add_argument("--set", action="append", metavar="KEY=VALUE", help="override one hyperparameter")
    common(p)
    p.set_defaults(func=cmd_train)

    def scheme_args(p):
        p.add_argument("--scheme", choices=("shared", "arbitrary"), help="admission pool (both if omitted)")
        p.add_argument("--obs", type=int, choices=(1, 5), help="admitted observations (both if omitted)")
        p.add_argument("--runs", type=int, default=10, help="admission draws averaged per cell")

    p = sub.add_parser("evaluate", help="MAPE of trained models under admission schemes")
    p.add_argument("--model", required=True, action="append", help="model directory (repeatable)")
    scheme_args(p)
    common(p)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("sweep", help="train and evaluate every method row of the comparison table")
    p.add_argument("--test", required=True, help="held-out trace CSV")
    p.add_argument("--methods", help="comma-separated subset of rows")
    scheme_args(p)
    common(p)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("recommend", help="recommend a configuration from one observation")
    p.add_argument("--model", required=True, help="model directory")
    p.add_argument("--knobspace", required=True, help="knob space JSON")
    p.add_argument("--row", type=int, default=0, help="row of --traces holding the initial observation")
    p.add_argument("--grid-cap", type=int, default=DEFAULT_GRID_CAP)
    p.add_argument("--top", type=int, default=5, help="ranked alternatives kept in the output")
    common(p)
    p.set_defaults(func=cmd_recommend)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if getattr(args, "runs", 1) is not None and getattr(args, "runs", 1) < 1:
        parser.error("--runs must be >= 1")
    try:
        return args.func(args)
    except (TrainingError, FloatingPointError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (UsageError, GridTooLarge, NotAdmissible, TraceParseError, ValueError, KeyError,
            FileNotFoundError, IsADirectoryError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
