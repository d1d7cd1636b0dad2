"""Command-line entry points: single runs and benchmark sweeps."""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from . import runcfg
from .backends import (
    MOCK_FAMILY,
    MockBackend,
    default_registry,
    load_mock_script,
    lookup_model,
)
from .bench import (
    GridPoint,
    ReportFormat,
    export_report,
    load_suite,
    run_suite,
    success_percent,
)
from .core import Termination
from .faketools import offline_evaluate
from .prompts import FeedbackMode
from .search import FINAL_ITERATION, ModelSchedule, ScheduleEntry


def _parse_override(raw: str) -> tuple[list[str], object]:
    if "=" not in raw:
        raise argparse.ArgumentTypeError(f"override must look like key.path=value: {raw!r}")
    key, _, value = raw.partition("=")
    try:
        parsed = json.loads(value)
    except json.JSONDecodeError:
        parsed = value
    return key.split("."), parsed


def _apply_overrides(document: dict, overrides: list[str]) -> dict:
    for raw in overrides:
        path, value = _parse_override(raw)
        node = document
        for part in path[:-1]:
            node = node.setdefault(part, {})
        node[path[-1]] = value
    return document


def _registry_with_backend(spec: str | None):
    if spec is None:
        return default_registry()
    kind, _, arg = spec.partition(":")
    if kind == "mock":
        if not arg:
            raise SystemExit("--backend mock requires a script path: mock:<script.json>")
        return default_registry(**{MOCK_FAMILY: load_mock_script(arg)})
    raise SystemExit(f"unknown backend spec {spec!r}")


def _parse_grid(raw: str) -> list[tuple[int, int]]:
    # "k=1,5;d=0,1,5,10" expands to the cartesian product of the two axes.
    axes = {"k": [1], "d": [0]}
    for clause in raw.split(";"):
        clause = clause.strip()
        if not clause:
            continue
        key, _, values = clause.partition("=")
        key = key.strip()
        if key not in axes or not values:
            raise SystemExit(f"bad grid clause {clause!r}; expected k=... or d=...")
        axes[key] = [int(v) for v in values.split(",")]
    return [(k, d) for k in axes["k"] for d in axes["d"]]


def _parse_model(spec: str):
    family, sep, model_id = spec.partition(":")
    if not sep:
        raise SystemExit(f"model spec must be family:model_id, got {spec!r}")
    return lookup_model(model_id, family)


def _cmd_run(args: argparse.Namespace) -> int:
    config_path = Path(args.config)
    document = json.loads(config_path.read_text())
    if args.override:
        document = _apply_overrides(document, args.override)
    cfg = runcfg.parse_config(document, base_dir=config_path.parent)
    backends = _registry_with_backend(args.backend)
    evaluator = offline_evaluate if args.offline_tools else None
    trace = runcfg.execute_run(cfg, backends, evaluator=evaluator)
    best = trace.best()
    print(f"Termination: {trace.termination.value}")
    if best is not None:
        print(f"Best rank: {best.rank.value!r} (iteration {best.depth}, response {best.index})")
    totals = trace.ledger.totals
    print(
        f"Totals: {totals.input_tokens} input tokens, "
        f"{totals.output_tokens} output tokens, {runcfg.format_usd(totals.cost_usd)}"
    )
    print(f"Output directory: {cfg.outdir}")
    return 0 if trace.termination is Termination.ALL_TESTS_PASSED else 1


def _cmd_bench(args: argparse.Namespace) -> int:
    tasks = load_suite(args.suite)
    backends = _registry_with_backend(args.backend)
    evaluator = offline_evaluate if args.offline_tools else None
    mode = FeedbackMode.SUCCINCT if args.mode == "succinct" else FeedbackMode.FULL_CONTEXT
    grid = [GridPoint(k, d, mode) for k, d in _parse_grid(args.grid)]

    entries = [ScheduleEntry(0, _parse_model(args.model))]
    if args.final_model:
        entries.append(ScheduleEntry(FINAL_ITERATION, _parse_model(args.final_model)))
    schedule = ModelSchedule(tuple(entries))
    if any(e.model.family == MOCK_FAMILY for e in entries) and MOCK_FAMILY not in backends:
        backends = dict(backends)
        backends[MOCK_FAMILY] = MockBackend({})

    results = run_suite(
        tasks,
        grid,
        schedule,
        backends,
        evaluator=evaluator,
        workdir=args.workdir,
        parallelism=args.parallel,
    )
    out = Path(args.out)
    format = ReportFormat.CSV if (args.format or out.suffix.lstrip(".")).lower() == "csv" else ReportFormat.JSON
    export_report(results, format, out)
    for result in results:
        passed = sum(r.success for r in result.per_task)
        print(
            f"k={result.params.num_candidates} d={result.params.max_depth} "
            f"{result.params.mode.value}: {success_percent(result)}% "
            f"({passed}/{len(result.per_task)})"
        )
    print(f"Report written to {out}")
    return 0


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(
        prog="hdlsmith",
        description="LLM-driven Verilog generation and repair with tool feedback",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    run_p = sub.add_parser("run", help="run one design task from a config file")
    run_p.add_argument("--config", required=True, help="JSON run configuration")
    run_p.add_argument(
        "--override", action="append", default=[], metavar="KEY.PATH=VALUE",
        help="override a config value, e.g. general.num_candidates=2",
    )
    run_p.add_argument(
        "--backend", default=None, metavar="mock:SCRIPT",
        help="replace the LLM backends, e.g. mock:replies.json for offline runs",
    )
    run_p.add_argument(
        "--offline-tools", action="store_true",
        help="evaluate with the scripted toolchain instead of iverilog/vvp",
    )
    run_p.set_defaults(func=_cmd_run)

    bench_p = sub.add_parser("bench", help="run a benchmark suite over a parameter grid")
    bench_p.add_argument("--suite", required=True, help="suite directory")
    bench_p.add_argument("--grid", default="k=1;d=0", help='e.g. "k=1,5;d=0,1,5,10"')
    bench_p.add_argument("--mode", choices=["succinct", "full"], default="succinct")
    bench_p.add_argument("--out", required=True, help="report file (.json or .csv)")
    bench_p.add_argument("--format", choices=["json", "csv"], default=None)
    bench_p.add_argument("--model", default=f"{MOCK_FAMILY}:mock", metavar="FAMILY:ID")
    bench_p.add_argument("--final-model", default=None, metavar="FAMILY:ID")
    bench_p.add_argument("--backend", default=None, metavar="mock:SCRIPT")
    bench_p.add_argument("--offline-tools", action="store_true")
    bench_p.add_argument("--workdir", default=None)
    bench_p.add_argument("--parallel", type=int, default=1)
    bench_p.set_defaults(func=_cmd_bench)

    args = parser.parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
