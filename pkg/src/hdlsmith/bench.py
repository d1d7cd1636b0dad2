"""Batch evaluation over a benchmark suite with success, cost and Pareto reporting.

A suite directory pairs ``<stem>_prompt.sv`` with ``<stem>_tb.sv`` per task;
an optional ``manifest.json`` supplies category tags. Results can be
exported to JSON or CSV and loaded back losslessly.
"""

from __future__ import annotations

import csv
import io
import json
import math
import tempfile
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from decimal import ROUND_HALF_UP, Decimal
from enum import Enum
from pathlib import Path
from typing import Iterable, NamedTuple, Sequence

from .backends import BackendRegistry
from .core import DesignTask, TokenUsage
from .edatools import DEFAULT_SIM_TIMEOUT
from .prompts import FeedbackMode
from .search import Evaluator, ModelSchedule, SearchConfig, pass_at_budget, run_search

PROMPT_SUFFIX = "_prompt.sv"
TESTBENCH_SUFFIX = "_tb.sv"
MANIFEST_NAME = "manifest.json"
UNCATEGORIZED = "uncategorized"


class EmptySuiteError(Exception):
    pass


@dataclass(frozen=True)
class GridPoint:
    num_candidates: int
    max_depth: int
    mode: FeedbackMode = FeedbackMode.SUCCINCT


@dataclass(frozen=True)
class SuiteParams:
    num_candidates: int
    max_depth: int
    mode: FeedbackMode
    schedule: str


@dataclass(frozen=True)
class TaskRow:
    """Summary of one task's search under one parameter set."""

    task_name: str
    success: bool
    queries_used: int
    tokens: TokenUsage
    cost_usd: Decimal
    best_rank: float | None
    category: str | None = None
    subcategory: str | None = None


@dataclass(frozen=True)
class SuiteResult:
    params: SuiteParams
    per_task: tuple[TaskRow, ...]

    def __post_init__(self) -> None:
        object.__setattr__(self, "per_task", tuple(self.per_task))


@dataclass(frozen=True)
class ParetoPoint:
    """Average effort (tokens or dollars) versus success percentage."""

    x: float
    y: float

    def __post_init__(self) -> None:
        if not (math.isfinite(self.x) and math.isfinite(self.y)):
            raise ValueError("pareto coordinates must be finite")
        if self.x < 0 or not 0 <= self.y <= 100:
            raise ValueError("x must be >= 0 and y a percentage in [0, 100]")


class RollupLevel(Enum):
    CATEGORY = "category"
    SUBCATEGORY = "subcategory"


class RollupRow(NamedTuple):
    label: str
    success_percent: float
    n: int


def load_suite(directory: str | Path) -> list[DesignTask]:
    """Load every prompt/testbench pair in a suite directory, sorted by name.

    Tasks missing either file are reported and skipped; an optional manifest
    maps task names to category/subcategory tags.
    """
    directory = Path(directory)
    manifest = {}
    manifest_path = directory / MANIFEST_NAME
    if manifest_path.is_file():
        manifest = json.loads(manifest_path.read_text())
    prompt_stems = {p.name[: -len(PROMPT_SUFFIX)]: p for p in directory.glob(f"*{PROMPT_SUFFIX}")}
    tb_stems = {p.name[: -len(TESTBENCH_SUFFIX)]: p for p in directory.glob(f"*{TESTBENCH_SUFFIX}")}
    for stem in sorted(set(prompt_stems) ^ set(tb_stems)):
        missing = "testbench" if stem in prompt_stems else "prompt"
        warnings.warn(f"suite task {stem!r} skipped: missing {missing} file", stacklevel=2)
    tasks = []
    for stem in sorted(set(prompt_stems) & set(tb_stems)):
        tags = manifest.get(stem, {})
        try:
            tasks.append(
                DesignTask(
                    name=stem,
                    prompt_text=prompt_stems[stem].read_text(),
                    testbench_src=tb_stems[stem].read_text(),
                    category=tags.get("category"),
                    subcategory=tags.get("subcategory"),
                )
            )
        except ValueError as exc:
            warnings.warn(f"suite task {stem!r} skipped: {exc}", stacklevel=2)
    if not tasks:
        raise EmptySuiteError(f"no usable tasks in {directory}")
    return tasks


def describe_schedule(sched: ModelSchedule) -> str:
    def start_key(entry):
        return (entry.start_iteration == -1, entry.start_iteration)

    parts = []
    for entry in sorted(sched.entries, key=start_key):
        where = "final" if entry.start_iteration == -1 else str(entry.start_iteration)
        parts.append(f"{entry.model.model_id}@{where}")
    return ", ".join(parts)


def run_suite(
    tasks: Sequence[DesignTask],
    grid: Iterable[GridPoint],
    schedule: ModelSchedule,
    backends: BackendRegistry,
    *,
    evaluator: Evaluator | None = None,
    workdir: str | Path | None = None,
    parallelism: int = 1,
    sim_timeout: float = DEFAULT_SIM_TIMEOUT,
) -> list[SuiteResult]:
    """Run every task at every grid point and summarize per-task traces.

    A failing task (tool or configuration error) is recorded as unsuccessful
    and the suite continues. Tasks inside one grid point may run concurrently
    up to ``parallelism``; aggregation order stays the task order.
    """
    grid = list(grid)
    if not grid:
        raise ValueError("parameter grid is empty")
    if not tasks:
        raise EmptySuiteError("no tasks to run")
    root = Path(workdir) if workdir is not None else Path(tempfile.mkdtemp(prefix="suite_"))
    schedule_desc = describe_schedule(schedule)

    results = []
    for point in grid:
        point_dir = root / f"k{point.num_candidates}_d{point.max_depth}_{point.mode.value}"

        def run_task(task: DesignTask) -> TaskRow:
            cfg = SearchConfig(
                num_candidates=point.num_candidates,
                max_depth=point.max_depth,
                feedback_mode=point.mode,
                sim_timeout=sim_timeout,
                outdir=point_dir / task.name,
            )
            try:
                trace = run_search(task, cfg, schedule, backends, evaluator=evaluator)
            except Exception as exc:
                warnings.warn(f"task {task.name!r} failed: {exc}", stacklevel=2)
                return TaskRow(
                    task.name, False, 0, TokenUsage(0, 0), Decimal(0), None,
                    task.category, task.subcategory,
                )
            queries, success = pass_at_budget(trace)
            totals = trace.ledger.totals
            best = trace.best()
            return TaskRow(
                task_name=task.name,
                success=success,
                queries_used=queries,
                tokens=TokenUsage(totals.input_tokens, totals.output_tokens),
                cost_usd=totals.cost_usd,
                best_rank=best.rank.value if best is not None else None,
                category=task.category,
                subcategory=task.subcategory,
            )

        if parallelism > 1:
            with ThreadPoolExecutor(max_workers=parallelism) as pool:
                rows = list(pool.map(run_task, tasks))
        else:
            rows = [run_task(task) for task in tasks]
        params = SuiteParams(point.num_candidates, point.max_depth, point.mode, schedule_desc)
        results.append(SuiteResult(params, tuple(rows)))
    return results


def _percent(successes: int, total: int) -> float:
    # One decimal place, round half up, as success tables expect.
    value = (Decimal(100 * successes) / Decimal(total)).quantize(
        Decimal("0.1"), rounding=ROUND_HALF_UP
    )
    return float(value)


def success_percent(result: SuiteResult) -> float:
    """Share of tasks that passed all testbench samples, in percent."""
    if not result.per_task:
        raise ValueError("cannot compute a percentage over zero tasks")
    return _percent(sum(row.success for row in result.per_task), len(result.per_task))


def average_tokens(result: SuiteResult, successes_only: bool = False) -> float | None:
    rows = [r for r in result.per_task if r.success] if successes_only else list(result.per_task)
    if not rows:
        return None
    return sum(r.tokens.total for r in rows) / len(rows)


def average_cost(result: SuiteResult, successes_only: bool = False) -> Decimal | None:
    rows = [r for r in result.per_task if r.success] if successes_only else list(result.per_task)
    if not rows:
        return None
    return sum((r.cost_usd for r in rows), Decimal(0)) / len(rows)


def pareto_front(points: Iterable[ParetoPoint]) -> list[ParetoPoint]:
    """The non-dominated subset: no other point is at least as cheap and at
    least as successful with one strict improvement. Duplicates collapse to
    one representative; output is sorted by x ascending."""
    unique = sorted({(p.x, p.y) for p in points}, key=lambda t: (t[0], -t[1]))
    front: list[ParetoPoint] = []
    best_y = -math.inf
    for x, y in unique:
        if y > best_y:
            front.append(ParetoPoint(x, y))
            best_y = y
    return front


def suite_pareto_point(
    result: SuiteResult, metric: str = "tokens", successes_only: bool = False
) -> ParetoPoint | None:
    """One plot point for a suite run: average effort vs. success percent."""
    if metric == "tokens":
        average = average_tokens(result, successes_only)
    elif metric == "cost":
        cost = average_cost(result, successes_only)
        average = float(cost) if cost is not None else None
    else:
        raise ValueError(f"unknown pareto metric {metric!r}")
    if average is None:
        return None
    return ParetoPoint(average, success_percent(result))


def category_rollup(result: SuiteResult, level: RollupLevel) -> list[RollupRow]:
    """Per-category (or per-subcategory) success table; untagged tasks group
    under "uncategorized". Row counts sum to the task count."""
    groups: dict[str, list[bool]] = {}
    for row in result.per_task:
        label = row.category if level is RollupLevel.CATEGORY else row.subcategory
        groups.setdefault(label or UNCATEGORIZED, []).append(row.success)
    return [
        RollupRow(label, _percent(sum(flags), len(flags)), len(flags))
        for label, flags in sorted(groups.items())
    ]


class ReportFormat(Enum):
    CSV = "csv"
    JSON = "json"


_CSV_COLUMNS = [
    "num_candidates",
    "max_depth",
    "mode",
    "schedule",
    "task",
    "success",
    "queries_used",
    "input_tokens",
    "output_tokens",
    "cost_usd",
    "best_rank",
    "category",
    "subcategory",
]


def _result_to_dict(result: SuiteResult) -> dict:
    summary = {
        "success_percent": success_percent(result),
        "avg_tokens_all": average_tokens(result),
        "avg_tokens_success": average_tokens(result, successes_only=True),
        "avg_cost_all": _decimal_str(average_cost(result)),
        "avg_cost_success": _decimal_str(average_cost(result, successes_only=True)),
    }
    return {
        "params": {
            "num_candidates": result.params.num_candidates,
            "max_depth": result.params.max_depth,
            "mode": result.params.mode.value,
            "schedule": result.params.schedule,
        },
        "summary": summary,
        "per_task": [
            {
                "task": row.task_name,
                "success": row.success,
                "queries_used": row.queries_used,
                "input_tokens": row.tokens.input_tokens,
                "output_tokens": row.tokens.output_tokens,
                "cost_usd": str(row.cost_usd),
                "best_rank": row.best_rank,
                "category": row.category,
                "subcategory": row.subcategory,
            }
            for row in result.per_task
        ],
    }


def _decimal_str(value: Decimal | None) -> str | None:
    return str(value) if value is not None else None


def _row_from_dict(entry: dict) -> TaskRow:
    return TaskRow(
        task_name=entry["task"],
        success=bool(entry["success"]),
        queries_used=int(entry["queries_used"]),
        tokens=TokenUsage(int(entry["input_tokens"]), int(entry["output_tokens"])),
        cost_usd=Decimal(entry["cost_usd"]),
        best_rank=entry["best_rank"],
        category=entry["category"],
        subcategory=entry["subcategory"],
    )


def render_report(results: Sequence[SuiteResult], format: ReportFormat) -> str:
    """Serialize suite results deterministically (byte-stable across runs)."""
    if format is ReportFormat.JSON:
        payload = {"results": [_result_to_dict(r) for r in results]}
        return json.dumps(payload, indent=2) + "\n"
    out = io.StringIO()
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(_CSV_COLUMNS)
    for result in results:
        for row in result.per_task:
            writer.writerow(
                [
                    result.params.num_candidates,
                    result.params.max_depth,
                    result.params.mode.value,
                    result.params.schedule,
                    row.task_name,
                    "true" if row.success else "false",
                    row.queries_used,
                    row.tokens.input_tokens,
                    row.tokens.output_tokens,
                    str(row.cost_usd),
                    repr(row.best_rank) if row.best_rank is not None else "",
                    row.category or "",
                    row.subcategory or "",
                ]
            )
    return out.getvalue()


def export_report(
    results: Sequence[SuiteResult], format: ReportFormat, path: str | Path
) -> Path:
    path = Path(path)
    path.write_text(render_report(results, format))
    return path


def load_report(path: str | Path, format: ReportFormat | None = None) -> list[SuiteResult]:
    """Read a report back; ``load_report(export_report(x)) == x``."""
    path = Path(path)
    if format is None:
        format = ReportFormat.CSV if path.suffix.lower() == ".csv" else ReportFormat.JSON
    text = path.read_text()
    if format is ReportFormat.JSON:
        payload = json.loads(text)
        results = []
        for entry in payload["results"]:
            params = SuiteParams(
                int(entry["params"]["num_candidates"]),
                int(entry["params"]["max_depth"]),
                FeedbackMode(entry["params"]["mode"]),
                entry["params"]["schedule"],
            )
            rows = tuple(_row_from_dict(row) for row in entry["per_task"])
            results.append(SuiteResult(params, rows))
        return results
    reader = csv.DictReader(io.StringIO(text))
    grouped: dict[SuiteParams, list[TaskRow]] = {}
    for record in reader:
        params = SuiteParams(
            int(record["num_candidates"]),
            int(record["max_depth"]),
            FeedbackMode(record["mode"]),
            record["schedule"],
        )
        row = TaskRow(
            task_name=record["task"],
            success=record["success"] == "true",
            queries_used=int(record["queries_used"]),
            tokens=TokenUsage(int(record["input_tokens"]), int(record["output_tokens"])),
            cost_usd=Decimal(record["cost_usd"]),
            best_rank=float(record["best_rank"]) if record["best_rank"] else None,
            category=record["category"] or None,
            subcategory=record["subcategory"] or None,
        )
        grouped.setdefault(params, []).append(row)
    return [SuiteResult(params, tuple(rows)) for params, rows in grouped.items()]
