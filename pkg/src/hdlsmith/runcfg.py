"""Configuration parsing, run orchestration, output layout, and the run log.

The JSON configuration keeps the published key spelling (including the
hyphenated ``mixed-model``), so existing config files drop in unchanged.
A run materializes ``outdir/iter<N>/response<M>/`` per candidate plus a
top-level ``log.txt`` in a fixed line grammar.
"""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass
from functools import partial
from pathlib import Path
from typing import IO, Mapping

from .backends import BackendRegistry, default_registry, lookup_model
from .core import (
    DesignTask,
    EvalOutcome,
    OutcomeKind,
    SearchTrace,
    compute_cost,
    format_usd,
)
from .edatools import (
    DEFAULT_SIM_TIMEOUT,
    DEFAULT_TOOLS,
    ToolchainConfig,
    evaluate,
    tool_version,
)
from .prompts import FeedbackMode
from .search import (
    Evaluator,
    ModelSchedule,
    ScheduleEntry,
    SearchConfig,
    run_search,
)

__all__ = [
    "ConfigError",
    "MissingKeyError",
    "TypeMismatchError",
    "InvalidScheduleError",
    "MissingFileError",
    "RawScheduleEntry",
    "RunConfig",
    "load_config",
    "parse_config",
    "build_schedule",
    "execute_run",
    "write_run_log",
    "trace_shape",
    "scan_output_tree",
    "compute_cost",
    "format_usd",
]


class ConfigError(Exception):
    """Configuration problem; carries the offending key path."""

    def __init__(self, key_path: str, detail: str = ""):
        self.key_path = key_path
        super().__init__(f"{key_path}: {detail}" if detail else key_path)


class MissingKeyError(ConfigError):
    pass


class TypeMismatchError(ConfigError):
    pass


class InvalidScheduleError(ConfigError):
    pass


class MissingFileError(ConfigError):
    pass


@dataclass(frozen=True)
class RawScheduleEntry:
    start_iteration: int
    model_family: str
    model_id: str


_KNOWN_GENERAL_KEYS = {
    "prompt",
    "name",
    "testbench",
    "model_family",
    "model_id",
    "num_candidates",
    "iterations",
    "outdir",
    "log",
    "mixed-model",
    "feedback_mode",
    "sim_timeout",
}


@dataclass(frozen=True)
class RunConfig:
    """Validated run parameters; ``iterations`` is the maximum tree depth."""

    prompt: Path
    name: str
    testbench: Path
    model_family: str
    model_id: str
    num_candidates: int
    iterations: int
    outdir: Path
    log: Path
    mixed_model: bool
    schedule_entries: tuple[RawScheduleEntry, ...] = ()
    feedback_mode: FeedbackMode = FeedbackMode.SUCCINCT
    sim_timeout: float = DEFAULT_SIM_TIMEOUT


def _require(mapping: Mapping, key: str, path: str):
    if key not in mapping:
        raise MissingKeyError(f"{path}.{key}", "required key is missing")
    return mapping[key]


def _require_str(mapping: Mapping, key: str, path: str) -> str:
    value = _require(mapping, key, path)
    if not isinstance(value, str) or not value:
        raise TypeMismatchError(f"{path}.{key}", "expected a non-empty string")
    return value


def _require_int(mapping: Mapping, key: str, path: str, minimum: int) -> int:
    value = _require(mapping, key, path)
    if isinstance(value, bool) or not isinstance(value, int):
        raise TypeMismatchError(f"{path}.{key}", "expected an integer")
    if value < minimum:
        raise TypeMismatchError(f"{path}.{key}", f"must be at least {minimum}")
    return value


def _parse_mode(value: object, path: str) -> FeedbackMode:
    aliases = {
        "succinct": FeedbackMode.SUCCINCT,
        "full": FeedbackMode.FULL_CONTEXT,
        "full_context": FeedbackMode.FULL_CONTEXT,
        "full-context": FeedbackMode.FULL_CONTEXT,
    }
    if not isinstance(value, str) or value.lower() not in aliases:
        raise TypeMismatchError(path, "expected 'succinct' or 'full_context'")
    return aliases[value.lower()]


def load_config(path: str | Path) -> RunConfig:
    """Load and validate a JSON run configuration file.

    Referenced prompt/testbench paths are resolved relative to the config
    file and must exist. Unknown keys are warnings, not errors.
    """
    path = Path(path)
    try:
        raw = json.loads(path.read_text())
    except OSError as exc:
        raise MissingFileError(str(path), str(exc)) from exc
    except json.JSONDecodeError as exc:
        raise TypeMismatchError(str(path), f"not valid JSON: {exc}") from exc
    return parse_config(raw, base_dir=path.parent)


def parse_config(raw: object, base_dir: Path | None = None) -> RunConfig:
    """Validate an already-parsed configuration document."""
    base_dir = Path(base_dir) if base_dir is not None else Path.cwd()
    if not isinstance(raw, dict):
        raise TypeMismatchError("<root>", "expected a JSON object")
    for key in raw:
        if key not in ("general", "mixed-model"):
            warnings.warn(f"unknown configuration key: {key}", stacklevel=2)
    general = _require(raw, "general", "<root>")
    if not isinstance(general, dict):
        raise TypeMismatchError("general", "expected a JSON object")
    for key in general:
        if key not in _KNOWN_GENERAL_KEYS:
            warnings.warn(f"unknown configuration key: general.{key}", stacklevel=2)

    prompt = base_dir / _require_str(general, "prompt", "general")
    testbench = base_dir / _require_str(general, "testbench", "general")
    for key, file in (("prompt", prompt), ("testbench", testbench)):
        if not file.is_file():
            raise MissingFileError(f"general.{key}", f"file not found: {file}")

    mixed_flag = general.get("mixed-model", False)
    if not isinstance(mixed_flag, bool):
        raise TypeMismatchError("general.mixed-model", "expected a boolean")

    entries = _parse_schedule_entries(raw.get("mixed-model"))
    if mixed_flag:
        if not entries:
            raise InvalidScheduleError("mixed-model", "mixed-model is enabled but no entries exist")
        _check_schedule_invariants(entries)

    mode = general.get("feedback_mode", "succinct")
    sim_timeout = general.get("sim_timeout", DEFAULT_SIM_TIMEOUT)
    if isinstance(sim_timeout, bool) or not isinstance(sim_timeout, (int, float)) or sim_timeout <= 0:
        raise TypeMismatchError("general.sim_timeout", "expected a positive number")

    return RunConfig(
        prompt=prompt,
        name=_require_str(general, "name", "general"),
        testbench=testbench,
        model_family=_require_str(general, "model_family", "general"),
        model_id=_require_str(general, "model_id", "general"),
        num_candidates=_require_int(general, "num_candidates", "general", minimum=1),
        iterations=_require_int(general, "iterations", "general", minimum=0),
        outdir=base_dir / _require_str(general, "outdir", "general"),
        log=Path(_require_str(general, "log", "general")),
        mixed_model=mixed_flag,
        schedule_entries=entries,
        feedback_mode=_parse_mode(mode, "general.feedback_mode"),
        sim_timeout=float(sim_timeout),
    )


def _parse_schedule_entries(section: object) -> tuple[RawScheduleEntry, ...]:
    if section is None:
        return ()
    if not isinstance(section, dict):
        raise TypeMismatchError("mixed-model", "expected a JSON object of entries")
    entries = []
    for name, entry in section.items():
        path = f"mixed-model.{name}"
        if not isinstance(entry, dict):
            raise TypeMismatchError(path, "expected a JSON object")
        start = _require(entry, "start_iteration", path)
        if isinstance(start, bool) or not isinstance(start, int):
            raise TypeMismatchError(f"{path}.start_iteration", "expected an integer")
        if start < -1:
            raise InvalidScheduleError(
                f"{path}.start_iteration", "must be >= 0, or -1 for the final iteration"
            )
        entries.append(
            RawScheduleEntry(
                start,
                _require_str(entry, "model_family", path),
                _require_str(entry, "model_id", path),
            )
        )
    return tuple(entries)


def _check_schedule_invariants(entries: tuple[RawScheduleEntry, ...]) -> None:
    sentinels = [e for e in entries if e.start_iteration == -1]
    starts = [e.start_iteration for e in entries if e.start_iteration != -1]
    if len(sentinels) > 1:
        raise InvalidScheduleError("mixed-model", "more than one final-iteration entry")
    if len(set(starts)) != len(starts):
        raise InvalidScheduleError("mixed-model", "duplicate start_iteration values")
    if 0 not in starts:
        raise InvalidScheduleError("mixed-model", "an entry with start_iteration 0 is required")


def build_schedule(cfg: RunConfig) -> ModelSchedule:
    """The active schedule: the mixed-model entries when enabled, else the
    single configured model (retained mixed-model entries stay inactive)."""
    if cfg.mixed_model:
        return ModelSchedule(
            tuple(
                ScheduleEntry(e.start_iteration, lookup_model(e.model_id, e.model_family))
                for e in cfg.schedule_entries
            )
        )
    return ModelSchedule.single(lookup_model(cfg.model_id, cfg.model_family))


def load_task(cfg: RunConfig) -> DesignTask:
    return DesignTask(
        name=cfg.name,
        prompt_text=cfg.prompt.read_text(),
        testbench_src=cfg.testbench.read_text(),
    )


def execute_run(
    cfg: RunConfig,
    backends: BackendRegistry | None = None,
    *,
    evaluator: Evaluator | None = None,
    tools: ToolchainConfig = DEFAULT_TOOLS,
) -> SearchTrace:
    """Drive a full search run and materialize the output directory.

    Produces ``outdir/iter<N>/response<M>/`` per generated candidate (source
    and artifact files as far as its evaluation got, plus a per-candidate
    log) and the top-level run log. A partial tree is left on disk when the
    run aborts. When the real toolchain is in use, its version banner heads
    the run log so warning-text classifications stay traceable.
    """
    if backends is None:
        backends = default_registry()
    version = None
    if evaluator is None:
        evaluator = partial(evaluate, tools=tools)
        version = tool_version(tools)
    task = load_task(cfg)
    search_cfg = SearchConfig(
        num_candidates=cfg.num_candidates,
        max_depth=cfg.iterations,
        feedback_mode=cfg.feedback_mode,
        sim_timeout=cfg.sim_timeout,
        outdir=cfg.outdir,
    )
    cfg.outdir.mkdir(parents=True, exist_ok=True)
    log_path = cfg.log if cfg.log.is_absolute() else cfg.outdir / cfg.log
    # On a tool/backend exception the partial tree stays on disk for
    # post-mortem inspection; only completed traces get the top-level log.
    trace = run_search(task, search_cfg, build_schedule(cfg), backends, evaluator=evaluator)
    with open(log_path, "w") as sink:
        if version:
            sink.write(f"Tool version: {version}\n")
        write_run_log(trace, sink)
    return trace


def trace_shape(trace: SearchTrace) -> list[list[str]]:
    """Tree shape of an in-memory trace: outcome kinds per depth, per response."""
    return [[c.outcome.kind.value for c in node.candidates] for node in trace.nodes]


def scan_output_tree(outdir: str | Path) -> list[list[str]]:
    """Reconstruct the tree shape from a materialized output directory.

    Reads each ``iter<N>/response<M>/log.txt`` back; the result matches
    :func:`trace_shape` of the trace that produced the directory.
    """

    def numbered(parent: Path, prefix: str) -> list[Path]:
        dirs = [
            p for p in parent.iterdir()
            if p.is_dir() and p.name.startswith(prefix) and p.name[len(prefix):].isdigit()
        ]
        return sorted(dirs, key=lambda p: int(p.name[len(prefix):]))

    shape = []
    for depth_dir in numbered(Path(outdir), "iter"):
        kinds = []
        for response_dir in numbered(depth_dir, "response"):
            kind = None
            log = response_dir / "log.txt"
            if log.is_file():
                for line in log.read_text().splitlines():
                    if line.startswith("Outcome: "):
                        kind = line[len("Outcome: "):]
            kinds.append(kind)
        shape.append(kinds)
    return shape


def _outcome_lines(outcome: EvalOutcome) -> list[str]:
    kind = outcome.kind
    if kind is OutcomeKind.NO_MODULE:
        return ["No module found"]
    if kind is OutcomeKind.COMPILE_ERROR:
        return ["Compilation error"]
    if kind is OutcomeKind.COMPILE_WARNED_NO_SIM:
        return ["Compilation warning"]
    if kind is OutcomeKind.SIM_CRASH_OR_TIMEOUT:
        return [outcome.diagnosis or "Simulation crashed or timed out"]
    label = "Simulation error" if outcome.mismatches else "Simulation passed"
    return [label, f"Mismatches: {outcome.mismatches}", f"Samples: {outcome.samples}"]


def write_run_log(trace: SearchTrace, sink: IO[str]) -> None:
    """Emit the run log: per depth, the model header, then per candidate its
    outcome lines, token counts and 10-decimal cost, then the rank and
    length vectors."""
    for node in trace.nodes:
        sink.write(f"Iteration: {node.depth}\n")
        sink.write(f"Model type: {node.model_family}\n")
        sink.write(f"Model ID: {node.model_id}\n")
        sink.write(f"Number of responses: {len(node.candidates)}\n")
        for candidate in node.candidates:
            for line in _outcome_lines(candidate.outcome):
                sink.write(line + "\n")
            sink.write(f"Input tokens: {candidate.usage.input_tokens}\n")
            sink.write(f"Output tokens: {candidate.usage.output_tokens}\n")
            sink.write(
                f"Cost for response {candidate.index}: {format_usd(candidate.cost_usd)}\n"
            )
        ranks = ", ".join(repr(c.rank.value) for c in node.candidates)
        lengths = ", ".join(str(c.char_length) for c in node.candidates)
        sink.write(f"Response ranks: [{ranks}]\n")
        sink.write(f"Response lengths: [{lengths}]\n")
