"""Drive the compile/simulate toolchain on a candidate and classify the result.

The default toolchain is Icarus Verilog (``iverilog``/``vvp``) invoked with
the SystemVerilog standard flag; paths and flags are configurable. Each
candidate is evaluated in its own working directory holding the written
sources, the compiled artifact and a per-candidate log.
"""

from __future__ import annotations

import re
import subprocess
import time
from dataclasses import dataclass
from enum import Enum
from functools import partial
from pathlib import Path
from typing import Callable

from .core import DesignTask, EvalOutcome, OutcomeKind, OutputHint
from .extract import ExtractionSource, extract_module


class CompileStatus(Enum):
    OK = "ok"
    OK_WITH_WARNINGS = "ok_with_warnings"
    ERROR = "error"


class ToolNotFoundError(RuntimeError):
    """The compiler or simulation runtime binary could not be invoked."""


class ToolIoError(RuntimeError):
    """Filesystem or process I/O failed while driving the tools."""


@dataclass(frozen=True)
class CompileResult:
    status: CompileStatus
    messages: tuple[tuple[str, str], ...]  # (severity, raw tool line)
    artifact_path: Path | None

    def __post_init__(self) -> None:
        object.__setattr__(self, "messages", tuple(self.messages))
        if (self.artifact_path is None) != (self.status is CompileStatus.ERROR):
            raise ValueError("artifact_path present exactly when compilation succeeded")

    @property
    def raw_messages(self) -> tuple[str, ...]:
        return tuple(text for _, text in self.messages)


@dataclass(frozen=True)
class SimResult:
    exit_ok: bool
    timed_out: bool
    stdout: str
    stderr: str
    wall_time: float

    def __post_init__(self) -> None:
        if self.timed_out and self.exit_ok:
            raise ValueError("a timed-out simulation cannot have exited cleanly")


@dataclass(frozen=True)
class TestbenchSummary:
    """Mismatch totals and per-output hints printed by a self-checking bench."""

    __test__ = False  # keep pytest from collecting this as a test class

    total_mismatches: int
    total_samples: int
    hints: tuple[OutputHint, ...] = ()

    def __post_init__(self) -> None:
        object.__setattr__(self, "hints", tuple(OutputHint(*h) for h in self.hints))
        if self.total_samples < 1:
            raise ValueError("total_samples must be positive")
        if not 0 <= self.total_mismatches <= self.total_samples:
            raise ValueError("total_mismatches must lie in [0, total_samples]")


@dataclass(frozen=True)
class ToolchainConfig:
    """Paths and flags for the external compiler and simulation runtime."""

    compiler: str = "iverilog"
    runtime: str = "vvp"
    language_flags: tuple[str, ...] = ("-g2012",)
    extra_flags: tuple[str, ...] = ()
    expected_version: str | None = None


DEFAULT_TOOLS = ToolchainConfig()

DEFAULT_SIM_TIMEOUT = 60.0

_HINT_RE = re.compile(
    r"^Hint: Output '([^']+)' has (\d+) mismatches\. "
    r"First mismatch occurred at time (\d+)\.?\s*$"
)
_TOTAL_RE = re.compile(r"^Mismatches: (\d+) in (\d+) samples\s*$")


def tool_version(tools: ToolchainConfig = DEFAULT_TOOLS) -> str | None:
    """First line of the compiler's version banner, or None when unavailable."""
    try:
        proc = subprocess.run(
            [tools.compiler, "-V"], capture_output=True, text=True, timeout=10.0
        )
    except (OSError, subprocess.TimeoutExpired):
        return None
    banner = (proc.stdout or proc.stderr).strip().splitlines()
    return banner[0] if banner else None


def write_candidate_sources(
    module_src: str, testbench_src: str, workdir: Path, top_name: str
) -> tuple[Path, Path]:
    """Materialize ``<top>.sv`` and ``<top>_tb.sv`` inside the work directory."""
    workdir.mkdir(parents=True, exist_ok=True)
    module_path = workdir / f"{top_name}.sv"
    tb_path = workdir / f"{top_name}_tb.sv"
    try:
        module_path.write_text(module_src)
        tb_path.write_text(testbench_src)
    except OSError as exc:
        raise ToolIoError(str(exc)) from exc
    return module_path, tb_path


def _classify_lines(stderr: str) -> tuple[tuple[str, str], ...]:
    # The tool's own "warning"/"error" markers decide severity; anything else
    # is informational context kept for the feedback prompt.
    messages = []
    for line in stderr.splitlines():
        if not line.strip():
            continue
        lowered = line.lower()
        if "warning" in lowered:
            severity = "warning"
        elif "error" in lowered or "give up" in lowered:
            severity = "error"
        else:
            severity = "info"
        messages.append((severity, line))
    return tuple(messages)


def compile_design(
    module_src: str,
    testbench_src: str,
    workdir: Path,
    top_name: str,
    tools: ToolchainConfig = DEFAULT_TOOLS,
) -> CompileResult:
    """Write the sources and compile them into ``<top>.vvp``.

    Exit code 0 with no warning lines is ``OK``; exit 0 with warnings is
    ``OK_WITH_WARNINGS``; anything else is ``ERROR`` with the tool's
    diagnostics attached.
    """
    module_path, tb_path = write_candidate_sources(module_src, testbench_src, workdir, top_name)
    artifact = workdir / f"{top_name}.vvp"
    argv = [
        tools.compiler,
        *tools.language_flags,
        *tools.extra_flags,
        "-o",
        artifact.name,
        module_path.name,
        tb_path.name,
    ]
    try:
        proc = subprocess.run(argv, cwd=workdir, capture_output=True, text=True)
    except FileNotFoundError as exc:
        raise ToolNotFoundError(f"compiler not found: {tools.compiler}") from exc
    except OSError as exc:
        raise ToolIoError(str(exc)) from exc
    messages = _classify_lines(proc.stderr)
    if proc.returncode != 0:
        return CompileResult(CompileStatus.ERROR, messages, None)
    has_warnings = any(severity == "warning" for severity, _ in messages)
    status = CompileStatus.OK_WITH_WARNINGS if has_warnings else CompileStatus.OK
    return CompileResult(status, messages, artifact)


def simulate(
    artifact_path: Path,
    timeout: float = DEFAULT_SIM_TIMEOUT,
    tools: ToolchainConfig = DEFAULT_TOOLS,
) -> SimResult:
    """Run the simulation runtime on a compiled artifact, killing it at timeout."""
    artifact_path = Path(artifact_path)
    if not artifact_path.exists():
        raise ToolIoError(f"simulation artifact missing: {artifact_path}")
    argv = [tools.runtime, "-n", artifact_path.name]
    start = time.monotonic()
    try:
        proc = subprocess.run(
            argv, cwd=artifact_path.parent, capture_output=True, text=True, timeout=timeout
        )
    except subprocess.TimeoutExpired as exc:
        stdout = exc.stdout or ""
        stderr = exc.stderr or ""
        if isinstance(stdout, bytes):
            stdout = stdout.decode(errors="replace")
        if isinstance(stderr, bytes):
            stderr = stderr.decode(errors="replace")
        return SimResult(False, True, stdout, stderr, time.monotonic() - start)
    except FileNotFoundError as exc:
        raise ToolNotFoundError(f"simulation runtime not found: {tools.runtime}") from exc
    except OSError as exc:
        raise ToolIoError(str(exc)) from exc
    return SimResult(proc.returncode == 0, False, proc.stdout, proc.stderr, time.monotonic() - start)


def parse_summary(stdout: str) -> TestbenchSummary | None:
    """Extract the testbench mismatch summary from simulation stdout.

    The last ``Mismatches: N in M samples`` line is authoritative; per-output
    ``Hint:`` lines are collected in print order. Returns None when no
    consistent summary exists, and ignores unrelated interleaved output.
    """
    hints = []
    totals = None
    for line in stdout.splitlines():
        hint = _HINT_RE.match(line)
        if hint:
            hints.append(OutputHint(hint.group(1), int(hint.group(2)), int(hint.group(3))))
            continue
        total = _TOTAL_RE.match(line)
        if total:
            totals = (int(total.group(1)), int(total.group(2)))
    if totals is None:
        return None
    mismatches, samples = totals
    if samples < 1 or mismatches > samples:
        return None
    return TestbenchSummary(mismatches, samples, tuple(hints))


CompileFn = Callable[[str, str, Path, str], CompileResult]
SimulateFn = Callable[[Path, float], SimResult]


def evaluate(
    candidate_text: str,
    task: DesignTask,
    workdir: Path,
    timeout: float = DEFAULT_SIM_TIMEOUT,
    *,
    tools: ToolchainConfig = DEFAULT_TOOLS,
    compile_fn: CompileFn | None = None,
    simulate_fn: SimulateFn | None = None,
) -> EvalOutcome:
    """Full pipeline for one candidate: extract, compile, simulate, classify.

    A parsed testbench summary always yields ``SIMULATED`` (warnings do not
    demote it); a warned compile with no summary is ``COMPILE_WARNED_NO_SIM``;
    a clean compile whose simulation crashed, hung or stayed silent is
    ``SIM_CRASH_OR_TIMEOUT``. The work directory must be fresh per candidate
    and ends up holding the sources, the artifact when one was built, and a
    ``log.txt`` transcript.
    """
    workdir = Path(workdir)
    workdir.mkdir(parents=True, exist_ok=True)
    if compile_fn is None:
        compile_fn = partial(compile_design, tools=tools)
    if simulate_fn is None:
        simulate_fn = partial(simulate, tools=tools)

    extraction = extract_module(candidate_text)
    if extraction.module_src is None:
        outcome = EvalOutcome(OutcomeKind.NO_MODULE)
        _write_candidate_log(workdir, task, extraction.source, None, None, outcome)
        return outcome

    compiled = compile_fn(extraction.module_src, task.testbench_src, workdir, task.name)
    if compiled.status is CompileStatus.ERROR:
        outcome = EvalOutcome(OutcomeKind.COMPILE_ERROR, compile_messages=compiled.raw_messages)
        _write_candidate_log(workdir, task, extraction.source, compiled, None, outcome)
        return outcome

    sim = simulate_fn(compiled.artifact_path, timeout)
    summary = parse_summary(sim.stdout)
    if summary is not None:
        outcome = EvalOutcome(
            OutcomeKind.SIMULATED,
            compile_messages=compiled.raw_messages,
            sim_stdout=sim.stdout,
            mismatches=summary.total_mismatches,
            samples=summary.total_samples,
            per_output_hints=summary.hints,
        )
    elif compiled.status is CompileStatus.OK_WITH_WARNINGS:
        outcome = EvalOutcome(
            OutcomeKind.COMPILE_WARNED_NO_SIM,
            compile_messages=compiled.raw_messages,
            sim_stdout=sim.stdout,
        )
    else:
        outcome = EvalOutcome(
            OutcomeKind.SIM_CRASH_OR_TIMEOUT,
            compile_messages=compiled.raw_messages,
            sim_stdout=sim.stdout,
            diagnosis=_diagnose(sim, timeout),
        )
    _write_candidate_log(workdir, task, extraction.source, compiled, sim, outcome)
    return outcome


def _diagnose(sim: SimResult, timeout: float) -> str:
    if sim.timed_out:
        return f"Simulation timed out after {timeout:g} seconds and was killed."
    if not sim.exit_ok:
        return "Simulation crashed before printing a testbench summary."
    return "Simulation finished without printing a testbench summary."


def _write_candidate_log(
    workdir: Path,
    task: DesignTask,
    source: ExtractionSource,
    compiled: CompileResult | None,
    sim: SimResult | None,
    outcome: EvalOutcome,
) -> None:
    lines = [f"Task: {task.name}", f"Extraction: {source.value}"]
    if compiled is not None:
        lines.append(f"Compile status: {compiled.status.value}")
        lines.extend(f"{severity}: {text}" for severity, text in compiled.messages)
    if sim is not None:
        lines.append(f"Simulation exit_ok: {sim.exit_ok}")
        lines.append(f"Simulation timed_out: {sim.timed_out}")
        if sim.stdout:
            lines.append("--- simulation stdout ---")
            lines.append(sim.stdout.rstrip("\n"))
        if sim.stderr:
            lines.append("--- simulation stderr ---")
            lines.append(sim.stderr.rstrip("\n"))
    lines.append(f"Outcome: {outcome.kind.value}")
    if outcome.kind is OutcomeKind.SIMULATED:
        lines.append(f"Mismatches: {outcome.mismatches}")
        lines.append(f"Samples: {outcome.samples}")
    if outcome.diagnosis:
        lines.append(outcome.diagnosis)
    try:
        (workdir / "log.txt").write_text("\n".join(lines) + "\n")
    except OSError as exc:
        raise ToolIoError(str(exc)) from exc
