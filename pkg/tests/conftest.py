"""Shared fixtures: canned tool output, task builders, candidate builders."""

from __future__ import annotations

from decimal import Decimal

import pytest

from hdlsmith.core import (
    CandidateResponse,
    DesignTask,
    EvalOutcome,
    OutcomeKind,
    TokenUsage,
    rank_outcome,
)

# Output of a self-checking testbench for a badly failing sequential design.
SAMPLE_SUMMARY_OUTPUT = """Hint: Output 'count' has 218816 mismatches. First mismatch occurred at time 130.
Hint: Output 'counting' has 233794 mismatches. First mismatch occurred at time 130.
Hint: Output 'done' has 524 mismatches. First mismatch occurred at time 20130.
Hint: Total mismatched samples is 234318 out of 235447 samples

Simulation finished at 1177236 ps
Mismatches: 234318 in 235447 samples
"""

SAMPLE_TOTALS = (234318, 235447)
SAMPLE_HINTS = [
    ("count", 218816, 130),
    ("counting", 233794, 130),
    ("done", 524, 20130),
]


@pytest.fixture
def task() -> DesignTask:
    return DesignTask(
        name="top_module",
        prompt_text="// Build a 2-to-1 multiplexer\nmodule top_module(input a, input b, input sel, output out);",
        testbench_src="module tb(); endmodule",
    )


def make_outcome(kind: OutcomeKind = OutcomeKind.SIMULATED, **kwargs) -> EvalOutcome:
    if kind is OutcomeKind.SIMULATED:
        kwargs.setdefault("mismatches", 1)
        kwargs.setdefault("samples", 4)
    return EvalOutcome(kind, **kwargs)


def make_candidate(
    rank_value: float | None = None,
    *,
    depth: int = 0,
    index: int = 0,
    outcome: EvalOutcome | None = None,
    raw_text: str = "```\nmodule top_module(); endmodule\n```",
    usage: TokenUsage = TokenUsage(10, 20),
    cost: Decimal = Decimal("0.0001"),
    module_src: str | None = "module top_module(); endmodule",
) -> CandidateResponse:
    """Build a consistent candidate; rank_value picks a matching outcome."""
    if outcome is None:
        if rank_value is None:
            rank_value = 0.5
        if rank_value == -2:
            outcome = EvalOutcome(OutcomeKind.NO_MODULE)
            module_src = None
        elif rank_value == -1:
            outcome = EvalOutcome(OutcomeKind.COMPILE_ERROR, compile_messages=("boom",))
        elif rank_value == -0.5:
            outcome = EvalOutcome(OutcomeKind.SIM_CRASH_OR_TIMEOUT)
        else:
            # Pick counts whose proportional rank reproduces rank_value.
            samples = 1_000_000
            mismatches = round(samples * (1 - rank_value))
            outcome = EvalOutcome(
                OutcomeKind.SIMULATED, mismatches=mismatches, samples=samples
            )
    elif outcome.kind is OutcomeKind.NO_MODULE:
        module_src = None
    return CandidateResponse(
        raw_text=raw_text,
        module_src=module_src,
        usage=usage,
        cost_usd=cost,
        outcome=outcome,
        rank=rank_outcome(outcome),
        depth=depth,
        index=index,
    )
