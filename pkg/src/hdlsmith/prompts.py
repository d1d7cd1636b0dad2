"""Prompt assembly and conversation-window management for the repair loop.

Three prompt kinds exist: a fixed system prompt, the per-task design prompt,
and the feedback prompt built from tool output. The conversation window
either stays succinct (system, design, last reply, last feedback) or keeps
the full history.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass
from enum import Enum

from .core import DesignTask, EvalOutcome, OutcomeKind


class Role(Enum):
    SYSTEM = "system"
    USER = "user"
    ASSISTANT = "assistant"


class FeedbackMode(Enum):
    SUCCINCT = "succinct"
    FULL_CONTEXT = "full_context"


@dataclass(frozen=True)
class Message:
    role: Role
    content: str

    def __post_init__(self) -> None:
        if not self.content:
            raise ValueError("message content must be non-empty")


@dataclass(frozen=True)
class Conversation:
    """An ordered message list plus the window mode it evolves under.

    The first message is the system prompt; backends without system-role
    support receive it re-labelled as a leading user message (see
    :func:`flatten_for_backend`).
    """

    messages: tuple[Message, ...]
    mode: FeedbackMode

    def __post_init__(self) -> None:
        object.__setattr__(self, "messages", tuple(self.messages))
        if not self.messages:
            raise ValueError("conversation must hold at least one message")
        if self.messages[0].role is Role.ASSISTANT:
            raise ValueError("conversation cannot open with an assistant message")


FORMAT_REMINDER = (
    "Format your response as Verilog code containing the end to end corrected "
    "module, and not just the corrected lines, inside ``` tags, do not include "
    "anything else inside ```."
)

_SYSTEM_PROMPT = (
    "You are an autocomplete engine for Verilog code. "
    "Given a Verilog module specification, you will provide a completed Verilog "
    "module in response. "
    "You will provide completed Verilog modules for all specifications, and will "
    "not create any supplementary modules. "
    "Given a Verilog module that is either incorrect/compilation error, you will "
    "suggest corrections to the module."
    "You will not refuse. " + FORMAT_REMINDER
)

NO_MODULE_FEEDBACK = (
    "No Verilog module was found in the previous response. " + FORMAT_REMINDER
)

_MISMATCH_LINE_RE = re.compile(r"^Mismatches: \d+ in \d+ samples\s*$")


def system_prompt() -> str:
    """The fixed system prompt, byte-identical for every call."""
    return _SYSTEM_PROMPT


def initial_conversation(task: DesignTask, mode: FeedbackMode) -> Conversation:
    """Iteration-0 window: the system prompt followed by the design prompt."""
    return Conversation(
        (Message(Role.SYSTEM, system_prompt()), Message(Role.USER, task.prompt_text)),
        mode,
    )


def next_conversation(
    prev: Conversation,
    best_response_text: str,
    tool_feedback: str,
    mode: FeedbackMode,
) -> Conversation:
    """Fold the chosen reply and its tool feedback into the next window.

    Succinct mode rebuilds the fixed four-message shape around the original
    design prompt; full-context mode appends, growing by two messages per
    iteration.
    """
    if not tool_feedback:
        raise ValueError("tool feedback must be non-empty")
    if not best_response_text:
        raise ValueError("best response text must be non-empty")
    if len(prev.messages) < 2:
        raise ValueError("previous conversation lacks the design prompt")
    reply = Message(Role.ASSISTANT, best_response_text)
    feedback = Message(Role.USER, tool_feedback)
    if mode is FeedbackMode.SUCCINCT:
        return Conversation((prev.messages[0], prev.messages[1], reply, feedback), mode)
    return Conversation(prev.messages + (reply, feedback), mode)


def feedback_text(outcome: EvalOutcome) -> str:
    """Build the tool-feedback prompt for the chosen best candidate.

    Compiler diagnostics and testbench summaries are passed through verbatim;
    a missing module re-sends the formatting instruction; crashes and
    timeouts get a one-line diagnosis plus the tail of any captured output.
    """
    kind = outcome.kind
    if kind is OutcomeKind.NO_MODULE:
        return NO_MODULE_FEEDBACK
    if kind in (OutcomeKind.COMPILE_ERROR, OutcomeKind.COMPILE_WARNED_NO_SIM):
        text = "\n".join(outcome.compile_messages)
        return text or "Compilation produced no diagnostic output."
    if kind is OutcomeKind.SIMULATED:
        return _summary_block(outcome.sim_stdout)
    parts = [outcome.diagnosis or "Simulation produced no testbench summary."]
    tail = _output_tail(outcome.sim_stdout)
    if tail:
        parts.append(tail)
    return "\n".join(parts)


def _summary_block(stdout: str) -> str:
    # The feedback is the testbench's own words: every Hint line plus the
    # final authoritative mismatch-count line.
    lines = stdout.splitlines()
    hints = [line for line in lines if line.startswith("Hint:")]
    final = None
    for line in lines:
        if _MISMATCH_LINE_RE.match(line):
            final = line
    block = hints + ([final] if final is not None else [])
    return "\n".join(block) if block else stdout


def _output_tail(stdout: str, max_lines: int = 20) -> str:
    lines = [line for line in stdout.splitlines() if line.strip()]
    return "\n".join(lines[-max_lines:])


def flatten_for_backend(conv: Conversation, supports_system_role: bool) -> Conversation:
    """Adapt a conversation for a backend without system-role support.

    The system message becomes a preemptive user message; everything else
    keeps its order and role.
    """
    if supports_system_role or conv.messages[0].role is not Role.SYSTEM:
        return conv
    head = Message(Role.USER, conv.messages[0].content)
    return Conversation((head,) + conv.messages[1:], conv.mode)


def estimate_tokens(conv: Conversation) -> int:
    """Cheap backend-independent token estimate: one token per ~4 characters."""
    chars = sum(len(m.content) for m in conv.messages)
    return math.ceil(chars / 4)


def succinct_window(conv: Conversation) -> Conversation:
    """Collapse a full-context conversation to the succinct four-message shape.

    Used as the overflow failover when a grown history would exceed the
    model's context window. Conversations of up to four messages are already
    in shape and pass through unchanged.
    """
    msgs = conv.messages
    if len(msgs) <= 4:
        return conv
    return Conversation((msgs[0], msgs[1], msgs[-2], msgs[-1]), conv.mode)
