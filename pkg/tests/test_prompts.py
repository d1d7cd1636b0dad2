"""Prompt text stability, conversation window shapes, feedback assembly."""

from __future__ import annotations

import hashlib

import pytest
from hypothesis import given
from hypothesis import strategies as st

from conftest import SAMPLE_SUMMARY_OUTPUT
from hdlsmith.core import EvalOutcome, OutcomeKind
from hdlsmith.prompts import (
    Conversation,
    FeedbackMode,
    Message,
    Role,
    estimate_tokens,
    feedback_text,
    flatten_for_backend,
    initial_conversation,
    next_conversation,
    succinct_window,
    system_prompt,
)

SYSTEM_PROMPT_SHA256 = "33e1b838c6ffeb03f580c94caa0b87bf94e4d21e959a9a0d47d93d3165fffb6e"


class TestSystemPrompt:
    def test_opening_words(self):
        assert system_prompt().startswith("You are an autocomplete engine for Verilog code.")

    def test_mentions_fence_tags(self):
        assert "inside ``` tags" in system_prompt()

    def test_byte_stable(self):
        first, second = system_prompt(), system_prompt()
        assert first == second
        assert hashlib.sha256(first.encode()).hexdigest() == SYSTEM_PROMPT_SHA256


class TestInitialConversation:
    def test_two_messages(self, task):
        conv = initial_conversation(task, FeedbackMode.SUCCINCT)
        assert [m.role for m in conv.messages] == [Role.SYSTEM, Role.USER]

    def test_design_prompt_verbatim(self, task):
        conv = initial_conversation(task, FeedbackMode.SUCCINCT)
        assert conv.messages[1].content == task.prompt_text

    def test_mode_does_not_change_shape(self, task):
        succinct = initial_conversation(task, FeedbackMode.SUCCINCT)
        full = initial_conversation(task, FeedbackMode.FULL_CONTEXT)
        assert [m.role for m in succinct.messages] == [m.role for m in full.messages]
        assert [m.content for m in succinct.messages] == [m.content for m in full.messages]


class TestNextConversation:
    def _iterate(self, task, mode, rounds):
        conv = initial_conversation(task, mode)
        for n in range(rounds):
            conv = next_conversation(conv, f"reply {n}", f"feedback {n}", mode)
        return conv

    def test_succinct_is_four_messages_at_any_depth(self, task):
        conv = self._iterate(task, FeedbackMode.SUCCINCT, 3)
        assert len(conv.messages) == 4
        assert [m.role for m in conv.messages] == [
            Role.SYSTEM, Role.USER, Role.ASSISTANT, Role.USER,
        ]

    @pytest.mark.parametrize("rounds", range(6))
    def test_full_context_grows_by_two(self, task, rounds):
        conv = self._iterate(task, FeedbackMode.FULL_CONTEXT, rounds)
        assert len(conv.messages) == 2 + 2 * rounds

    def test_succinct_keeps_original_design_prompt(self, task):
        mode = FeedbackMode.SUCCINCT
        conv = self._iterate(task, mode, 1)
        first = conv.messages[1].content
        conv = next_conversation(conv, "another reply", "more feedback", mode)
        assert conv.messages[1].content == first == task.prompt_text

    def test_design_prompt_present_every_round_both_modes(self, task):
        for mode in FeedbackMode:
            conv = initial_conversation(task, mode)
            for n in range(5):
                conv = next_conversation(conv, f"r{n}", f"f{n}", mode)
                assert conv.messages[1].content == task.prompt_text
                if mode is FeedbackMode.SUCCINCT:
                    assert len(conv.messages) <= 4

    def test_rejects_empty_feedback(self, task):
        conv = initial_conversation(task, FeedbackMode.SUCCINCT)
        with pytest.raises(ValueError):
            next_conversation(conv, "reply", "", FeedbackMode.SUCCINCT)

    def test_rejects_empty_reply(self, task):
        conv = initial_conversation(task, FeedbackMode.SUCCINCT)
        with pytest.raises(ValueError):
            next_conversation(conv, "", "feedback", FeedbackMode.SUCCINCT)

    def test_latest_reply_and_feedback_are_last_two(self, task):
        for mode in FeedbackMode:
            conv = self._iterate(task, mode, 4)
            assert conv.messages[-2] == Message(Role.ASSISTANT, "reply 3")
            assert conv.messages[-1] == Message(Role.USER, "feedback 3")


class TestFeedbackText:
    def test_simulated_passes_summary_through(self):
        outcome = EvalOutcome(
            OutcomeKind.SIMULATED,
            sim_stdout=SAMPLE_SUMMARY_OUTPUT,
            mismatches=234318,
            samples=235447,
        )
        text = feedback_text(outcome)
        assert "Total mismatched samples is 234318 out of 235447 samples" in text
        assert "Mismatches: 234318 in 235447 samples" in text
        # Unrelated progress lines stay out of the feedback block.
        assert "Simulation finished" not in text

    def test_compile_errors_in_order(self):
        outcome = EvalOutcome(
            OutcomeKind.COMPILE_ERROR,
            compile_messages=("first: error: aaa", "second: error: bbb"),
        )
        text = feedback_text(outcome)
        assert text.index("first") < text.index("second")

    def test_warning_messages_verbatim(self):
        outcome = EvalOutcome(
            OutcomeKind.COMPILE_WARNED_NO_SIM,
            compile_messages=("x.sv:1: warning: something odd",),
        )
        assert feedback_text(outcome) == "x.sv:1: warning: something odd"

    def test_timeout_mentions_configured_limit(self):
        outcome = EvalOutcome(
            OutcomeKind.SIM_CRASH_OR_TIMEOUT,
            diagnosis="Simulation timed out after 60 seconds and was killed.",
            sim_stdout="partial line\n",
        )
        text = feedback_text(outcome)
        assert "60" in text
        assert "partial line" in text

    def test_no_module_resends_format_instruction(self):
        text = feedback_text(EvalOutcome(OutcomeKind.NO_MODULE))
        assert "No Verilog module was found" in text
        assert "inside ``` tags" in text


class TestFlatten:
    def test_identity_when_supported(self, task):
        conv = initial_conversation(task, FeedbackMode.SUCCINCT)
        assert flatten_for_backend(conv, True) is conv

    def test_system_becomes_leading_user(self, task):
        conv = initial_conversation(task, FeedbackMode.SUCCINCT)
        flat = flatten_for_backend(conv, False)
        assert [m.role for m in flat.messages] == [Role.USER, Role.USER]
        assert flat.messages[0].content == system_prompt()
        assert flat.messages[1].content == task.prompt_text

    @given(
        st.lists(
            st.tuples(st.sampled_from([Role.USER, Role.ASSISTANT]), st.text(min_size=1, max_size=8)),
            max_size=6,
        )
    )
    def test_role_multiset_preserved_modulo_system(self, tail):
        messages = [Message(Role.SYSTEM, "sys")] + [Message(r, c) for r, c in tail]
        conv = Conversation(tuple(messages), FeedbackMode.FULL_CONTEXT)
        flat = flatten_for_backend(conv, False)
        assert len(flat.messages) == len(conv.messages)
        assert [m.content for m in flat.messages] == [m.content for m in conv.messages]
        assert [m.role for m in flat.messages[1:]] == [m.role for m in conv.messages[1:]]
        assert flat.messages[0].role is Role.USER


class TestWindowHelpers:
    def test_estimate_rounds_up(self, task):
        conv = Conversation((Message(Role.SYSTEM, "abcde"),), FeedbackMode.SUCCINCT)
        assert estimate_tokens(conv) == 2

    def test_succinct_window_collapses_long_history(self, task):
        mode = FeedbackMode.FULL_CONTEXT
        conv = initial_conversation(task, mode)
        for n in range(4):
            conv = next_conversation(conv, f"r{n}", f"f{n}", mode)
        window = succinct_window(conv)
        assert len(window.messages) == 4
        assert window.messages[0] == conv.messages[0]
        assert window.messages[1].content == task.prompt_text
        assert window.messages[2] == conv.messages[-2]
        assert window.messages[3] == conv.messages[-1]

    def test_short_conversations_pass_through(self, task):
        conv = initial_conversation(task, FeedbackMode.FULL_CONTEXT)
        assert succinct_window(conv) is conv
