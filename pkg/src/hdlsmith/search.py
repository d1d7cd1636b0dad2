"""Greedy tree search over candidate batches, with mixed-model scheduling.

At every depth the backend produces ``k`` candidates, all are evaluated and
ranked, and only the best one's tool feedback seeds the next depth. The
search exits early the moment any candidate passes every testbench sample,
and otherwise reports the best candidate seen anywhere in the tree.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Callable, Mapping

from . import edatools
from .backends import (
    BackendError,
    BackendRegistry,
    ContextOverflowError,
    GenerationBatch,
    GenerationRequest,
    supports_system_role,
)
from .core import (
    CandidateResponse,
    CostLedger,
    DepthNode,
    DesignTask,
    EvalOutcome,
    LedgerEntry,
    ModelSpec,
    SearchTrace,
    Termination,
    TokenUsage,
    candidate_order_key,
    compute_cost,
    rank_outcome,
)
from .extract import extract_module
from .prompts import (
    Conversation,
    FeedbackMode,
    estimate_tokens,
    feedback_text,
    flatten_for_backend,
    initial_conversation,
    next_conversation,
    succinct_window,
)

FINAL_ITERATION = -1  # sentinel start_iteration marking the final-pass model


@dataclass(frozen=True)
class SearchConfig:
    """Search parameters: k candidates per depth, maximum depth d, window mode."""

    num_candidates: int
    max_depth: int
    feedback_mode: FeedbackMode = FeedbackMode.SUCCINCT
    sim_timeout: float = edatools.DEFAULT_SIM_TIMEOUT
    outdir: Path = Path("output_dir")
    eval_workers: int = 1
    sampling: Mapping[str, object] = field(default_factory=dict)

    def __post_init__(self) -> None:
        object.__setattr__(self, "outdir", Path(self.outdir))
        if self.num_candidates < 1:
            raise ValueError("num_candidates must be at least 1")
        if self.max_depth < 0:
            raise ValueError("max_depth must be non-negative")
        if self.eval_workers < 1:
            raise ValueError("eval_workers must be at least 1")


@dataclass(frozen=True)
class ScheduleEntry:
    start_iteration: int
    model: ModelSpec


@dataclass(frozen=True)
class ModelSchedule:
    """Which model serves which iteration.

    Non-sentinel entries apply from their start iteration onward; the
    optional ``start_iteration == -1`` entry fires only on the final
    iteration of a search with depth > 0.
    """

    entries: tuple[ScheduleEntry, ...]

    def __post_init__(self) -> None:
        object.__setattr__(
            self,
            "entries",
            tuple(e if isinstance(e, ScheduleEntry) else ScheduleEntry(*e) for e in self.entries),
        )
        sentinels = [e for e in self.entries if e.start_iteration == FINAL_ITERATION]
        regular = [e for e in self.entries if e.start_iteration != FINAL_ITERATION]
        if len(sentinels) > 1:
            raise ValueError("at most one final-iteration entry is allowed")
        if any(e.start_iteration < 0 for e in regular):
            raise ValueError("start iterations must be non-negative (or the -1 sentinel)")
        starts = [e.start_iteration for e in regular]
        if len(set(starts)) != len(starts):
            raise ValueError("start iterations must be distinct")
        if 0 not in starts:
            raise ValueError("a schedule needs an entry starting at iteration 0")

    @classmethod
    def single(cls, model: ModelSpec) -> "ModelSchedule":
        return cls((ScheduleEntry(0, model),))

    @property
    def final_model(self) -> ModelSpec | None:
        for entry in self.entries:
            if entry.start_iteration == FINAL_ITERATION:
                return entry.model
        return None


def model_for_iteration(sched: ModelSchedule, iteration: int, max_depth: int) -> ModelSpec:
    """Resolve the model serving one iteration of a depth-``max_depth`` search.

    The sentinel fires only when the final iteration of a non-zero-depth
    search is reached; otherwise the non-sentinel entry with the largest
    start iteration at or below ``iteration`` wins.
    """
    if not 0 <= iteration <= max_depth:
        raise ValueError(f"iteration {iteration} outside [0, {max_depth}]")
    final = sched.final_model
    if final is not None and iteration == max_depth and max_depth > 0:
        return final
    applicable = [
        e for e in sched.entries
        if e.start_iteration != FINAL_ITERATION and e.start_iteration <= iteration
    ]
    return max(applicable, key=lambda e: e.start_iteration).model


Evaluator = Callable[[str, DesignTask, Path, float], EvalOutcome]


def run_search(
    task: DesignTask,
    cfg: SearchConfig,
    sched: ModelSchedule,
    backends: BackendRegistry,
    *,
    evaluator: Evaluator | None = None,
) -> SearchTrace:
    """Run the greedy tree search for one task and return the full trace.

    Candidate ``i`` at depth ``n`` is evaluated inside
    ``outdir/iter<n>/response<i>``. A backend failure terminates the trace
    with partial results preserved; at most ``k * (d + 1)`` candidates are
    ever generated.
    """
    if evaluator is None:
        evaluator = edatools.evaluate
    conversation = initial_conversation(task, cfg.feedback_mode)
    nodes: list[DepthNode] = []
    ledger_entries: list[LedgerEntry] = []
    termination = Termination.MAX_DEPTH_REACHED

    for depth in range(cfg.max_depth + 1):
        model = model_for_iteration(sched, depth, cfg.max_depth)
        backend = backends.get(model.family)
        if backend is None:
            raise KeyError(f"no backend registered for model family {model.family!r}")

        conv_call, fallback = _window_for_call(conversation, model, cfg.feedback_mode)
        request = GenerationRequest(
            conversation=flatten_for_backend(conv_call, supports_system_role(model)),
            model=model,
            num_candidates=cfg.num_candidates,
            sampling=cfg.sampling,
            task_name=task.name,
            depth=depth,
        )
        try:
            batch = backend.generate(request)
        except ContextOverflowError:
            # One failover retry with the succinct window; if that cannot
            # shrink the prompt (or already failed), the depth is lost.
            if fallback or len(conversation.messages) <= 4:
                termination = Termination.BACKEND_ERROR
                break
            conv_call, fallback = succinct_window(conversation), True
            request = replace(
                request,
                conversation=flatten_for_backend(conv_call, supports_system_role(model)),
            )
            try:
                batch = backend.generate(request)
            except BackendError:
                termination = Termination.BACKEND_ERROR
                break
        except BackendError:
            termination = Termination.BACKEND_ERROR
            break

        candidates = _evaluate_batch(batch, task, cfg, model, depth, evaluator)
        ledger_entries.extend(
            LedgerEntry(depth, c.index, model.model_id, c.usage, c.cost_usd) for c in candidates
        )
        chosen_index = min(range(len(candidates)), key=lambda i: candidate_order_key(candidates[i]))
        nodes.append(
            DepthNode(depth, model.family, model.model_id, tuple(candidates), chosen_index, fallback)
        )

        chosen = candidates[chosen_index]
        if chosen.rank.value == 1.0:
            termination = Termination.ALL_TESTS_PASSED
            break
        if depth == cfg.max_depth:
            break
        conversation = next_conversation(
            conversation, chosen.raw_text, feedback_text(chosen.outcome), cfg.feedback_mode
        )

    return SearchTrace(
        nodes=tuple(nodes),
        best_overall=_best_overall(nodes),
        termination=termination,
        ledger=CostLedger(tuple(ledger_entries)),
    )


def _window_for_call(
    conversation: Conversation, model: ModelSpec, mode: FeedbackMode
) -> tuple[Conversation, bool]:
    # Full-context histories that would blow the context window fail over to
    # the succinct shape for this call only; the canonical history keeps
    # growing so later, roomier models still see everything.
    if (
        mode is FeedbackMode.FULL_CONTEXT
        and len(conversation.messages) > 4
        and estimate_tokens(conversation) > model.max_context_tokens
    ):
        return succinct_window(conversation), True
    return conversation, False


def _evaluate_batch(
    batch: GenerationBatch,
    task: DesignTask,
    cfg: SearchConfig,
    model: ModelSpec,
    depth: int,
    evaluator: Evaluator,
) -> list[CandidateResponse]:
    def evaluate_one(item: tuple[int, tuple[str, TokenUsage]]) -> CandidateResponse:
        index, (text, usage) = item
        workdir = cfg.outdir / f"iter{depth}" / f"response{index}"
        outcome = evaluator(text, task, workdir, cfg.sim_timeout)
        return CandidateResponse(
            raw_text=text,
            module_src=extract_module(text).module_src,
            usage=usage,
            cost_usd=compute_cost(usage, model),
            outcome=outcome,
            rank=rank_outcome(outcome),
            depth=depth,
            index=index,
        )

    items = list(enumerate(batch.replies))
    if cfg.eval_workers == 1 or len(items) == 1:
        return [evaluate_one(item) for item in items]
    with ThreadPoolExecutor(max_workers=cfg.eval_workers) as pool:
        return list(pool.map(evaluate_one, items))


def _best_overall(nodes: list[DepthNode]) -> tuple[int, int] | None:
    best: CandidateResponse | None = None
    for node in nodes:
        for candidate in node.candidates:
            if best is None or candidate_order_key(candidate) < candidate_order_key(best):
                best = candidate
    if best is None:
        return None
    return (best.depth, best.index)


def pass_at_budget(trace: SearchTrace) -> tuple[int, bool]:
    """Queries actually consumed and whether the search succeeded.

    The comparable zero-shot budget for a ``(k, d)`` search is ``k * (d + 1)``
    candidates; traces that exit early consume fewer.
    """
    used = sum(len(node.candidates) for node in trace.nodes)
    return used, trace.termination is Termination.ALL_TESTS_PASSED
