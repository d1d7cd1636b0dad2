"""Uniform interface for requesting candidate completions from model backends.

Two HTTP wire-format families are implemented directly (a chat-completions
style and a messages style), plus a local-process hook and a deterministic
scripted mock for offline runs. Credentials come from environment variables;
transports are injectable so tests replay recorded fixtures.
"""

from __future__ import annotations

import json
import math
import os
import random
import subprocess
import threading
import time
from dataclasses import dataclass, field, replace
from decimal import Decimal
from pathlib import Path
from typing import Callable, Mapping, Protocol

import requests

from .core import ModelSpec, TokenUsage
from .prompts import Conversation, Role

CHAT_COMPLETIONS_FAMILY = "ChatGPT"
MESSAGES_FAMILY = "Claude"
LOCAL_FAMILY = "local"
MOCK_FAMILY = "mock"


class BackendError(Exception):
    """Base class for generation failures; aborts the current search depth."""


class AuthError(BackendError):
    """Bad or missing credentials; never retried."""


class RateLimitedError(BackendError):
    """Provider throttled the request; retried with backoff."""


class TransportError(BackendError):
    """Network or server-side failure; retried with backoff."""


class ContextOverflowError(BackendError):
    """The prompt exceeded the model's context window; signals window fallback."""


class UnknownModelFamilyError(BackendError):
    pass


@dataclass(frozen=True)
class GenerationRequest:
    """One request for ``num_candidates`` completions of a conversation.

    ``task_name``/``depth`` are attribution metadata: scripted backends key
    replies on them and call records carry them.
    """

    conversation: Conversation
    model: ModelSpec
    num_candidates: int = 1
    sampling: Mapping[str, object] = field(default_factory=dict)
    task_name: str | None = None
    depth: int | None = None

    def __post_init__(self) -> None:
        if self.num_candidates < 1:
            raise ValueError("num_candidates must be at least 1")


@dataclass(frozen=True)
class GenerationBatch:
    """Reply texts with per-reply token usage, in request order."""

    replies: tuple[tuple[str, TokenUsage], ...]
    model_id: str

    def __post_init__(self) -> None:
        object.__setattr__(self, "replies", tuple(self.replies))


class Backend(Protocol):
    def generate(self, req: GenerationRequest) -> GenerationBatch: ...


_SYSTEM_ROLE_SUPPORT = {
    CHAT_COMPLETIONS_FAMILY: True,
    # The messages family gets its system text as a preemptive user turn.
    MESSAGES_FAMILY: False,
    LOCAL_FAMILY: True,
    MOCK_FAMILY: True,
}


def supports_system_role(model: ModelSpec) -> bool:
    """Capability lookup: can this family take a native system message?"""
    try:
        return _SYSTEM_ROLE_SUPPORT[model.family]
    except KeyError:
        raise UnknownModelFamilyError(f"unknown model family {model.family!r}") from None


MODEL_CATALOG: dict[str, ModelSpec] = {
    spec.model_id: spec
    for spec in (
        ModelSpec(MESSAGES_FAMILY, "claude-3-haiku", Decimal("0.25"), Decimal("1.25"), 200_000),
        ModelSpec(CHAT_COMPLETIONS_FAMILY, "gpt-3.5-turbo-16k", Decimal("3.00"), Decimal("4.00"), 16_000),
        ModelSpec(CHAT_COMPLETIONS_FAMILY, "gpt-4o-mini", Decimal("0.15"), Decimal("0.60"), 128_000),
        ModelSpec(CHAT_COMPLETIONS_FAMILY, "gpt-4o", Decimal("5.00"), Decimal("15.00"), 128_000),
    )
}


def lookup_model(model_id: str, family: str | None = None) -> ModelSpec:
    """Resolve a model id against the pricing catalog.

    Unknown ids get a zero-priced spec with a generous context window so
    scripted and experimental models work without catalog entries.
    """
    spec = MODEL_CATALOG.get(model_id)
    if spec is not None:
        if family is not None and family != spec.family:
            return replace(spec, family=family)
        return spec
    return ModelSpec(family or MOCK_FAMILY, model_id, Decimal(0), Decimal(0), 128_000)


@dataclass(frozen=True)
class RetryPolicy:
    attempts: int = 5
    base_delay: float = 1.0
    factor: float = 2.0


DEFAULT_RETRY = RetryPolicy()


def backoff_delay(policy: RetryPolicy, retry_index: int, rng: random.Random) -> float:
    """Jittered exponential delay before retry ``retry_index`` (0-based).

    Jitter spans the upper half of each exponential step, so consecutive
    delays never decrease.
    """
    half = policy.base_delay * policy.factor**retry_index / 2.0
    return half + rng.random() * half


# Transport signature: (url, headers, json_body) -> (status_code, payload).
Transport = Callable[[str, Mapping[str, str], Mapping[str, object]], tuple[int, dict]]


def requests_transport(url: str, headers: Mapping[str, str], body: Mapping[str, object]) -> tuple[int, dict]:
    try:
        resp = requests.post(url, headers=dict(headers), json=body, timeout=120.0)
    except requests.RequestException as exc:
        raise TransportError(str(exc)) from exc
    try:
        payload = resp.json()
    except ValueError:
        payload = {"raw": resp.text}
    return resp.status_code, payload


def _error_message(payload: dict) -> str:
    err = payload.get("error")
    if isinstance(err, dict):
        return str(err.get("message", err))
    return str(err or payload)


def _looks_like_overflow(payload: dict) -> bool:
    err = payload.get("error")
    code = err.get("code", "") if isinstance(err, dict) else ""
    message = _error_message(payload).lower()
    return (
        code == "context_length_exceeded"
        or "context length" in message
        or "prompt is too long" in message
        or "too many tokens" in message
    )


def _raise_for_status(status: int, payload: dict) -> None:
    if status in (401, 403):
        raise AuthError(_error_message(payload))
    if status == 429:
        raise RateLimitedError(_error_message(payload))
    if status == 400 and _looks_like_overflow(payload):
        raise ContextOverflowError(_error_message(payload))
    if status >= 500:
        raise TransportError(f"server error {status}: {_error_message(payload)}")
    if status != 200:
        raise BackendError(f"unexpected status {status}: {_error_message(payload)}")


class _HttpBackend:
    """Shared retry/credential plumbing for the two HTTP families."""

    def __init__(
        self,
        *,
        base_url: str,
        api_key_env: str,
        transport: Transport | None = None,
        retry: RetryPolicy = DEFAULT_RETRY,
        sleep: Callable[[float], None] = time.sleep,
        rng: random.Random | None = None,
    ):
        self.base_url = base_url.rstrip("/")
        self.api_key_env = api_key_env
        self.transport = transport or requests_transport
        self.retry = retry
        self._sleep = sleep
        self._rng = rng or random.Random()

    def _api_key(self) -> str:
        key = os.environ.get(self.api_key_env)
        if not key:
            raise AuthError(f"environment variable {self.api_key_env} is not set")
        return key

    def _post_with_retries(self, url: str, headers: Mapping[str, str], body: Mapping[str, object]) -> dict:
        for attempt in range(self.retry.attempts):
            try:
                status, payload = self.transport(url, headers, body)
                _raise_for_status(status, payload)
                return payload
            except (RateLimitedError, TransportError):
                if attempt + 1 == self.retry.attempts:
                    raise
                self._sleep(backoff_delay(self.retry, attempt, self._rng))
        raise TransportError("retry loop exhausted")  # unreachable

    def generate(self, req: GenerationRequest) -> GenerationBatch:
        # Providers report usage per call, not per choice, so each candidate
        # is its own request to keep usage attributable per reply.
        replies = []
        for _ in range(req.num_candidates):
            replies.append(self._single_completion(req))
        return GenerationBatch(tuple(replies), req.model.model_id)

    def _single_completion(self, req: GenerationRequest) -> tuple[str, TokenUsage]:
        raise NotImplementedError


class ChatCompletionsBackend(_HttpBackend):
    """Chat-completions wire format (system/user/assistant message list)."""

    def __init__(self, base_url: str = "https://api.openai.com/v1", api_key_env: str = "OPENAI_API_KEY", **kwargs):
        super().__init__(base_url=base_url, api_key_env=api_key_env, **kwargs)

    def _single_completion(self, req: GenerationRequest) -> tuple[str, TokenUsage]:
        headers = {
            "Authorization": f"Bearer {self._api_key()}",
            "Content-Type": "application/json",
        }
        body = {
            "model": req.model.model_id,
            "messages": [
                {"role": m.role.value, "content": m.content} for m in req.conversation.messages
            ],
        }
        body.update(req.sampling)
        payload = self._post_with_retries(f"{self.base_url}/chat/completions", headers, body)
        try:
            text = payload["choices"][0]["message"]["content"]
            usage = payload.get("usage", {})
            tokens = TokenUsage(int(usage.get("prompt_tokens", 0)), int(usage.get("completion_tokens", 0)))
        except (KeyError, IndexError, TypeError) as exc:
            raise TransportError(f"malformed completion payload: {exc}") from exc
        return str(text), tokens


class MessagesBackend(_HttpBackend):
    """Messages wire format (user/assistant turns, no native system role)."""

    api_version = "2023-06-01"
    default_max_tokens = 4096

    def __init__(self, base_url: str = "https://api.anthropic.com/v1", api_key_env: str = "ANTHROPIC_API_KEY", **kwargs):
        super().__init__(base_url=base_url, api_key_env=api_key_env, **kwargs)

    @staticmethod
    def _wire_messages(conv: Conversation) -> list[dict]:
        # System turns were flattened upstream; merge consecutive same-role
        # turns because the wire format requires strict alternation.
        merged: list[dict] = []
        for msg in conv.messages:
            role = "assistant" if msg.role is Role.ASSISTANT else "user"
            if merged and merged[-1]["role"] == role:
                merged[-1]["content"] += "\n\n" + msg.content
            else:
                merged.append({"role": role, "content": msg.content})
        return merged

    def _single_completion(self, req: GenerationRequest) -> tuple[str, TokenUsage]:
        headers = {
            "x-api-key": self._api_key(),
            "anthropic-version": self.api_version,
            "content-type": "application/json",
        }
        sampling = dict(req.sampling)
        body = {
            "model": req.model.model_id,
            "max_tokens": int(sampling.pop("max_tokens", self.default_max_tokens)),
            "messages": self._wire_messages(req.conversation),
        }
        body.update(sampling)
        payload = self._post_with_retries(f"{self.base_url}/messages", headers, body)
        try:
            text = "".join(
                block["text"] for block in payload["content"] if block.get("type") == "text"
            )
            usage = payload.get("usage", {})
            tokens = TokenUsage(int(usage.get("input_tokens", 0)), int(usage.get("output_tokens", 0)))
        except (KeyError, TypeError) as exc:
            raise TransportError(f"malformed messages payload: {exc}") from exc
        return text, tokens


@dataclass
class CommandBackend:
    """Local-process hook: pipe the rendered conversation to a command.

    One subprocess per candidate; stdout is the reply. Usage is estimated at
    ~4 characters per token since there is no provider report.
    """

    argv: tuple[str, ...]
    timeout: float = 300.0

    @staticmethod
    def _render(conv: Conversation) -> str:
        return "\n\n".join(f"[{m.role.value}]\n{m.content}" for m in conv.messages)

    def generate(self, req: GenerationRequest) -> GenerationBatch:
        prompt = self._render(req.conversation)
        replies = []
        for _ in range(req.num_candidates):
            try:
                proc = subprocess.run(
                    list(self.argv),
                    input=prompt,
                    capture_output=True,
                    text=True,
                    timeout=self.timeout,
                )
            except subprocess.TimeoutExpired as exc:
                raise TransportError(f"local model timed out after {self.timeout:g}s") from exc
            except OSError as exc:
                raise TransportError(str(exc)) from exc
            if proc.returncode != 0:
                raise TransportError(f"local model exited {proc.returncode}: {proc.stderr.strip()}")
            usage = TokenUsage(math.ceil(len(prompt) / 4), math.ceil(len(proc.stdout) / 4))
            replies.append((proc.stdout, usage))
        return GenerationBatch(tuple(replies), req.model.model_id)


@dataclass(frozen=True)
class MockCall:
    """Record of one generate() invocation against the mock backend."""

    task_name: str | None
    depth: int | None
    model_id: str
    num_candidates: int
    conversation: Conversation


DEFAULT_MOCK_REPLY = "I am unable to help with that request."


class MockBackend:
    """Deterministic scripted backend for offline runs and tests.

    Replies are keyed by ``(task_name, depth, index)``; unknown keys fall back
    to a configurable default reply that contains no module and therefore
    ranks -2 downstream. Every call is recorded for instrumentation.
    """

    def __init__(
        self,
        script: Mapping[tuple[str, int, int], str] | None = None,
        tokens_per_reply: TokenUsage = TokenUsage(100, 100),
        default_reply: str = DEFAULT_MOCK_REPLY,
    ):
        self.script = dict(script or {})
        self.tokens_per_reply = tokens_per_reply
        self.default_reply = default_reply
        self.calls: list[MockCall] = []
        self._lock = threading.Lock()

    def generate(self, req: GenerationRequest) -> GenerationBatch:
        with self._lock:
            self.calls.append(
                MockCall(req.task_name, req.depth, req.model.model_id, req.num_candidates, req.conversation)
            )
        replies = tuple(
            (self.script.get((req.task_name, req.depth, i), self.default_reply), self.tokens_per_reply)
            for i in range(req.num_candidates)
        )
        return GenerationBatch(replies, req.model.model_id)


def load_mock_script(path: str | Path) -> MockBackend:
    """Build a mock backend from a JSON script file.

    Schema: ``{"default_reply": str, "tokens_per_reply": {"input_tokens": n,
    "output_tokens": n}, "replies": {"<task>/<depth>/<index>": str}}``; all
    keys optional.
    """
    data = json.loads(Path(path).read_text())
    script: dict[tuple[str, int, int], str] = {}
    for key, text in data.get("replies", {}).items():
        task_name, depth, index = key.rsplit("/", 2)
        script[(task_name, int(depth), int(index))] = text
    tokens = data.get("tokens_per_reply", {})
    return MockBackend(
        script,
        tokens_per_reply=TokenUsage(
            int(tokens.get("input_tokens", 100)), int(tokens.get("output_tokens", 100))
        ),
        default_reply=data.get("default_reply", DEFAULT_MOCK_REPLY),
    )


BackendRegistry = Mapping[str, Backend]


def default_registry(**extra: Backend) -> dict[str, Backend]:
    """The standard family-to-backend map, with overrides merged in."""
    registry: dict[str, Backend] = {
        CHAT_COMPLETIONS_FAMILY: ChatCompletionsBackend(),
        MESSAGES_FAMILY: MessagesBackend(),
    }
    registry.update(extra)
    return registry
