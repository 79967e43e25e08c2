"""Minimal chat-completion client, plus transcript recording and replay.

The wire format is the common ``/chat/completions`` shape: a JSON body
with ``model``, ``messages`` (role/content pairs) and generation
parameters; the reply carries ``choices[0].message.content`` and a
``usage`` block. Any provider or local stub that speaks it will do.

Transcripts are JSON lines, one exchange per line::

    {"key": "<sha256 of the request>", "request": {...}, "response": {"content": "...", "usage": {...}}}
"""

from __future__ import annotations

import hashlib
import json
import logging
import os
import threading
import time
from collections import defaultdict, deque
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Protocol

import httpx

from navjudge.policy.base import TokenUsage, TransportError

logger = logging.getLogger(__name__)

ENV_URL = "NAVJUDGE_LLM_URL"
ENV_API_KEY = "NAVJUDGE_LLM_API_KEY"

RETRYABLE_STATUS = {408, 409, 429, 500, 502, 503, 504}


@dataclass(frozen=True)
class ChatRequest:
    model: str
    messages: tuple[tuple[str, str], ...]
    temperature: float = 1.0
    reasoning_effort: str | None = None

    def __post_init__(self) -> None:
        if not self.messages:
            raise ValueError("a chat request needs at least one message")

    def to_payload(self) -> dict[str, Any]:
        payload: dict[str, Any] = {
            "model": self.model,
            "messages": [{"role": r, "content": c} for r, c in self.messages],
            "temperature": self.temperature,
        }
        if self.reasoning_effort is not None:
            payload["reasoning_effort"] = self.reasoning_effort
        return payload

    def key(self) -> str:
        blob = json.dumps(self.to_payload(), sort_keys=True, ensure_ascii=False)
        return hashlib.sha256(blob.encode("utf-8")).hexdigest()


@dataclass(frozen=True)
class ChatResponse:
    content: str
    usage: TokenUsage = field(default_factory=TokenUsage)

    def to_dict(self) -> dict[str, Any]:
        return {"content": self.content, "usage": self.usage.to_dict()}

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "ChatResponse":
        u = data.get("usage") or {}
        return cls(str(data["content"]), TokenUsage(
            int(u.get("prompt_tokens", 0)), int(u.get("thoughts_tokens", 0)), int(u.get("total_tokens", 0))
        ))


class ChatClient(Protocol):
    def complete(self, request: ChatRequest) -> ChatResponse: ...


def parse_usage(usage: dict[str, Any] | None) -> TokenUsage:
    """Read token counts from the usage block of either common dialect."""
    if not usage:
        return TokenUsage()
    prompt = usage.get("prompt_tokens", usage.get("prompt_token_count", 0)) or 0
    details = usage.get("completion_tokens_details") or {}
    thoughts = details.get("reasoning_tokens", usage.get("thoughts_token_count", 0)) or 0
    total = usage.get("total_tokens", usage.get("total_token_count"))
    if total is None:
        total = prompt + (usage.get("completion_tokens", 0) or 0) + (0 if details else thoughts)
    return TokenUsage(int(prompt), int(thoughts), max(int(total), int(prompt)))


class TokenBucket:
    """Thread-safe token bucket: ``rate`` requests per second, bursts up to ``capacity``."""

    def __init__(self, rate: float, capacity: float | None = None,
                 clock: Callable[[], float] = time.monotonic, sleep: Callable[[float], None] = time.sleep):
        if rate <= 0:
            raise ValueError("rate must be positive")
        self.rate = rate
        self.capacity = capacity if capacity is not None else max(1.0, rate)
        self._tokens = self.capacity
        self._clock = clock
        self._sleep = sleep
        self._last = clock()
        self._lock = threading.Lock()

    def acquire(self) -> None:
        while True:
            with self._lock:
                now = self._clock()
                self._tokens = min(self.capacity, self._tokens + (now - self._last) * self.rate)
                self._last = now
                if self._tokens >= 1.0:
                    self._tokens -= 1.0
                    return
                wait = (1.0 - self._tokens) / self.rate
            self._sleep(wait)


class HttpChatClient:
    """Chat-completion client over HTTP with retries and rate limiting.

    Transport failures and retryable HTTP statuses are retried with
    exponential backoff (``backoff * 2**attempt`` seconds), at most
    ``max_retries`` times, before a :class:`TransportError` is raised.
    """

    def __init__(
        self,
        url: str,
        api_key: str | None = None,
        *,
        timeout: float = 120.0,
        max_retries: int = 5,
        backoff: float = 1.0,
        max_in_flight: int = 4,
        requests_per_second: float | None = None,
        transport: httpx.BaseTransport | None = None,
        sleep: Callable[[float], None] = time.sleep,
    ):
        headers = {"Content-Type": "application/json"}
        if api_key:
            headers["Authorization"] = f"Bearer {api_key}"
        self.url = url
        self.max_retries = max_retries
        self.backoff = backoff
        self._sleep = sleep
        self._client = httpx.Client(headers=headers, timeout=timeout, transport=transport)
        self._slots = threading.BoundedSemaphore(max_in_flight)
        self._bucket = TokenBucket(requests_per_second, sleep=sleep) if requests_per_second else None

    @classmethod
    def from_env(cls, url: str | None = None, **kwargs: Any) -> "HttpChatClient":
        url = url or os.environ.get(ENV_URL)
        if not url:
            raise ValueError(f"no endpoint configured; pass a URL or set {ENV_URL}")
        return cls(url, os.environ.get(ENV_API_KEY), **kwargs)

    def close(self) -> None:
        self._client.close()

    def complete(self, request: ChatRequest) -> ChatResponse:
        payload = request.to_payload()
        last_error = ""
        with self._slots:
            for attempt in range(self.max_retries + 1):
                if attempt:
                    delay = self.backoff * 2 ** (attempt - 1)
                    logger.info("retrying chat request in %.1fs (%s)", delay, last_error)
                    self._sleep(delay)
                if self._bucket is not None:
                    self._bucket.acquire()
                try:
                    resp = self._client.post(self.url, json=payload)
                except httpx.HTTPError as exc:
                    last_error = f"{type(exc).__name__}: {exc}"
                    continue
                if resp.status_code in RETRYABLE_STATUS:
                    last_error = f"HTTP {resp.status_code}"
                    continue
                if resp.status_code >= 400:
                    raise TransportError(f"HTTP {resp.status_code}: {resp.text[:200]}")
                try:
                    body = resp.json()
                    content = body["choices"][0]["message"]["content"]
                except (ValueError, KeyError, IndexError, TypeError) as exc:
                    raise TransportError(f"unexpected response body: {exc}") from None
                return ChatResponse(content or "", parse_usage(body.get("usage")))
        raise TransportError(f"chat request failed after {self.max_retries} retries: {last_error}")


class RecordingClient:
    """Wraps a client and appends every exchange to a transcript file."""

    def __init__(self, inner: ChatClient, path: str | Path):
        self.inner = inner
        self.path = Path(path)
        self._lock = threading.Lock()

    def complete(self, request: ChatRequest) -> ChatResponse:
        response = self.inner.complete(request)
        line = json.dumps(
            {"key": request.key(), "request": request.to_payload(), "response": response.to_dict()},
            ensure_ascii=False, sort_keys=True,
        )
        with self._lock, self.path.open("a", encoding="utf-8") as fh:
            fh.write(line + "\n")
        return response


class ReplayMissError(TransportError):
    """A request with no remaining recorded response."""


class ReplayClient:
    """Serves recorded responses; identical requests are answered in recorded order."""

    def __init__(self, path: str | Path):
        self._responses: dict[str, deque[ChatResponse]] = defaultdict(deque)
        with Path(path).open(encoding="utf-8") as fh:
            for line in fh:
                if line.strip():
                    rec = json.loads(line)
                    self._responses[rec["key"]].append(ChatResponse.from_dict(rec["response"]))
        self._lock = threading.Lock()

    def complete(self, request: ChatRequest) -> ChatResponse:
        with self._lock:
            queue = self._responses.get(request.key())
            if not queue:
                raise ReplayMissError(f"no recorded response for request {request.key()[:12]}")
            return queue.popleft()


class FunctionClient:
    """Adapter turning ``f(request) -> str | ChatResponse`` into a client (tests, stubs)."""

    def __init__(self, fn: Callable[[ChatRequest], "str | ChatResponse"]):
        self.fn = fn
        self.calls = 0
        self._lock = threading.Lock()

    def complete(self, request: ChatRequest) -> ChatResponse:
        with self._lock:
            self.calls += 1
        out = self.fn(request)
        return out if isinstance(out, ChatResponse) else ChatResponse(out)
