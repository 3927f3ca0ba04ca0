"""Chat-completion backends.

Four layers, composable from the inside out:

  HttpBackend        talks JSON to a chat-completion endpoint with
                     retries (exponential backoff plus jitter)
  ThrottledBackend   caps in-flight calls and request rate
  CachedBackend      content-addressed on-disk cache keyed by the
                     request, so reruns and resumes cost nothing
  MockBackend        deterministic offline stand-in for tests

Auth tokens come only from environment variables named in the
BackendSpec; they never appear in config files or on disk.
"""

from __future__ import annotations

import hashlib
import json
import os
import random
import threading
import time
from dataclasses import dataclass, field
from typing import Callable, Optional, Protocol, Sequence, Tuple, Union, runtime_checkable

import requests

from .records import atomic_write_text, dumps_compact
from .types import GenConfig


class BackendError(Exception):
    """Base for all completion failures."""


class PermanentBackendError(BackendError):
    """Non-retryable failure (4xx other than 429, malformed reply, bad auth)."""


class TransientExhaustedError(BackendError):
    """Retryable failures kept happening until the attempt budget ran out."""


class MockMissError(PermanentBackendError):
    """A mock backend had no rule for the prompt and no default."""


@dataclass(frozen=True)
class ChatRequest:
    backend_id: str
    user_prompt: str
    gen_config: GenConfig
    system_prompt: Optional[str] = None

    def __post_init__(self) -> None:
        if not self.user_prompt:
            raise ValueError("user_prompt must be non-empty")


@dataclass(frozen=True)
class ChatResponse:
    """One completion. attempts counts network tries (0 for cache hits)."""

    text: str
    finish_reason: str = "stop"
    latency_ms: int = 0
    from_cache: bool = False
    attempts: int = 1


@dataclass(frozen=True)
class RetryPolicy:
    max_attempts: int = 5
    base_backoff_s: float = 0.5
    max_backoff_s: float = 30.0

    def __post_init__(self) -> None:
        if self.max_attempts < 1:
            raise ValueError("max_attempts must be >= 1")


@dataclass(frozen=True)
class BackendSpec:
    """Wiring for one HTTP backend."""

    backend_id: str
    endpoint: str
    model: str
    auth_env: Optional[str] = None
    max_concurrency: int = 4
    timeout_s: float = 60.0
    requests_per_second: Optional[float] = None
    retry: RetryPolicy = field(default_factory=RetryPolicy)

    def __post_init__(self) -> None:
        if not self.backend_id:
            raise ValueError("backend_id must be non-empty")
        if self.max_concurrency < 1:
            raise ValueError("max_concurrency must be >= 1")


@runtime_checkable
class Backend(Protocol):
    backend_id: str
    model: str

    def complete(self, req: ChatRequest) -> ChatResponse:
        ...


def _normalize_finish_reason(raw: Optional[str]) -> str:
    if raw in ("stop", "length"):
        return raw
    return "other"


class HttpBackend:
    """Plain JSON chat-completion client with retry logic.

    The session and sleep function are injectable for tests. 429 and
    5xx responses, timeouts, and connection drops are retried with
    exponential backoff and jitter; other 4xx fail immediately.
    """

    def __init__(
        self,
        spec: BackendSpec,
        session: Optional[requests.Session] = None,
        sleeper: Callable[[float], None] = time.sleep,
        rng: Optional[random.Random] = None,
    ) -> None:
        self.spec = spec
        self.backend_id = spec.backend_id
        self.model = spec.model
        self._session = session if session is not None else requests.Session()
        self._sleep = sleeper
        self._rng = rng if rng is not None else random.Random()

    def _headers(self) -> dict:
        headers = {"Content-Type": "application/json"}
        if self.spec.auth_env:
            token = os.environ.get(self.spec.auth_env)
            if not token:
                raise PermanentBackendError(
                    f"backend {self.backend_id}: auth env var {self.spec.auth_env} is not set"
                )
            headers["Authorization"] = f"Bearer {token}"
        return headers

    def _body(self, req: ChatRequest) -> dict:
        messages = []
        if req.system_prompt:
            messages.append({"role": "system", "content": req.system_prompt})
        messages.append({"role": "user", "content": req.user_prompt})
        body = {
            "model": self.spec.model,
            "messages": messages,
            "temperature": req.gen_config.temperature,
            "max_tokens": req.gen_config.max_tokens,
        }
        if req.gen_config.seed is not None:
            body["seed"] = req.gen_config.seed
        return body

    def _parse(self, payload: dict) -> Tuple[str, str]:
        try:
            choice = payload["choices"][0]
            text = choice["message"]["content"]
            finish = _normalize_finish_reason(choice.get("finish_reason"))
        except (KeyError, IndexError, TypeError) as exc:
            raise PermanentBackendError(
                f"backend {self.backend_id}: malformed completion payload ({exc!r})"
            ) from exc
        if not isinstance(text, str):
            raise PermanentBackendError(
                f"backend {self.backend_id}: completion content is not a string"
            )
        return text, finish

    def _backoff(self, attempt: int) -> float:
        policy = self.spec.retry
        delay = min(policy.max_backoff_s, policy.base_backoff_s * (2.0 ** (attempt - 1)))
        return self._rng.uniform(delay / 2.0, delay)

    def complete(self, req: ChatRequest) -> ChatResponse:
        headers = self._headers()
        body = self._body(req)
        policy = self.spec.retry
        last_failure = "no attempt made"
        started = time.monotonic()
        for attempt in range(1, policy.max_attempts + 1):
            try:
                resp = self._session.post(
                    self.spec.endpoint, json=body, headers=headers, timeout=self.spec.timeout_s
                )
            except (requests.Timeout, requests.ConnectionError) as exc:
                last_failure = f"{type(exc).__name__}: {exc}"
            else:
                if resp.status_code == 200:
                    try:
                        payload = resp.json()
                    except ValueError as exc:
                        raise PermanentBackendError(
                            f"backend {self.backend_id}: response is not JSON ({exc})"
                        ) from exc
                    text, finish = self._parse(payload)
                    latency_ms = int((time.monotonic() - started) * 1000)
                    return ChatResponse(
                        text=text,
                        finish_reason=finish,
                        latency_ms=latency_ms,
                        from_cache=False,
                        attempts=attempt,
                    )
                if resp.status_code == 429 or resp.status_code >= 500:
                    last_failure = f"HTTP {resp.status_code}"
                else:
                    raise PermanentBackendError(
                        f"backend {self.backend_id}: HTTP {resp.status_code} "
                        f"({resp.text[:200]})"
                    )
            if attempt < policy.max_attempts:
                self._sleep(self._backoff(attempt))
        raise TransientExhaustedError(
            f"backend {self.backend_id}: still failing after {policy.max_attempts} attempts "
            f"({last_failure})"
        )


class TokenBucket:
    """Client-side rate limiter. Thread-safe; clock injectable for tests."""

    def __init__(
        self,
        rate_per_second: float,
        burst: Optional[float] = None,
        clock: Callable[[], float] = time.monotonic,
        sleeper: Callable[[float], None] = time.sleep,
    ) -> None:
        if rate_per_second <= 0:
            raise ValueError("rate_per_second must be positive")
        self._rate = rate_per_second
        self._capacity = max(1.0, burst if burst is not None else rate_per_second)
        self._tokens = self._capacity
        self._clock = clock
        self._sleep = sleeper
        self._last = clock()
        self._lock = threading.Lock()

    def acquire(self) -> None:
        while True:
            with self._lock:
                now = self._clock()
                self._tokens = min(self._capacity, self._tokens + (now - self._last) * self._rate)
                self._last = now
                if self._tokens >= 1.0:
                    self._tokens -= 1.0
                    return
                wait = (1.0 - self._tokens) / self._rate
            self._sleep(wait)


class ThrottledBackend:
    """Caps in-flight calls (semaphore) and request rate (token bucket)."""

    def __init__(
        self,
        inner: Backend,
        max_concurrency: int,
        requests_per_second: Optional[float] = None,
        clock: Callable[[], float] = time.monotonic,
        sleeper: Callable[[float], None] = time.sleep,
    ) -> None:
        if max_concurrency < 1:
            raise ValueError("max_concurrency must be >= 1")
        self._inner = inner
        self.backend_id = inner.backend_id
        self.model = inner.model
        self._semaphore = threading.BoundedSemaphore(max_concurrency)
        self._bucket = (
            TokenBucket(requests_per_second, clock=clock, sleeper=sleeper)
            if requests_per_second
            else None
        )

    def complete(self, req: ChatRequest) -> ChatResponse:
        with self._semaphore:
            if self._bucket is not None:
                self._bucket.acquire()
            return self._inner.complete(req)


def cache_key(req: ChatRequest, model: str) -> str:
    """Content hash identifying a request for caching purposes."""
    material = dumps_compact(
        {
            "backend_id": req.backend_id,
            "max_tokens": req.gen_config.max_tokens,
            "model": model,
            "seed": req.gen_config.seed,
            "system_prompt": req.system_prompt,
            "temperature": req.gen_config.temperature,
            "user_prompt": req.user_prompt,
        }
    )
    return hashlib.sha256(material.encode("utf-8")).hexdigest()


class CachedBackend:
    """On-disk response cache in front of another backend.

    One JSON file per key under cache_dir/<first two hex>/<key>.json.
    A file whose stored key disagrees with its expected key, or that
    does not parse, counts as a miss and is overwritten.
    """

    def __init__(self, inner: Backend, cache_dir: str) -> None:
        self._inner = inner
        self.backend_id = inner.backend_id
        self.model = inner.model
        self._dir = cache_dir

    def _path(self, key: str) -> str:
        return os.path.join(self._dir, key[:2], f"{key}.json")

    def _load(self, key: str) -> Optional[ChatResponse]:
        path = self._path(key)
        try:
            with open(path, encoding="utf-8") as fh:
                entry = json.load(fh)
        except (OSError, ValueError):
            return None
        if not isinstance(entry, dict) or entry.get("key") != key:
            return None
        text = entry.get("text")
        finish = entry.get("finish_reason")
        if not isinstance(text, str) or not isinstance(finish, str):
            return None
        return ChatResponse(
            text=text, finish_reason=finish, latency_ms=0, from_cache=True, attempts=0
        )

    def _store(self, key: str, resp: ChatResponse) -> None:
        entry = {"finish_reason": resp.finish_reason, "key": key, "text": resp.text}
        atomic_write_text(self._path(key), dumps_compact(entry) + "\n")

    def complete(self, req: ChatRequest) -> ChatResponse:
        key = cache_key(req, self.model)
        hit = self._load(key)
        if hit is not None:
            return hit
        resp = self._inner.complete(req)
        self._store(key, resp)
        return resp


MockRule = Tuple[str, Union[str, Callable[[ChatRequest], str]]]


class MockBackend:
    """Deterministic offline backend driven by substring rules.

    rules is an ordered sequence of (needle, reply) pairs; the first
    needle found in the user prompt (case-insensitive) wins. A reply
    may be a string or a callable taking the ChatRequest. With no
    match, the default applies; with no default either, the call fails
    naming the prompt.
    """

    def __init__(
        self,
        rules: Optional[Sequence[MockRule]] = None,
        default: Optional[Union[str, Callable[[ChatRequest], str]]] = None,
        backend_id: str = "mock",
        model: str = "mock-model",
        finish_reason: str = "stop",
    ) -> None:
        self._rules = list(rules) if rules else []
        self._default = default
        self.backend_id = backend_id
        self.model = model
        self._finish_reason = finish_reason
        self.calls = 0
        self._lock = threading.Lock()

    def complete(self, req: ChatRequest) -> ChatResponse:
        with self._lock:
            self.calls += 1
        prompt_cf = req.user_prompt.casefold()
        reply: Optional[Union[str, Callable[[ChatRequest], str]]] = None
        for needle, out in self._rules:
            if needle.casefold() in prompt_cf:
                reply = out
                break
        if reply is None:
            if self._default is None:
                raise MockMissError(
                    f"mock backend {self.backend_id}: no rule matches prompt "
                    f"{req.user_prompt[:160]!r}"
                )
            reply = self._default
        text = reply(req) if callable(reply) else reply
        return ChatResponse(
            text=text, finish_reason=self._finish_reason, latency_ms=0, attempts=1
        )


def build_http_backend(spec: BackendSpec, cache_dir: Optional[str] = None) -> Backend:
    """Assemble the standard stack: cache over throttle over HTTP."""
    backend: Backend = HttpBackend(spec)
    backend = ThrottledBackend(
        backend, spec.max_concurrency, requests_per_second=spec.requests_per_second
    )
    if cache_dir:
        backend = CachedBackend(backend, cache_dir)
    return backend
