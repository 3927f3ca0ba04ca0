from __future__ import annotations

import json
import os
import random
import threading
import time
from concurrent.futures import ThreadPoolExecutor

import pytest
import requests

from dahl.backends import (
    BackendSpec,
    CachedBackend,
    ChatRequest,
    HttpBackend,
    MockBackend,
    MockMissError,
    PermanentBackendError,
    RetryPolicy,
    ThrottledBackend,
    TokenBucket,
    TransientExhaustedError,
    build_http_backend,
    cache_key,
)
from dahl.types import GenConfig


class FakeResponse:
    def __init__(self, status_code, payload=None, body_text=""):
        self.status_code = status_code
        self._payload = payload
        self.text = body_text or (json.dumps(payload) if payload is not None else "")

    def json(self):
        if self._payload is None:
            raise ValueError("not json")
        return self._payload


class FakeSession:
    """Replays a script of FakeResponses / exceptions, recording calls."""

    def __init__(self, script):
        self.script = list(script)
        self.calls = []

    def post(self, url, json=None, headers=None, timeout=None):
        self.calls.append({"url": url, "json": json, "headers": headers, "timeout": timeout})
        item = self.script.pop(0)
        if isinstance(item, Exception):
            raise item
        return item


def ok_payload(text="All good.", finish="stop"):
    return {"choices": [{"message": {"content": text}, "finish_reason": finish}]}


def spec(**kwargs):
    defaults = dict(
        backend_id="gen",
        endpoint="http://unit.test/v1/chat",
        model="m-1",
        retry=RetryPolicy(max_attempts=4, base_backoff_s=0.5, max_backoff_s=30.0),
    )
    defaults.update(kwargs)
    return BackendSpec(**defaults)


def request(prompt="Say something.", temperature=0.6, max_tokens=64, seed=None, system=None):
    return ChatRequest(
        backend_id="gen",
        user_prompt=prompt,
        gen_config=GenConfig(temperature=temperature, max_tokens=max_tokens, seed=seed),
        system_prompt=system,
    )


def test_chat_request_rejects_empty_prompt():
    with pytest.raises(ValueError):
        ChatRequest(backend_id="b", user_prompt="", gen_config=GenConfig())


def test_http_success_first_try(disable_network):
    session = FakeSession([FakeResponse(200, ok_payload("Hi there.", "length"))])
    backend = HttpBackend(spec(), session=session, sleeper=lambda s: None)
    resp = backend.complete(request())
    assert resp.text == "Hi there."
    assert resp.finish_reason == "length"
    assert resp.attempts == 1
    assert not resp.from_cache
    body = session.calls[0]["json"]
    assert body["model"] == "m-1"
    assert body["temperature"] == 0.6
    assert body["max_tokens"] == 64
    assert "seed" not in body
    assert body["messages"] == [{"role": "user", "content": "Say something."}]


def test_http_request_carries_seed_and_system_prompt():
    session = FakeSession([FakeResponse(200, ok_payload())])
    backend = HttpBackend(spec(), session=session)
    backend.complete(request(seed=7, system="Be terse."))
    body = session.calls[0]["json"]
    assert body["seed"] == 7
    assert body["messages"][0] == {"role": "system", "content": "Be terse."}


def test_http_retries_429_then_succeeds():
    session = FakeSession(
        [FakeResponse(429), FakeResponse(429), FakeResponse(200, ok_payload())]
    )
    sleeps = []
    backend = HttpBackend(
        spec(), session=session, sleeper=sleeps.append, rng=random.Random(0)
    )
    resp = backend.complete(request())
    assert resp.attempts == 3
    assert len(session.calls) == 3
    # backoff grows exponentially with jitter in [delay/2, delay]
    assert 0.25 <= sleeps[0] <= 0.5
    assert 0.5 <= sleeps[1] <= 1.0


def test_http_retries_timeouts_and_connection_errors():
    session = FakeSession(
        [
            requests.Timeout("too slow"),
            requests.ConnectionError("reset"),
            FakeResponse(200, ok_payload()),
        ]
    )
    backend = HttpBackend(spec(), session=session, sleeper=lambda s: None)
    assert backend.complete(request()).attempts == 3


def test_http_gives_up_after_attempt_budget():
    session = FakeSession([FakeResponse(503)] * 4)
    backend = HttpBackend(spec(), session=session, sleeper=lambda s: None)
    with pytest.raises(TransientExhaustedError, match="after 4 attempts"):
        backend.complete(request())
    assert len(session.calls) == 4


def test_http_4xx_is_permanent_no_retry():
    session = FakeSession([FakeResponse(401, body_text="bad key")])
    sleeps = []
    backend = HttpBackend(spec(), session=session, sleeper=sleeps.append)
    with pytest.raises(PermanentBackendError, match="HTTP 401"):
        backend.complete(request())
    assert len(session.calls) == 1
    assert sleeps == []


def test_http_malformed_payload_is_permanent():
    session = FakeSession([FakeResponse(200, {"choices": []})])
    backend = HttpBackend(spec(), session=session)
    with pytest.raises(PermanentBackendError, match="malformed"):
        backend.complete(request())


def test_http_non_json_body_is_permanent():
    session = FakeSession([FakeResponse(200, None, body_text="<html>oops</html>")])
    backend = HttpBackend(spec(), session=session)
    with pytest.raises(PermanentBackendError, match="not JSON"):
        backend.complete(request())


def test_http_non_string_content_is_permanent():
    payload = {"choices": [{"message": {"content": 42}, "finish_reason": "stop"}]}
    backend = HttpBackend(spec(), session=FakeSession([FakeResponse(200, payload)]))
    with pytest.raises(PermanentBackendError, match="not a string"):
        backend.complete(request())


def test_unknown_finish_reason_normalizes_to_other():
    session = FakeSession([FakeResponse(200, ok_payload(finish="content_filter"))])
    backend = HttpBackend(spec(), session=session)
    assert backend.complete(request()).finish_reason == "other"


def test_auth_token_read_from_environment(monkeypatch):
    monkeypatch.setenv("UNIT_TEST_TOKEN", "sekrit")
    session = FakeSession([FakeResponse(200, ok_payload())])
    backend = HttpBackend(spec(auth_env="UNIT_TEST_TOKEN"), session=session)
    backend.complete(request())
    assert session.calls[0]["headers"]["Authorization"] == "Bearer sekrit"


def test_missing_auth_env_fails_before_any_call(monkeypatch):
    monkeypatch.delenv("UNIT_TEST_TOKEN", raising=False)
    session = FakeSession([])
    backend = HttpBackend(spec(auth_env="UNIT_TEST_TOKEN"), session=session)
    with pytest.raises(PermanentBackendError, match="UNIT_TEST_TOKEN"):
        backend.complete(request())
    assert session.calls == []


# ---------------------------------------------------------------------------
# throttling


def test_token_bucket_waits_with_fake_clock():
    now = [0.0]
    sleeps = []

    def clock():
        return now[0]

    def sleeper(s):
        sleeps.append(s)
        now[0] += s

    bucket = TokenBucket(2.0, clock=clock, sleeper=sleeper)
    bucket.acquire()
    bucket.acquire()  # burst capacity of 2
    bucket.acquire()  # must wait for a refill
    assert sleeps and sleeps[0] == pytest.approx(0.5)


def test_token_bucket_refills_over_time():
    now = [0.0]
    bucket = TokenBucket(1.0, clock=lambda: now[0], sleeper=lambda s: None)
    bucket.acquire()
    now[0] += 5.0
    bucket.acquire()  # refilled, no sleep needed


def test_token_bucket_rejects_nonpositive_rate():
    with pytest.raises(ValueError):
        TokenBucket(0.0)


class InstrumentedBackend:
    backend_id = "inner"
    model = "inner-model"

    def __init__(self):
        self._lock = threading.Lock()
        self.active = 0
        self.max_active = 0

    def complete(self, req):
        with self._lock:
            self.active += 1
            self.max_active = max(self.max_active, self.active)
        time.sleep(0.005)
        with self._lock:
            self.active -= 1
        from dahl.backends import ChatResponse

        return ChatResponse(text="ok")


def test_throttled_backend_caps_concurrency():
    inner = InstrumentedBackend()
    throttled = ThrottledBackend(inner, max_concurrency=3)
    with ThreadPoolExecutor(max_workers=10) as pool:
        list(pool.map(lambda _: throttled.complete(request()), range(20)))
    assert inner.max_active <= 3


def test_throttled_backend_validates_concurrency():
    with pytest.raises(ValueError):
        ThrottledBackend(InstrumentedBackend(), max_concurrency=0)


# ---------------------------------------------------------------------------
# caching


def test_cache_key_depends_on_every_field():
    base = request("prompt A", temperature=0.2, max_tokens=10, seed=1)
    k = cache_key(base, "model-x")
    assert k != cache_key(request("prompt B", temperature=0.2, max_tokens=10, seed=1), "model-x")
    assert k != cache_key(request("prompt A", temperature=0.3, max_tokens=10, seed=1), "model-x")
    assert k != cache_key(request("prompt A", temperature=0.2, max_tokens=11, seed=1), "model-x")
    assert k != cache_key(request("prompt A", temperature=0.2, max_tokens=10, seed=2), "model-x")
    assert k != cache_key(base, "model-y")
    assert k != cache_key(
        request("prompt A", temperature=0.2, max_tokens=10, seed=1, system="S"), "model-x"
    )
    assert k == cache_key(request("prompt A", temperature=0.2, max_tokens=10, seed=1), "model-x")


def test_cache_hit_skips_inner_backend(tmp_path):
    inner = MockBackend(default="cached answer", model="m")
    cached = CachedBackend(inner, str(tmp_path / "cache"))
    first = cached.complete(request("same prompt"))
    second = cached.complete(request("same prompt"))
    assert inner.calls == 1
    assert not first.from_cache
    assert second.from_cache
    assert second.text == "cached answer"
    assert second.attempts == 0
    assert second.latency_ms == 0


def test_cache_misses_on_different_temperature(tmp_path):
    inner = MockBackend(default="x", model="m")
    cached = CachedBackend(inner, str(tmp_path))
    cached.complete(request("p", temperature=0.1))
    cached.complete(request("p", temperature=0.9))
    assert inner.calls == 2


def test_cache_layout_uses_key_prefix_shards(tmp_path):
    inner = MockBackend(default="x", model="m")
    cached = CachedBackend(inner, str(tmp_path))
    req = request("sharded")
    cached.complete(req)
    key = cache_key(req, "m")
    assert os.path.exists(tmp_path / key[:2] / f"{key}.json")


def test_corrupt_cache_entry_is_a_miss_and_gets_rewritten(tmp_path):
    inner = MockBackend(default="fresh", model="m")
    cached = CachedBackend(inner, str(tmp_path))
    req = request("poisoned")
    cached.complete(req)
    key = cache_key(req, "m")
    path = tmp_path / key[:2] / f"{key}.json"
    path.write_text("not json at all", encoding="utf-8")
    resp = cached.complete(req)
    assert not resp.from_cache
    assert inner.calls == 2
    entry = json.loads(path.read_text(encoding="utf-8"))
    assert entry["key"] == key and entry["text"] == "fresh"


def test_cache_entry_with_wrong_key_is_a_miss(tmp_path):
    inner = MockBackend(default="real", model="m")
    cached = CachedBackend(inner, str(tmp_path))
    req = request("moved file")
    key = cache_key(req, "m")
    path = tmp_path / key[:2] / f"{key}.json"
    path.parent.mkdir(parents=True)
    path.write_text(
        json.dumps({"key": "0" * 64, "text": "stale", "finish_reason": "stop"}),
        encoding="utf-8",
    )
    resp = cached.complete(req)
    assert resp.text == "real"
    assert inner.calls == 1


# ---------------------------------------------------------------------------
# mock backend


def test_mock_rules_first_match_wins_case_insensitive():
    backend = MockBackend(
        rules=[("alpha", "first"), ("ALPHA BETA", "never reached"), ("beta", "second")]
    )
    assert backend.complete(request("contains Alpha Beta")).text == "first"
    assert backend.complete(request("only BETA here")).text == "second"
    assert backend.calls == 2


def test_mock_callable_reply_sees_the_request():
    backend = MockBackend(rules=[("echo", lambda req: req.user_prompt.upper())])
    assert backend.complete(request("echo this")).text == "ECHO THIS"


def test_mock_default_and_miss():
    assert MockBackend(default="fallback").complete(request("anything")).text == "fallback"
    strict = MockBackend(rules=[("nope", "x")])
    with pytest.raises(MockMissError, match="no rule matches"):
        strict.complete(request("a very distinctive prompt"))
    try:
        strict.complete(request("a very distinctive prompt"))
    except MockMissError as exc:
        assert "a very distinctive prompt" in str(exc)


def test_mock_miss_is_a_permanent_backend_error():
    assert issubclass(MockMissError, PermanentBackendError)


# ---------------------------------------------------------------------------
# assembly


def test_build_http_backend_stacks_cache_over_throttle(tmp_path):
    backend = build_http_backend(spec(), cache_dir=str(tmp_path))
    assert isinstance(backend, CachedBackend)
    assert backend.backend_id == "gen"
    assert backend.model == "m-1"
    bare = build_http_backend(spec())
    assert isinstance(bare, ThrottledBackend)
