from __future__ import annotations

import json

import httpx
import pytest

from themekit import (
    BackendError,
    CompletionRequest,
    ConfigError,
    ContextOverflowError,
    Gateway,
    GenerationParams,
    HttpBackend,
    MemoryAuditSink,
    RateLimitError,
    ScriptedBackend,
    StructuredOutputError,
    TransportError,
)

PAIR_SCHEMA = {
    "type": "array",
    "items": {
        "type": "object",
        "required": ["id", "code"],
        "properties": {"id": {"type": "string"}, "code": {"type": "string"}},
    },
}


def request(stage="coding", batch=0, system="sys", user="user", max_tokens=50, context=400):
    return CompletionRequest(
        system_message=system,
        user_message=user,
        params=GenerationParams(max_tokens=max_tokens, context_limit=context),
        stage=stage,
        batch_index=batch,
    )


def gateway(backend, audit=None, **kw):
    return Gateway(backend, audit=audit, sleep=lambda s: None, **kw)


class CountingBackend:
    def __init__(self, inner):
        self.inner = inner
        self.calls = 0

    def send(self, req):
        self.calls += 1
        return self.inner.send(req)


class TestComplete:
    def test_scripted_identity(self):
        backend = ScriptedBackend(script={("coding", 0): "X"})
        assert gateway(backend).complete(request()).text == "X"

    def test_scripted_is_pure_per_key(self):
        backend = ScriptedBackend(script={"coding:0": "X", "coding:1": "Y"})
        gw = gateway(backend)
        assert gw.complete(request(batch=0)).text == "X"
        assert gw.complete(request(batch=0)).text == "X"
        assert gw.complete(request(batch=1)).text == "Y"

    def test_context_overflow_makes_no_provider_call(self):
        backend = CountingBackend(ScriptedBackend(default="unused"))
        gw = gateway(backend)
        big = request(user="u" * 2000, max_tokens=50, context=400)
        with pytest.raises(ContextOverflowError):
            gw.complete(big)
        assert backend.calls == 0

    def test_transient_failure_then_success(self):
        audit = MemoryAuditSink()
        backend = ScriptedBackend(script={("coding", 0): [{"error": "transport"}, "ok"]})
        response = gateway(backend, audit=audit).complete(request())
        assert response.text == "ok"
        attempts = [e["attempt"] for e in audit.events]
        assert attempts == [1, 2]
        assert audit.events[0]["error"]
        assert audit.events[1]["response"] == "ok"

    def test_rate_limit_retried(self):
        backend = ScriptedBackend(script={("coding", 0): [{"error": "rate_limit"}, "ok"]})
        assert gateway(backend).complete(request()).text == "ok"

    def test_retries_exhausted(self):
        audit = MemoryAuditSink()
        backend = ScriptedBackend(script={("coding", 0): [{"error": "transport"}] * 9})
        with pytest.raises(TransportError):
            gateway(backend, audit=audit, max_attempts=5).complete(request())
        assert [e["attempt"] for e in audit.events] == [1, 2, 3, 4, 5]

    def test_backoff_schedule(self):
        sleeps: list[float] = []
        backend = ScriptedBackend(script={("coding", 0): [{"error": "transport"}] * 3 + ["ok"]})
        gw = Gateway(backend, sleep=sleeps.append, backoff_base=0.5)
        gw.complete(request())
        assert sleeps == [0.5, 1.0, 2.0]

    def test_no_scripted_response_and_no_default(self):
        with pytest.raises(BackendError, match="no scripted response"):
            gateway(ScriptedBackend()).complete(request())

    def test_audit_in_causal_order(self):
        audit = MemoryAuditSink()
        backend = ScriptedBackend(default=lambda stage, i, req: f"{stage}:{i}")
        gw = gateway(backend, audit=audit)
        gw.complete(request(batch=0))
        gw.complete(request(batch=1))
        assert [e["seq"] for e in audit.events] == [1, 2]
        assert [e["batch_index"] for e in audit.events] == [0, 1]
        assert all(e["request_digest"] for e in audit.events)


class TestCompleteStructured:
    def test_valid_json_array(self):
        payload = json.dumps([{"id": "a", "code": "c1"}])
        backend = ScriptedBackend(script={("coding", 0): payload})
        result = gateway(backend).complete_structured(request(), PAIR_SCHEMA)
        assert result.value == [{"id": "a", "code": "c1"}]
        assert result.retry_count == 0

    def test_prose_then_valid_retries_once(self):
        payload = json.dumps([{"id": "a", "code": "c1"}])
        backend = ScriptedBackend(script={("coding", 0): ["Here are your codes!", payload]})
        result = gateway(backend).complete_structured(request(), PAIR_SCHEMA)
        assert result.value == [{"id": "a", "code": "c1"}]
        assert result.retry_count == 1

    def test_three_invalid_responses_fail_with_attempts(self):
        audit = MemoryAuditSink()
        backend = ScriptedBackend(script={("coding", 0): ["bad1", "bad2", "bad3", "never"]})
        with pytest.raises(StructuredOutputError) as err:
            gateway(backend, audit=audit).complete_structured(request(), PAIR_SCHEMA)
        assert err.value.attempts == ("bad1", "bad2", "bad3")
        assert [e["response"] for e in audit.events] == ["bad1", "bad2", "bad3"]

    def test_corrective_instruction_appended(self):
        audit = MemoryAuditSink()
        payload = json.dumps([{"id": "a", "code": "c1"}])
        backend = ScriptedBackend(script={("coding", 0): ["not json", payload]})
        gateway(backend, audit=audit).complete_structured(request(), PAIR_SCHEMA)
        assert "Your previous output was not valid" in audit.events[1]["user"]
        assert "Reply with only the requested JSON" in audit.events[1]["user"]

    def test_schema_violation_triggers_retry(self):
        wrong_shape = json.dumps([{"id": "a"}])  # missing "code"
        payload = json.dumps([{"id": "a", "code": "c"}])
        backend = ScriptedBackend(script={("coding", 0): [wrong_shape, payload]})
        result = gateway(backend).complete_structured(request(), PAIR_SCHEMA)
        assert result.retry_count == 1

    def test_fenced_output_unwrapped(self):
        payload = "```json\n" + json.dumps([{"id": "a", "code": "c"}]) + "\n```"
        backend = ScriptedBackend(script={("coding", 0): payload})
        result = gateway(backend).complete_structured(request(), PAIR_SCHEMA)
        assert result.value[0]["code"] == "c"

    def test_never_returns_schema_violating_value(self):
        backend = ScriptedBackend(default=json.dumps({"not": "an array"}))
        with pytest.raises(StructuredOutputError):
            gateway(backend).complete_structured(request(), PAIR_SCHEMA)


class TestScriptedFile:
    def test_from_file_with_literal_default(self, tmp_path):
        path = tmp_path / "script.json"
        path.write_text(json.dumps({
            "responses": {"coding:0": "first", "merge:0": ["a", "b"]},
            "default": "fallback",
        }))
        backend = ScriptedBackend.from_file(path)
        gw = gateway(backend)
        assert gw.complete(request(batch=0)).text == "first"
        assert gw.complete(request(stage="merge")).text == "a"
        assert gw.complete(request(stage="merge")).text == "b"
        assert gw.complete(request(stage="merge")).text == "b"  # last entry repeats
        assert gw.complete(request(stage="collation")).text == "fallback"

    def test_from_file_keyword_echo_mode(self, tmp_path):
        from themekit.prompts import format_items

        path = tmp_path / "script.json"
        path.write_text(json.dumps({
            "default": {"mode": "keyword-echo", "keywords": {"a bicycle": "bicycle theft"}, "k": 1},
        }))
        backend = ScriptedBackend.from_file(path)
        user = format_items([("p1", "Someone took a bicycle from the yard.")])
        response = gateway(backend).complete(
            request(stage="coding", user=user)
        )
        assert json.loads(response.text) == [{"id": "p1", "code": "theft of a bicycle"}]

    def test_from_file_rejects_unknown_mode(self, tmp_path):
        path = tmp_path / "script.json"
        path.write_text(json.dumps({"default": {"mode": "nope"}}))
        with pytest.raises(ConfigError):
            ScriptedBackend.from_file(path)

    def test_bad_key_shape(self):
        with pytest.raises(ConfigError):
            ScriptedBackend(script={"nocolon": "x"})

    def test_missing_or_malformed_file(self, tmp_path):
        with pytest.raises(ConfigError, match="cannot read"):
            ScriptedBackend.from_file(tmp_path / "missing.json")
        bad = tmp_path / "bad.json"
        bad.write_text("{not json", encoding="utf-8")
        with pytest.raises(ConfigError, match="not valid JSON"):
            ScriptedBackend.from_file(bad)


class TestHttpBackend:
    def make_backend(self, handler, monkeypatch, env_value="secret"):
        if env_value is not None:
            monkeypatch.setenv("THEMEKIT_API_KEY", env_value)
        else:
            monkeypatch.delenv("THEMEKIT_API_KEY", raising=False)
        transport = httpx.MockTransport(handler)
        return HttpBackend("https://llm.example/v1", "test-model", transport=transport)

    def test_success_with_usage_and_fingerprint(self, monkeypatch):
        def handler(req: httpx.Request) -> httpx.Response:
            body = json.loads(req.content)
            assert body["model"] == "test-model"
            assert body["temperature"] == 0.0
            assert req.headers["Authorization"] == "Bearer secret"
            return httpx.Response(200, json={
                "choices": [{"message": {"content": "hello"}}],
                "usage": {"prompt_tokens": 12, "completion_tokens": 3},
                "system_fingerprint": "fp_1",
            })

        backend = self.make_backend(handler, monkeypatch)
        response = backend.send(request())
        assert response.text == "hello"
        assert response.token_usage == (12, 3)
        assert response.backend_id == "test-model@https://llm.example/v1#fp_1"

    def test_rate_limit_maps(self, monkeypatch):
        backend = self.make_backend(lambda r: httpx.Response(429, text="slow down"), monkeypatch)
        with pytest.raises(RateLimitError):
            backend.send(request())

    def test_server_error_maps(self, monkeypatch):
        backend = self.make_backend(lambda r: httpx.Response(500, text="boom"), monkeypatch)
        with pytest.raises(BackendError):
            backend.send(request())

    def test_transport_error_maps(self, monkeypatch):
        def handler(req):
            raise httpx.ConnectError("refused")

        backend = self.make_backend(handler, monkeypatch)
        with pytest.raises(TransportError):
            backend.send(request())

    def test_missing_credentials(self, monkeypatch):
        backend = self.make_backend(lambda r: httpx.Response(200, json={}), monkeypatch, env_value=None)
        with pytest.raises(ConfigError, match="THEMEKIT_API_KEY"):
            backend.send(request())
