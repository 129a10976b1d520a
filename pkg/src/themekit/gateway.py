"""Uniform access to chat-completion backends.

A Gateway wraps a backend (live HTTP provider or deterministic scripted one)
with context-limit checks, bounded retry, structured-output validation, and an
audit trail that records every provider interaction exactly once, in causal
order.
"""

from __future__ import annotations

import hashlib
import json
import os
import re
import threading
import time
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any, Callable, Mapping, Protocol, Sequence

import jsonschema

from .batching import DEFAULT_COUNTER, TokenCounter
from .errors import (
    BackendError,
    ConfigError,
    ContextOverflowError,
    RateLimitError,
    StructuredOutputError,
    TransportError,
)
from .model import GenerationParams

CORRECTIVE_TEMPLATE = (
    "Your previous output was not valid: {error}. Reply with only the requested JSON."
)

_FENCE_RE = re.compile(r"```(?:[a-zA-Z0-9_-]+)?\s*\n(.*?)```", re.DOTALL)


@dataclass(frozen=True)
class CompletionRequest:
    """One chat-completion call: system + user message plus decoding params.

    ``stage`` and ``batch_index`` identify the pipeline locus for scripted
    lookup and for the audit trail.
    """

    system_message: str
    user_message: str
    params: GenerationParams = field(default_factory=GenerationParams)
    stage: str = "adhoc"
    batch_index: int = 0

    def digest(self) -> str:
        payload = "\x00".join(
            (self.system_message, self.user_message, json.dumps(self.params.to_dict(), sort_keys=True))
        )
        return hashlib.sha256(payload.encode("utf-8")).hexdigest()[:16]


@dataclass(frozen=True)
class CompletionResponse:
    text: str
    token_usage: tuple[int, int]
    backend_id: str


@dataclass(frozen=True)
class StructuredCompletion:
    """Schema-valid parsed value plus the raw texts of every attempt."""

    value: Any
    attempts: tuple[str, ...]
    response: CompletionResponse

    @property
    def retry_count(self) -> int:
        return len(self.attempts) - 1


class AuditSink(Protocol):
    """Receiver for provider-interaction events (one per attempt)."""

    def emit(self, event: dict) -> None: ...


class MemoryAuditSink:
    """In-memory audit log for gateways not bound to a run store."""

    def __init__(self) -> None:
        self.events: list[dict] = []
        self._lock = threading.Lock()

    def emit(self, event: dict) -> None:
        with self._lock:
            event = dict(event)
            event["seq"] = len(self.events) + 1
            self.events.append(event)


class Backend(Protocol):
    """Transport-level provider: turns a request into raw completion text."""

    def send(self, request: CompletionRequest) -> CompletionResponse: ...


ScriptEntry = "str | Mapping | Sequence[str | Mapping]"
DefaultRule = Callable[[str, int, CompletionRequest], str]


class ScriptedBackend:
    """Deterministic canned backend keyed by (stage tag, batch index).

    Script values are either a single response text (a pure function of the
    key, so replays and resumed runs see identical responses) or a sequence
    consumed one element per call, for retry and fault-injection scenarios.
    A sequence element is a response text, or a mapping {"error": "transport"}
    / {"error": "rate_limit"} to raise the corresponding failure, or
    {"text": ...}. Unmatched keys fall back to ``default``: a literal text or
    a callable (stage, batch_index, request) -> text.
    """

    def __init__(
        self,
        script: Mapping[Any, Any] | None = None,
        default: str | DefaultRule | None = None,
        counter: TokenCounter | None = None,
    ) -> None:
        self._script: dict[tuple[str, int], Any] = {}
        for key, value in (script or {}).items():
            self._script[self._key(key)] = value
        self._default = default
        self._counter = counter or DEFAULT_COUNTER
        self._positions: dict[tuple[str, int], int] = {}
        self._lock = threading.Lock()

    @staticmethod
    def _key(key: Any) -> tuple[str, int]:
        if isinstance(key, str):
            stage, _, idx = key.rpartition(":")
            if not stage:
                raise ConfigError(f"scripted key {key!r} must look like 'stage:batch'")
            return stage, int(idx)
        stage, idx = key
        return str(stage), int(idx)

    @classmethod
    def from_file(cls, path: str | Path, counter: TokenCounter | None = None) -> "ScriptedBackend":
        """Load a script document: {"responses": {...}, "default": ...}.

        ``default`` may be a literal string or {"mode": "keyword-echo",
        "keywords": {...}, "k": 3} to answer every stage from keyword lookup.
        """
        try:
            data = json.loads(Path(path).read_text(encoding="utf-8"))
        except OSError as exc:
            raise ConfigError(f"cannot read script file {path}: {exc}") from exc
        except json.JSONDecodeError as exc:
            raise ConfigError(f"script file {path} is not valid JSON: {exc}") from exc
        if not isinstance(data, dict):
            raise ConfigError(f"script file {path} must hold a JSON object")
        default = data.get("default")
        if isinstance(default, dict):
            mode = default.get("mode")
            if mode != "keyword-echo":
                raise ConfigError(f"unknown scripted default mode {mode!r}")
            from .mock import KeywordScenario

            default = KeywordScenario(default.get("keywords", {}), k=int(default.get("k", 3)))
        return cls(script=data.get("responses", {}), default=default, counter=counter)

    def _entry_for(self, key: tuple[str, int]) -> Any:
        entry = self._script.get(key)
        if entry is None:
            return None
        if isinstance(entry, (list, tuple)):
            with self._lock:
                pos = self._positions.get(key, 0)
                self._positions[key] = pos + 1
            return entry[min(pos, len(entry) - 1)]
        return entry

    def send(self, request: CompletionRequest) -> CompletionResponse:
        key = (request.stage, request.batch_index)
        entry = self._entry_for(key)
        if entry is None:
            if self._default is None:
                raise BackendError(f"no scripted response for stage={key[0]} batch={key[1]}")
            if callable(self._default):
                entry = self._default(request.stage, request.batch_index, request)
            else:
                entry = str(self._default)
        if isinstance(entry, Mapping):
            error = entry.get("error")
            if error == "transport":
                raise TransportError(f"scripted transport failure at {key}")
            if error == "rate_limit":
                raise RateLimitError(f"scripted rate limit at {key}")
            entry = entry["text"]
        text = str(entry)
        prompt_tokens = self._counter.count(request.system_message) + self._counter.count(
            request.user_message
        )
        return CompletionResponse(
            text=text,
            token_usage=(prompt_tokens, self._counter.count(text)),
            backend_id="scripted",
        )


class HttpBackend:
    """OpenAI-compatible chat-completions provider over HTTPS.

    Credentials come from an environment variable only; endpoint and model
    name come from configuration.
    """

    def __init__(
        self,
        endpoint: str,
        model: str,
        api_key_env: str = "THEMEKIT_API_KEY",
        timeout: float = 120.0,
        transport=None,
    ) -> None:
        self.endpoint = endpoint.rstrip("/")
        self.model = model
        self.api_key_env = api_key_env
        self._timeout = timeout
        self._transport = transport
        self._client = None

    def _http_client(self):
        import httpx

        if self._client is None:
            self._client = httpx.Client(timeout=self._timeout, transport=self._transport)
        return self._client

    def send(self, request: CompletionRequest) -> CompletionResponse:
        import httpx

        api_key = os.environ.get(self.api_key_env)
        if not api_key:
            raise ConfigError(f"environment variable {self.api_key_env} is not set")
        payload = {
            "model": self.model,
            "messages": [
                {"role": "system", "content": request.system_message},
                {"role": "user", "content": request.user_message},
            ],
            "temperature": request.params.temperature,
            "top_p": request.params.top_p,
            "frequency_penalty": request.params.frequency_penalty,
            "presence_penalty": request.params.presence_penalty,
            "max_tokens": request.params.max_tokens,
        }
        try:
            resp = self._http_client().post(
                f"{self.endpoint}/chat/completions",
                json=payload,
                headers={"Authorization": f"Bearer {api_key}"},
            )
        except httpx.TransportError as exc:
            raise TransportError(str(exc)) from exc
        if resp.status_code == 429:
            raise RateLimitError(f"provider rate limit: {resp.text[:200]}")
        if resp.status_code >= 400:
            raise BackendError(f"provider error {resp.status_code}: {resp.text[:500]}")
        body = resp.json()
        try:
            text = body["choices"][0]["message"]["content"]
        except (KeyError, IndexError, TypeError) as exc:
            raise BackendError(f"unexpected provider response shape: {body!r:.500}") from exc
        usage = body.get("usage", {})
        fingerprint = body.get("system_fingerprint", "")
        backend_id = f"{self.model}@{self.endpoint}"
        if fingerprint:
            backend_id += f"#{fingerprint}"
        return CompletionResponse(
            text=text or "",
            token_usage=(int(usage.get("prompt_tokens", 0)), int(usage.get("completion_tokens", 0))),
            backend_id=backend_id,
        )


def unwrap_code_fences(text: str) -> str:
    """Strip a Markdown code fence if the payload is wrapped in one."""
    match = _FENCE_RE.search(text)
    if match:
        return match.group(1).strip()
    return text.strip()


class Gateway:
    """Shared front door to a completion backend.

    Each call is independent; callers decide sequencing. Stages that thread
    interim context must call sequentially, stateless stages may fan out.
    """

    def __init__(
        self,
        backend: Backend,
        counter: TokenCounter | None = None,
        audit: AuditSink | None = None,
        max_attempts: int = 5,
        backoff_base: float = 0.5,
        sleep: Callable[[float], None] = time.sleep,
        structured_attempts: int = 3,
    ) -> None:
        if max_attempts < 1 or structured_attempts < 1:
            raise ConfigError("attempt budgets must be at least 1")
        self.backend = backend
        self.counter = counter or DEFAULT_COUNTER
        self.audit = audit if audit is not None else MemoryAuditSink()
        self.max_attempts = max_attempts
        self.backoff_base = backoff_base
        self._sleep = sleep
        self.structured_attempts = structured_attempts

    def _audit(
        self,
        request: CompletionRequest,
        attempt: int,
        response: CompletionResponse | None,
        error: str | None = None,
    ) -> None:
        self.audit.emit(
            {
                "ts": time.time(),
                "stage": request.stage,
                "batch_index": request.batch_index,
                "attempt": attempt,
                "request_digest": request.digest(),
                "system": request.system_message,
                "user": request.user_message,
                "response": response.text if response else None,
                "backend_id": response.backend_id if response else None,
                "usage": list(response.token_usage) if response else None,
                "error": error,
            }
        )

    def check_fits(self, request: CompletionRequest) -> None:
        prompt_tokens = self.counter.count(request.system_message) + self.counter.count(
            request.user_message
        )
        total = prompt_tokens + request.params.max_tokens
        if total > request.params.context_limit:
            raise ContextOverflowError(
                f"request needs {total} tokens (prompt {prompt_tokens} + completion "
                f"{request.params.max_tokens}) but the context limit is {request.params.context_limit}"
            )

    def complete(self, request: CompletionRequest) -> CompletionResponse:
        """Run one completion with bounded retry on transient failures.

        Context overflows are surfaced immediately, before any provider call.
        Every attempt (including failed ones) lands in the audit log.
        """
        self.check_fits(request)
        last_error: Exception | None = None
        for attempt in range(1, self.max_attempts + 1):
            try:
                response = self.backend.send(request)
            except (TransportError, RateLimitError) as exc:
                self._audit(request, attempt, None, error=str(exc))
                last_error = exc
                if attempt < self.max_attempts:
                    self._sleep(self.backoff_base * (2 ** (attempt - 1)))
                continue
            self._audit(request, attempt, response)
            return response
        raise TransportError(
            f"backend still failing after {self.max_attempts} attempts: {last_error}"
        ) from last_error

    def complete_structured(self, request: CompletionRequest, schema: Mapping) -> StructuredCompletion:
        """Run a completion that must parse as JSON and satisfy ``schema``.

        On parse or validation failure the request is re-issued with a
        corrective instruction quoting the error, up to the attempt budget;
        exhausting it raises with every raw attempt attached.
        """
        attempts: list[str] = []
        current = request
        last_error = ""
        for _ in range(self.structured_attempts):
            response = self.complete(current)
            attempts.append(response.text)
            try:
                value = json.loads(unwrap_code_fences(response.text))
            except json.JSONDecodeError as exc:
                last_error = f"not parseable as JSON ({exc.msg})"
            else:
                try:
                    jsonschema.validate(value, dict(schema))
                except jsonschema.ValidationError as exc:
                    last_error = f"JSON does not match the required shape ({exc.message})"
                else:
                    return StructuredCompletion(
                        value=value, attempts=tuple(attempts), response=response
                    )
            corrective = CORRECTIVE_TEMPLATE.format(error=last_error[:300])
            current = replace(current, user_message=current.user_message + "\n\n" + corrective)
        raise StructuredOutputError(
            f"no schema-valid output after {self.structured_attempts} attempts; "
            f"last problem: {last_error}",
            attempts=tuple(attempts),
        )
