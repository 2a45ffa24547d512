"""Provider-agnostic chat-completion access with record/replay transcripts.

All network I/O in this codebase happens here. A `Gateway` wraps a
`ChatProvider` in one of three modes:

* ``live``    — call the provider, return the response.
* ``record``  — call the provider and append every exchange to a transcript.
* ``replay``  — answer from the transcript only; a missing fingerprint is an
  error, and no network is touched.

Structured output: when a request carries a JSON schema, the reply must parse
and validate against it; otherwise the gateway re-asks (appending the
validation error to the prompt) a bounded number of times before failing.
"""

from __future__ import annotations

import json
import re
import threading
import time
from dataclasses import dataclass, replace
from hashlib import sha256
from pathlib import Path
from typing import Any, Callable, Protocol

import jsonschema
import requests


class GatewayError(Exception):
    """Base class for gateway failures."""


class TransportError(GatewayError):
    """Provider unreachable or persistently failing after retries."""


class SchemaValidationError(GatewayError):
    """Reply did not satisfy the requested response schema after all re-asks."""


class ReplayMissError(GatewayError):
    """Replay mode was asked for a request absent from the transcript."""


@dataclass(frozen=True, slots=True)
class ChatRequest:
    system_prompt: str
    user_prompt: str
    model_id: str
    response_schema: str | None = None
    temperature: float = 0.0
    max_tokens: int = 4096

    def __post_init__(self) -> None:
        if not 0.0 <= self.temperature <= 2.0:
            raise ValueError(f"temperature must be in [0, 2], got {self.temperature}")
        if self.max_tokens <= 0:
            raise ValueError("max_tokens must be positive")


@dataclass(frozen=True, slots=True)
class ChatResponse:
    text: str
    parsed: Any | None
    request_fingerprint: str


def fingerprint(request: ChatRequest) -> str:
    """Stable sha256 digest over every request field."""
    payload = json.dumps(
        {
            "system_prompt": request.system_prompt,
            "user_prompt": request.user_prompt,
            "model_id": request.model_id,
            "response_schema": request.response_schema,
            "temperature": request.temperature,
            "max_tokens": request.max_tokens,
        },
        sort_keys=True,
        separators=(",", ":"),
        ensure_ascii=False,
    )
    return sha256(payload.encode("utf-8")).hexdigest()


class ChatProvider(Protocol):
    def complete_text(self, request: ChatRequest) -> str: ...


class HttpProvider:
    """OpenAI-compatible chat-completions endpoint over HTTP."""

    def __init__(self, endpoint: str, api_key: str = "", timeout_s: float = 120.0):
        self.endpoint = endpoint.rstrip("/")
        self.api_key = api_key
        self.timeout_s = timeout_s

    def complete_text(self, request: ChatRequest) -> str:
        messages = []
        if request.system_prompt:
            messages.append({"role": "system", "content": request.system_prompt})
        messages.append({"role": "user", "content": request.user_prompt})
        body: dict[str, Any] = {
            "model": request.model_id,
            "messages": messages,
            "temperature": request.temperature,
            "max_tokens": request.max_tokens,
        }
        if request.response_schema is not None:
            body["response_format"] = {
                "type": "json_schema",
                "json_schema": {
                    "name": "response",
                    "schema": json.loads(request.response_schema),
                },
            }
        headers = {"Content-Type": "application/json"}
        if self.api_key:
            headers["Authorization"] = f"Bearer {self.api_key}"
        resp = requests.post(
            f"{self.endpoint}/chat/completions",
            json=body,
            headers=headers,
            timeout=self.timeout_s,
        )
        resp.raise_for_status()
        data = resp.json()
        try:
            return data["choices"][0]["message"]["content"]
        except (KeyError, IndexError, TypeError) as exc:
            raise TransportError(f"malformed completion payload: {exc}") from exc


class CallableProvider:
    """Adapter for a plain function, used by tests and fixture recording."""

    def __init__(self, fn: Callable[[ChatRequest], str]):
        self._fn = fn

    def complete_text(self, request: ChatRequest) -> str:
        return self._fn(request)


class TranscriptStore:
    """Fingerprint-keyed store of recorded exchanges, persisted as JSON Lines.

    Repeated identical requests are kept in recording order and replayed in
    that order (a replay cursor advances per fingerprint; once exhausted the
    last response repeats). Writes are serialized internally and appended to
    the file as they happen, so a crashed recording keeps what completed.
    """

    def __init__(self, path: str | Path | None = None):
        self.path = Path(path) if path is not None else None
        self.entries: dict[str, list[str]] = {}
        self._cursor: dict[str, int] = {}
        self._lock = threading.Lock()
        if self.path is not None and self.path.exists():
            for line in self.path.read_text(encoding="utf-8").splitlines():
                if not line.strip():
                    continue
                obj = json.loads(line)
                self.entries.setdefault(obj["fingerprint"], []).append(obj["response"]["text"])

    def __len__(self) -> int:
        return len(self.entries)

    def get(self, fp: str) -> str | None:
        """Next recorded response for this fingerprint, advancing the cursor."""
        with self._lock:
            texts = self.entries.get(fp)
            if not texts:
                return None
            index = self._cursor.get(fp, 0)
            self._cursor[fp] = index + 1
            return texts[min(index, len(texts) - 1)]

    def put(self, request: ChatRequest, text: str) -> None:
        fp = fingerprint(request)
        entry = {
            "fingerprint": fp,
            "request": {
                "system_prompt": request.system_prompt,
                "user_prompt": request.user_prompt,
                "model_id": request.model_id,
                "response_schema": request.response_schema,
                "temperature": request.temperature,
                "max_tokens": request.max_tokens,
            },
            "response": {"text": text},
        }
        with self._lock:
            self.entries.setdefault(fp, []).append(text)
            if self.path is not None:
                with self.path.open("a", encoding="utf-8") as fh:
                    fh.write(json.dumps(entry, ensure_ascii=False) + "\n")


_FENCED_JSON = re.compile(r"```(?:json)?\s*\n(.*?)\n\s*```", re.DOTALL)

_REASK_NOTE = (
    "\n\nYour previous reply was not valid against the required JSON schema: "
    "{error}\nReply again with a single JSON object that satisfies the schema, "
    "and nothing else."
)


def _extract_json(text: str) -> Any:
    candidate = text
    m = _FENCED_JSON.search(text)
    if m:
        candidate = m.group(1)
    return json.loads(candidate)


class Gateway:
    """Chat-completion front door with retries, schema enforcement, and replay."""

    total_calls = 0
    _counter_lock = threading.Lock()

    def __init__(
        self,
        provider: ChatProvider | None = None,
        mode: str = "replay",
        transcript: TranscriptStore | None = None,
        transport_retries: int = 3,
        schema_reasks: int = 2,
        backoff_s: float = 0.5,
    ):
        if mode not in ("live", "record", "replay"):
            raise ValueError(f"unknown gateway mode {mode!r}")
        if mode in ("live", "record") and provider is None:
            raise ValueError(f"mode {mode!r} needs a provider")
        if mode in ("record", "replay") and transcript is None:
            raise ValueError(f"mode {mode!r} needs a transcript store")
        self.provider = provider
        self.mode = mode
        self.transcript = transcript
        self.transport_retries = transport_retries
        self.schema_reasks = schema_reasks
        self.backoff_s = backoff_s
        self.call_count = 0

    def _bump(self) -> None:
        with Gateway._counter_lock:
            Gateway.total_calls += 1
            self.call_count += 1

    def _exchange(self, request: ChatRequest) -> str:
        fp = fingerprint(request)
        if self.mode == "replay":
            assert self.transcript is not None
            text = self.transcript.get(fp)
            if text is None:
                raise ReplayMissError(
                    f"no transcript entry for fingerprint {fp[:12]}… "
                    f"(model={request.model_id})"
                )
            return text
        text = self._call_with_retries(request)
        if self.mode == "record":
            assert self.transcript is not None
            self.transcript.put(request, text)
        return text

    def _call_with_retries(self, request: ChatRequest) -> str:
        assert self.provider is not None
        last: Exception | None = None
        for attempt in range(self.transport_retries + 1):
            try:
                return self.provider.complete_text(request)
            except (requests.RequestException, TransportError) as exc:
                last = exc
                if attempt < self.transport_retries:
                    time.sleep(self.backoff_s * (2**attempt))
        raise TransportError(
            f"provider failed after {self.transport_retries + 1} attempts: {last}"
        ) from last

    def complete(self, request: ChatRequest) -> ChatResponse:
        """Run one exchange; enforce the response schema with bounded re-asks."""
        self._bump()
        current = request
        for attempt in range(self.schema_reasks + 1):
            text = self._exchange(current)
            if request.response_schema is None:
                return ChatResponse(text, None, fingerprint(current))
            try:
                parsed = _extract_json(text)
                jsonschema.validate(parsed, json.loads(request.response_schema))
                return ChatResponse(text, parsed, fingerprint(current))
            except (json.JSONDecodeError, jsonschema.ValidationError) as exc:
                error = str(exc).splitlines()[0]
                if attempt == self.schema_reasks:
                    raise SchemaValidationError(
                        f"reply failed schema after {attempt + 1} attempts: {error}"
                    ) from exc
                current = replace(
                    current,
                    user_prompt=current.user_prompt + _REASK_NOTE.format(error=error),
                )
        raise AssertionError("unreachable")
