"""Provider-agnostic LLM access for the two engine roles.

The optimizer role generates and refines workflows and judges workflow
quality; the evaluator role proposes metrics and judges samples. Each role
binds to one provider. A deterministic scripted provider backs all tests.
"""

from __future__ import annotations

import hashlib
import json
import re
import threading
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Optional, Protocol

import jsonschema

from .errors import (
    BudgetError,
    FormatError,
    GatewayError,
    ScriptedMissError,
    TransportError,
    ValidationError,
)

ROLES = ("optimizer", "evaluator")

EventSink = Callable[[str, dict], None]


@dataclass
class ChatExchange:
    role: str
    messages: list[dict]  # [{"speaker": "system"|"user"|"assistant", "text": ...}]
    response_schema: Optional[dict] = None
    temperature: float = 0.0
    seed: int = 0

    def validate(self) -> None:
        if self.role not in ROLES:
            raise ValidationError(f"unknown role {self.role!r}")
        if not self.messages:
            raise ValidationError("exchange must contain at least one message")
        if self.temperature < 0:
            raise ValidationError("temperature must be >= 0")

    def rendered(self) -> str:
        return "\n".join(m["text"] for m in self.messages)

    def digest(self) -> str:
        return hashlib.sha256(self.rendered().encode("utf-8")).hexdigest()[:16]


@dataclass
class GatewayBudget:
    max_calls_per_run: int = 10_000
    max_tokens_per_call: int = 8192
    retry_limit: int = 3
    backoff_base_ms: int = 250

    def validate(self) -> None:
        if min(self.max_calls_per_run, self.max_tokens_per_call, self.retry_limit, self.backoff_base_ms) <= 0:
            raise ValidationError("all budget fields must be positive")


class Provider(Protocol):
    def complete(self, exchange: ChatExchange) -> str: ...


@dataclass
class _ScriptRule:
    responses: list[str]
    contains: Optional[str] = None
    digest: Optional[str] = None
    cursor: int = 0

    def matches(self, exchange: ChatExchange) -> bool:
        if self.contains is not None:
            return self.contains in exchange.rendered()
        return self.digest == exchange.digest()

    def next_response(self) -> str:
        # Exhausted queues repeat their last response so long scripted runs
        # don't need one entry per call.
        idx = min(self.cursor, len(self.responses) - 1)
        self.cursor += 1
        return self.responses[idx]


class ScriptedProvider:
    """Deterministic provider: first matching rule wins, responses are a queue."""

    def __init__(self, rules: list[dict]):
        self.rules = []
        for rule in rules:
            if not rule.get("responses"):
                raise ValidationError("scripted rule needs at least one response")
            if ("contains" in rule) == ("digest" in rule):
                raise ValidationError("scripted rule needs exactly one of 'contains' or 'digest'")
            self.rules.append(
                _ScriptRule(
                    responses=[r if isinstance(r, str) else json.dumps(r) for r in rule["responses"]],
                    contains=rule.get("contains"),
                    digest=rule.get("digest"),
                )
            )

    @classmethod
    def from_file(cls, path: str | Path) -> "ScriptedProvider":
        data = json.loads(Path(path).read_text(encoding="utf-8"))
        return cls(data["matchers"])

    def complete(self, exchange: ChatExchange) -> str:
        for rule in self.rules:
            if rule.matches(exchange):
                return rule.next_response()
        raise ScriptedMissError(exchange.digest(), exchange.rendered()[:120])


class FlakyProvider:
    """Test helper: fail the first `failures` calls, then delegate."""

    def __init__(self, inner: Provider, failures: int):
        self.inner = inner
        self.failures = failures
        self.calls = 0

    def complete(self, exchange: ChatExchange) -> str:
        self.calls += 1
        if self.calls <= self.failures:
            raise TransportError(f"injected failure {self.calls}")
        return self.inner.complete(exchange)


class OpenAIChatProvider:
    """Live provider speaking the OpenAI-compatible chat-completions contract."""

    def __init__(self, endpoint: str, model: str, api_key: str = "", timeout: float = 120.0):
        self.endpoint = endpoint.rstrip("/")
        self.model = model
        self.api_key = api_key
        self.timeout = timeout

    def complete(self, exchange: ChatExchange) -> str:
        import httpx

        speaker_map = {"system": "system", "user": "user", "assistant": "assistant"}
        body = {
            "model": self.model,
            "messages": [{"role": speaker_map.get(m["speaker"], "user"), "content": m["text"]} for m in exchange.messages],
            "temperature": exchange.temperature,
            "seed": exchange.seed,
        }
        headers = {"Content-Type": "application/json"}
        if self.api_key:
            headers["Authorization"] = f"Bearer {self.api_key}"
        try:
            resp = httpx.post(f"{self.endpoint}/chat/completions", json=body, headers=headers, timeout=self.timeout)
            resp.raise_for_status()
            return resp.json()["choices"][0]["message"]["content"]
        except httpx.HTTPError as exc:
            raise TransportError(str(exc)) from exc


_FENCE_RE = re.compile(r"^```[a-zA-Z]*\n(.*)\n```$", re.DOTALL)


def _strip_fence(text: str) -> str:
    m = _FENCE_RE.match(text.strip())
    return m.group(1) if m else text


class LlmGateway:
    """Routes exchanges to the configured per-role provider with retries,
    structured-output validation, budgets, and transcript logging."""

    def __init__(
        self,
        providers: dict[str, Provider],
        budget: Optional[GatewayBudget] = None,
        event_sink: Optional[EventSink] = None,
        sleep: Callable[[float], None] = time.sleep,
    ):
        self.providers = providers
        self.budget = budget or GatewayBudget()
        self.budget.validate()
        self.event_sink = event_sink
        self.sleep = sleep
        self._calls = 0
        self._lock = threading.Lock()

    @property
    def calls_made(self) -> int:
        return self._calls

    def _charge(self) -> None:
        with self._lock:
            if self._calls >= self.budget.max_calls_per_run:
                raise BudgetError(f"call budget of {self.budget.max_calls_per_run} exhausted")
            self._calls += 1

    def _log(self, payload: dict) -> None:
        if self.event_sink is not None:
            self.event_sink("llm-call", payload)

    def complete(self, exchange: ChatExchange, _re_ask: bool = False) -> str:
        exchange.validate()
        provider = self.providers.get(exchange.role)
        if provider is None:
            raise ValidationError(f"no provider configured for role {exchange.role!r}")
        last_error: Optional[Exception] = None
        for attempt in range(self.budget.retry_limit + 1):
            self._charge()
            started = time.monotonic()
            try:
                text = provider.complete(exchange)
            except TransportError as exc:
                last_error = exc
                self._log(
                    {
                        "role": exchange.role,
                        "prompt_digest": exchange.digest(),
                        "attempt": attempt,
                        "re_ask": _re_ask,
                        "ok": False,
                        "error": str(exc),
                        "latency_ms": round((time.monotonic() - started) * 1000, 3),
                    }
                )
                if attempt < self.budget.retry_limit:
                    self.sleep(self.budget.backoff_base_ms * (2**attempt) / 1000.0)
                continue
            self._log(
                {
                    "role": exchange.role,
                    "prompt_digest": exchange.digest(),
                    "attempt": attempt,
                    "re_ask": _re_ask,
                    "ok": True,
                    "response_chars": len(text),
                    "latency_ms": round((time.monotonic() - started) * 1000, 3),
                }
            )
            return text
        raise GatewayError(f"provider for {exchange.role} failed after {self.budget.retry_limit} retries: {last_error}")

    def complete_structured(self, exchange: ChatExchange, schema: dict) -> Any:
        """Complete, parse JSON, and validate against `schema`.

        On a parse/validation failure, one corrective re-ask is issued that
        embeds the validation message; a second failure raises FormatError
        carrying both raw payloads.
        """
        if schema is None:
            raise ValidationError("schema required for structured completion")
        raw_payloads: list[str] = []
        text = self.complete(exchange)
        raw_payloads.append(text)
        problem = None
        try:
            return self._parse(text, schema)
        except (json.JSONDecodeError, jsonschema.ValidationError) as exc:
            problem = str(exc)

        retry_messages = exchange.messages + [
            {"speaker": "assistant", "text": text},
            {
                "speaker": "user",
                "text": "Your previous response was invalid: "
                + problem.splitlines()[0]
                + "\nRespond again with JSON matching the required schema, nothing else.",
            },
        ]
        retry = ChatExchange(
            role=exchange.role,
            messages=retry_messages,
            response_schema=schema,
            temperature=exchange.temperature,
            seed=exchange.seed,
        )
        text2 = self.complete(retry, _re_ask=True)
        raw_payloads.append(text2)
        try:
            return self._parse(text2, schema)
        except (json.JSONDecodeError, jsonschema.ValidationError) as exc:
            raise FormatError(
                f"structured response invalid after corrective re-ask: {exc}", raw_payloads
            ) from exc

    @staticmethod
    def _parse(text: str, schema: dict) -> Any:
        value = json.loads(_strip_fence(text))
        jsonschema.validate(value, schema)
        return value
