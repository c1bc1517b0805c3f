"""Chat-completion access for dataset synthesis jobs.

One neutral request shape (system + user message) with three wire adapters
speaking the openai-style, anthropic-style, and google-style HTTP
contracts directly; no provider SDKs. Every response is cached under a
stable content key, so a cache-complete job re-run never touches the
network, and a deterministic mock provider stands in for all of them in
tests and offline runs.

Credentials are resolved from environment variables at request time and
are never written to the cache, the ledger, or any log.
"""

from __future__ import annotations

import json
import os
import threading
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import requests

from .records import UsageError, stable_key

PROVIDERS = ("openai-style", "anthropic-style", "google-style", "mock")

DEFAULT_KEY_ENV = {
    "openai-style": "OPENAI_STYLE_API_KEY",
    "anthropic-style": "ANTHROPIC_STYLE_API_KEY",
    "google-style": "GOOGLE_STYLE_API_KEY",
}

DEFAULT_BASE_URL = {
    "openai-style": "https://api.openai.com",
    "anthropic-style": "https://api.anthropic.com",
    "google-style": "https://generativelanguage.googleapis.com",
}


class AuthError(RuntimeError):
    """Credential missing or rejected; fatal for the provider."""


class TransientProviderError(RuntimeError):
    """Retryable failure: rate limit, 5xx, or network trouble."""


class RequestFailed(RuntimeError):
    """Retries exhausted or the response was unusable; job continues."""


@dataclass(frozen=True)
class GenRequest:
    provider: str
    model: str
    system: str
    user: str
    temperature: float = 0.0
    max_tokens: int = 1024
    key_ref: str = ""

    def __post_init__(self):
        if self.provider not in PROVIDERS:
            raise UsageError(f"unknown provider '{self.provider}'")
        if not self.model:
            raise UsageError("model must be non-empty")
        if not 0.0 <= self.temperature <= 2.0:
            raise UsageError("temperature must be in [0, 2]")

    def cache_key(self) -> str:
        return stable_key(
            self.provider, self.model, self.system, self.user, repr(self.temperature)
        )


@dataclass
class Completion:
    text: str
    input_tokens: int
    output_tokens: int
    cached: bool = False
    retries: int = 0


# ---------------------------------------------------------------------------
# Wire adapters


def _openai_wire(req: GenRequest, base_url: str, api_key: str):
    url = f"{base_url}/v1/chat/completions"
    headers = {"Authorization": f"Bearer {api_key}", "Content-Type": "application/json"}
    body = {
        "model": req.model,
        "messages": [
            {"role": "system", "content": req.system},
            {"role": "user", "content": req.user},
        ],
        "temperature": req.temperature,
        "max_tokens": req.max_tokens,
    }
    return url, headers, body


def _openai_parse(payload: dict):
    text = payload["choices"][0]["message"]["content"]
    usage = payload.get("usage", {})
    return text, int(usage.get("prompt_tokens", 0)), int(usage.get("completion_tokens", 0))


def _anthropic_wire(req: GenRequest, base_url: str, api_key: str):
    url = f"{base_url}/v1/messages"
    headers = {
        "x-api-key": api_key,
        "anthropic-version": "2023-06-01",
        "Content-Type": "application/json",
    }
    body = {
        "model": req.model,
        "system": req.system,
        "messages": [{"role": "user", "content": req.user}],
        "temperature": req.temperature,
        "max_tokens": req.max_tokens,
    }
    return url, headers, body


def _anthropic_parse(payload: dict):
    text = payload["content"][0]["text"]
    usage = payload.get("usage", {})
    return text, int(usage.get("input_tokens", 0)), int(usage.get("output_tokens", 0))


def _google_wire(req: GenRequest, base_url: str, api_key: str):
    url = f"{base_url}/v1beta/models/{req.model}:generateContent?key={api_key}"
    headers = {"Content-Type": "application/json"}
    body = {
        "system_instruction": {"parts": [{"text": req.system}]},
        "contents": [{"role": "user", "parts": [{"text": req.user}]}],
        "generationConfig": {
            "temperature": req.temperature,
            "maxOutputTokens": req.max_tokens,
        },
    }
    return url, headers, body


def _google_parse(payload: dict):
    text = payload["candidates"][0]["content"]["parts"][0]["text"]
    usage = payload.get("usageMetadata", {})
    return text, int(usage.get("promptTokenCount", 0)), int(usage.get("candidatesTokenCount", 0))


_WIRE = {
    "openai-style": (_openai_wire, _openai_parse),
    "anthropic-style": (_anthropic_wire, _anthropic_parse),
    "google-style": (_google_wire, _google_parse),
}


class HttpProvider:
    """Single-shot HTTP call for one of the three wire formats."""

    def __init__(self, provider: str, base_url: str | None = None, session=None,
                 timeout: float = 120.0):
        if provider not in _WIRE:
            raise UsageError(f"no wire adapter for provider '{provider}'")
        self.provider = provider
        self.base_url = base_url or os.environ.get(
            provider.replace("-", "_").upper() + "_BASE_URL", DEFAULT_BASE_URL[provider]
        )
        self.session = session or requests.Session()
        self.timeout = timeout

    def _resolve_key(self, req: GenRequest) -> str:
        env_name = req.key_ref or DEFAULT_KEY_ENV[self.provider]
        key = os.environ.get(env_name)
        if not key:
            raise AuthError(f"credential not set: export {env_name}")
        return key

    def complete(self, req: GenRequest) -> Completion:
        build, parse = _WIRE[self.provider]
        url, headers, body = build(req, self.base_url, self._resolve_key(req))
        try:
            resp = self.session.post(url, headers=headers, json=body, timeout=self.timeout)
        except requests.RequestException as err:
            raise TransientProviderError(f"network failure: {err.__class__.__name__}") from err
        if resp.status_code in (401, 403):
            raise AuthError(f"provider rejected credentials (HTTP {resp.status_code})")
        if resp.status_code == 429 or resp.status_code >= 500:
            raise TransientProviderError(f"HTTP {resp.status_code}")
        if resp.status_code != 200:
            raise RequestFailed(f"HTTP {resp.status_code}: {resp.text[:200]}")
        try:
            text, toks_in, toks_out = parse(resp.json())
        except (KeyError, IndexError, TypeError, ValueError) as err:
            raise RequestFailed(f"unparseable provider response: {err}") from err
        return Completion(text=text, input_tokens=toks_in, output_tokens=toks_out)


# ---------------------------------------------------------------------------
# Mock provider


def extract_fenced_json(text: str) -> dict | None:
    """First ```json fenced block, or the first balanced object literal."""
    marker = "```json"
    start = text.find(marker)
    if start != -1:
        end = text.find("```", start + len(marker))
        if end != -1:
            try:
                obj = json.loads(text[start + len(marker) : end])
                return obj if isinstance(obj, dict) else None
            except json.JSONDecodeError:
                return None
    brace = text.find("{")
    if brace == -1:
        return None
    depth = 0
    in_string = False
    escaped = False
    for i, ch in enumerate(text[brace:], brace):
        if in_string:
            if escaped:
                escaped = False
            elif ch == "\\":
                escaped = True
            elif ch == '"':
                in_string = False
            continue
        if ch == '"':
            in_string = True
        elif ch == "{":
            depth += 1
        elif ch == "}":
            depth -= 1
            if depth == 0:
                try:
                    obj = json.loads(text[brace : i + 1])
                    return obj if isinstance(obj, dict) else None
                except json.JSONDecodeError:
                    return None
    return None


def fenced(obj: dict) -> str:
    return "```json\n" + json.dumps(obj, ensure_ascii=False) + "\n```"


def _mock_translate_field(value: str) -> str:
    return f"[ga] {value}" if value else ""


def default_mock_responder(req: GenRequest) -> str:
    """Deterministic canned responses keyed on the task marker in the prompt.

    Prompt templates carry a "TASK: <name>" line; the mock answers each task
    with a schema-valid fenced object derived only from the request content,
    so identical requests always produce identical replies.
    """
    payload = extract_fenced_json(req.user) or {}
    salt = req.cache_key()
    if "TASK: generate-instruction-pair" in req.user:
        return fenced(
            {
                "question_ga": f"Ceist {salt[:8]}: cad is brí leis an téacs?",
                "answer_ga": f"Freagra {salt[8:]}: míniú gairid ar an téacs.",
            }
        )
    if "TASK: translate-instruction" in req.user:
        return fenced(
            {
                "instruction": _mock_translate_field(payload.get("instruction", "")),
                "context": _mock_translate_field(payload.get("context", "")),
                "response": _mock_translate_field(payload.get("response", "")),
            }
        )
    if "TASK: preference-pair" in req.user:
        prompt = payload.get("prompt", "")
        response = payload.get("response", "")
        return fenced(
            {
                "prompt_ga": f"[ga] {prompt}",
                "accepted_ga": f"[ga] {response}",
                "rejected_ga": f"[ga-lag] {response}",
            }
        )
    return fenced({"echo": req.user[:80], "salt": salt})


class MockProvider:
    """Offline provider: deterministic responses plus scriptable failures."""

    def __init__(
        self,
        responder: Callable[[GenRequest], str] | None = None,
        transient_failures: int = 0,
        chars_per_token: int = 4,
    ):
        self.responder = responder or default_mock_responder
        self.transient_failures = transient_failures
        self.chars_per_token = chars_per_token
        self.calls = 0
        self._lock = threading.Lock()

    def complete(self, req: GenRequest) -> Completion:
        with self._lock:
            self.calls += 1
            fail = self.transient_failures > 0
            if fail:
                self.transient_failures -= 1
        if fail:
            raise TransientProviderError("mock HTTP 429")
        text = self.responder(req)
        return Completion(
            text=text,
            input_tokens=max(1, (len(req.system) + len(req.user)) // self.chars_per_token),
            output_tokens=max(1, len(text) // self.chars_per_token),
        )


def build_provider(provider: str, base_url: str | None = None):
    if provider == "mock":
        return MockProvider()
    return HttpProvider(provider, base_url=base_url)


# ---------------------------------------------------------------------------
# Rate limiting, retries, cache, cost ledger


class TokenBucket:
    """Classic token bucket; acquire() blocks until a token is available."""

    def __init__(self, rate_per_sec: float, capacity: float | None = None,
                 clock=time.monotonic, sleep=time.sleep):
        if rate_per_sec <= 0:
            raise UsageError("rate must be positive")
        self.rate = rate_per_sec
        self.capacity = capacity if capacity is not None else max(1.0, rate_per_sec)
        self.tokens = self.capacity
        self.clock = clock
        self.sleep = sleep
        self._last = clock()

    def acquire(self) -> None:
        while True:
            now = self.clock()
            self.tokens = min(self.capacity, self.tokens + (now - self._last) * self.rate)
            self._last = now
            if self.tokens >= 1.0:
                self.tokens -= 1.0
                return
            self.sleep((1.0 - self.tokens) / self.rate)


@dataclass
class CostLedgerEntry:
    request_key: str
    model: str
    input_tokens: int
    output_tokens: int
    in_price: float
    out_price: float
    total: float


@dataclass
class CostLedger:
    prices: dict[str, tuple[float, float]] = field(default_factory=dict)
    entries: list[CostLedgerEntry] = field(default_factory=list)

    def __post_init__(self):
        self._lock = threading.Lock()

    def record(self, key: str, model: str, input_tokens: int, output_tokens: int) -> CostLedgerEntry:
        in_price, out_price = self.prices.get(model, (0.0, 0.0))
        entry = CostLedgerEntry(
            request_key=key,
            model=model,
            input_tokens=input_tokens,
            output_tokens=output_tokens,
            in_price=in_price,
            out_price=out_price,
            total=input_tokens * in_price + output_tokens * out_price,
        )
        with self._lock:
            self.entries.append(entry)
        return entry

    def total(self) -> float:
        return sum(e.total for e in self.entries)


class CompletionClient:
    """Cache + retry + rate-limit wrapper over a provider.

    Responses are cached as content-addressed JSON files keyed by
    GenRequest.cache_key(); a cache hit never consults the rate limiter or
    the provider. Transient failures back off exponentially for a bounded
    number of attempts, then the request is marked failed so the job can
    account for it and continue.
    """

    def __init__(
        self,
        provider,
        cache_dir: str | Path,
        rate_limiter: TokenBucket | None = None,
        ledger: CostLedger | None = None,
        max_attempts: int = 5,
        backoff_base: float = 0.5,
        backoff_cap: float = 30.0,
        sleep=time.sleep,
    ):
        self.provider = provider
        self.cache_dir = Path(cache_dir)
        self.cache_dir.mkdir(parents=True, exist_ok=True)
        self.rate_limiter = rate_limiter
        self.ledger = ledger if ledger is not None else CostLedger()
        self.max_attempts = max_attempts
        self.backoff_base = backoff_base
        self.backoff_cap = backoff_cap
        self.sleep = sleep

    def _cache_path(self, key: str) -> Path:
        return self.cache_dir / f"{key}.json"

    def complete(self, req: GenRequest) -> Completion:
        key = req.cache_key()
        path = self._cache_path(key)
        if path.exists():
            cached = json.loads(path.read_text(encoding="utf-8"))
            return Completion(
                text=cached["text"],
                input_tokens=cached["input_tokens"],
                output_tokens=cached["output_tokens"],
                cached=True,
            )

        retries = 0
        for attempt in range(self.max_attempts):
            if self.rate_limiter is not None:
                self.rate_limiter.acquire()
            try:
                result = self.provider.complete(req)
            except TransientProviderError:
                retries += 1
                if attempt + 1 >= self.max_attempts:
                    raise RequestFailed(
                        f"retries exhausted after {self.max_attempts} attempts"
                    ) from None
                self.sleep(min(self.backoff_cap, self.backoff_base * (2**attempt)))
                continue
            result.retries = retries
            self.ledger.record(key, req.model, result.input_tokens, result.output_tokens)
            payload = {
                "key": key,
                "provider": req.provider,
                "model": req.model,
                "temperature": req.temperature,
                "text": result.text,
                "input_tokens": result.input_tokens,
                "output_tokens": result.output_tokens,
            }
            tmp = path.with_suffix(".tmp")
            tmp.write_text(json.dumps(payload, ensure_ascii=False), encoding="utf-8")
            os.replace(tmp, path)
            return result
        raise RequestFailed("unreachable")  # pragma: no cover
