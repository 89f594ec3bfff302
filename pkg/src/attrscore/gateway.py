"""Provider-agnostic chat-completion gateway.

One `Gateway` holds any number of registered providers, a content-addressed
on-disk response cache, and per-provider rate limiting (token bucket) plus a
concurrency bound. All pipeline stages go through `Gateway.complete`, so a
warm cache makes full reruns deterministic and free.

Providers are callables `(CompletionRequest) -> str`. Two implementations
ship here: `HttpChatProvider` speaks the common `/chat/completions` JSON
protocol (hosted or self-hosted models), and `MockProvider` is a pure,
offline stand-in used by the test suite and `--mock` CLI runs.
"""

from __future__ import annotations

import hashlib
import json
import os
import random
import re
import tempfile
import threading
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterable

import httpx

from .errors import ConfigError, TransportError
from .text import jaccard_words, split_sentences

CACHE_DIR_ENV = "ATTRSCORE_CACHE_DIR"

# rate for providers that have no remote API to protect (the offline mock)
UNLIMITED_RPM = 1_000_000


@dataclass(frozen=True)
class ModelRef:
    """A provider/model pair, written ``provider`` or ``provider:model``."""

    provider_id: str
    model: str = "default"

    @classmethod
    def parse(cls, spec: str) -> "ModelRef":
        spec = spec.strip()
        if not spec:
            raise ValueError("empty provider selection")
        provider_id, sep, model = spec.partition(":")
        return cls(provider_id=provider_id, model=model if sep else "default")

    def __str__(self) -> str:
        return self.provider_id if self.model == "default" else f"{self.provider_id}:{self.model}"


@dataclass(frozen=True)
class CompletionRequest:
    provider_id: str
    model: str
    user_text: str
    system_text: str | None = None
    temperature: float = 0.0
    max_output_tokens: int = 2048

    def __post_init__(self) -> None:
        if not self.user_text:
            raise ValueError("user_text must be non-empty")
        if not 0.0 <= self.temperature <= 2.0:
            raise ValueError(f"temperature {self.temperature} outside [0, 2]")
        if self.max_output_tokens < 1:
            raise ValueError("max_output_tokens must be positive")


@dataclass(frozen=True)
class CompletionResult:
    text: str
    from_cache: bool
    latency_ms: int
    provider_id: str
    model: str


@dataclass(frozen=True)
class ProviderConfig:
    provider_id: str
    kind: str = "http"  # "http" or "mock"
    base_url: str = ""
    api_key_env: str = ""
    requests_per_minute: int = 60
    max_concurrent: int = 4
    max_retries: int = 3

    def __post_init__(self) -> None:
        if self.requests_per_minute < 1:
            raise ValueError("requests_per_minute must be >= 1")
        if self.max_concurrent < 1:
            raise ValueError("max_concurrent must be >= 1")
        if self.max_retries < 0:
            raise ValueError("max_retries must be >= 0")
        if self.kind not in ("http", "mock"):
            raise ValueError(f"unknown provider kind {self.kind!r}")


def cache_key(request: CompletionRequest) -> str:
    """Collision-resistant digest over all request fields, byte-exact (no
    whitespace normalization), stable across platforms and restarts."""
    payload = json.dumps(
        {
            "provider_id": request.provider_id,
            "model": request.model,
            "system_text": request.system_text,
            "user_text": request.user_text,
            "temperature": request.temperature,
            "max_output_tokens": request.max_output_tokens,
        },
        sort_keys=True,
        ensure_ascii=False,
        separators=(",", ":"),
    )
    return hashlib.sha256(payload.encode("utf-8")).hexdigest()


class ResponseCache:
    """Content-addressed response store: one JSON file per cache key,
    written atomically (temp file + rename)."""

    def __init__(self, root: str | Path):
        self.root = Path(root)
        self.root.mkdir(parents=True, exist_ok=True)

    def _path(self, key: str) -> Path:
        return self.root / f"{key}.json"

    def get(self, key: str) -> str | None:
        path = self._path(key)
        try:
            payload = json.loads(path.read_text(encoding="utf-8"))
        except FileNotFoundError:
            return None
        except (OSError, json.JSONDecodeError):
            return None  # unreadable entry behaves as a miss
        return payload.get("text")

    def put(self, key: str, text: str, request: CompletionRequest) -> None:
        payload = {
            "text": text,
            "provider_id": request.provider_id,
            "model": request.model,
            "created_at": time.time(),
        }
        fd, tmp = tempfile.mkstemp(dir=self.root, suffix=".tmp")
        try:
            with os.fdopen(fd, "w", encoding="utf-8") as fh:
                json.dump(payload, fh, ensure_ascii=False)
            os.replace(tmp, self._path(key))
        except BaseException:
            try:
                os.unlink(tmp)
            except OSError:
                pass
            raise


class TokenBucket:
    """Classic token bucket: capacity = requests_per_minute, refilled at
    requests_per_minute per minute. Thread-safe; clock/sleep injectable."""

    def __init__(
        self,
        rate_per_minute: int,
        clock: Callable[[], float] = time.monotonic,
        sleep: Callable[[float], None] = time.sleep,
    ):
        self._rate = rate_per_minute / 60.0
        self._capacity = float(rate_per_minute)
        self._tokens = self._capacity
        self._clock = clock
        self._sleep = sleep
        self._updated = clock()
        self._lock = threading.Lock()

    def acquire(self) -> None:
        while True:
            with self._lock:
                now = self._clock()
                self._tokens = min(self._capacity, self._tokens + (now - self._updated) * self._rate)
                self._updated = now
                if self._tokens >= 1.0:
                    self._tokens -= 1.0
                    return
                wait = (1.0 - self._tokens) / self._rate
            self._sleep(wait)


class TransientProviderError(Exception):
    """Raised by providers for failures worth retrying (timeout, 429, 5xx)."""


class HttpChatProvider:
    """Client for OpenAI-style chat-completion endpoints.

    POSTs ``{model, messages, temperature, max_tokens}`` to
    ``<base_url>/chat/completions`` and returns the first choice's content.
    The API key is read from the configured environment variable per call.
    """

    def __init__(self, config: ProviderConfig, client: httpx.Client | None = None, timeout: float = 120.0):
        self.config = config
        self._client = client or httpx.Client(timeout=timeout)

    def __call__(self, request: CompletionRequest) -> str:
        messages = []
        if request.system_text:
            messages.append({"role": "system", "content": request.system_text})
        messages.append({"role": "user", "content": request.user_text})
        body = {
            "model": request.model,
            "messages": messages,
            "temperature": request.temperature,
            "max_tokens": request.max_output_tokens,
        }
        headers = {}
        if self.config.api_key_env:
            headers["Authorization"] = f"Bearer {os.environ[self.config.api_key_env]}"
        url = self.config.base_url.rstrip("/") + "/chat/completions"
        try:
            response = self._client.post(url, json=body, headers=headers)
        except httpx.TimeoutException as exc:
            raise TransientProviderError(f"timeout calling {url}: {exc}") from exc
        except httpx.TransportError as exc:
            raise TransientProviderError(f"transport failure calling {url}: {exc}") from exc
        if response.status_code == 429 or response.status_code >= 500:
            raise TransientProviderError(f"{url} returned HTTP {response.status_code}")
        if response.status_code >= 400:
            raise TransportError(f"{url} returned HTTP {response.status_code}: {response.text[:500]}")
        try:
            return response.json()["choices"][0]["message"]["content"]
        except (KeyError, IndexError, TypeError, json.JSONDecodeError) as exc:
            raise TransportError(f"malformed completion payload from {url}") from exc


# ---------------------------------------------------------------------------
# Mock provider
# ---------------------------------------------------------------------------

# Marker phrases used to recognize each pipeline prompt. These must match the
# prompt builders (structuring/scoring/grounding/generation); the coupling is
# pinned by tests.
_STRUCTURE_MARKER = "You are an expert in information extraction and structuring from clinical notes"
_PAIR_SCORE_MARKER = "rate how similar the values are given the variable"
_HOLISTIC_MARKER = "rate how similar the two summaries are from 1-10"
_GENERATE_MARKER = "You are tasked with generating a high quality clinical discharge summary"
_GROUND_MARKER = "Return the span as an exact verbatim quote from the document"

_SECTION_HEADER_RE = re.compile(r"^\[\[([A-Za-z0-9_]+)\]\][ \t]*", re.MULTILINE)
_SCHEMA_KEY_RE = re.compile(r'"([A-Za-z0-9_]+)": string')


def parse_note_sections(note: str) -> dict[str, str]:
    """Parse the synthetic-corpus note format: ``[[key]]`` section headers,
    each followed by the section body (same line or the lines below).
    Returns key -> stripped body, in order."""
    sections: dict[str, str] = {}
    matches = list(_SECTION_HEADER_RE.finditer(note))
    for i, m in enumerate(matches):
        end = matches[i + 1].start() if i + 1 < len(matches) else len(note)
        sections[m.group(1)] = note[m.end() : end].strip()
    return sections


def _round_half_up(x: float) -> int:
    import math

    return math.floor(x + 0.5)


class MockProvider:
    """Deterministic offline model: a pure function of the request text.

    Rules:
      * structuring prompts: extract ``[[key]]`` sections from the embedded
        note by header matching; missing sections map to NONE
      * pair-scoring prompts: word-Jaccard J of the two values -> 1+round(3J)
      * holistic prompts: word-Jaccard J of the two summaries -> 1+round(9J)
      * grounding prompts: first sentence of the document containing the
        longest word of the extracted value, else NOT FOUND
      * generation prompts: echo the note's sections verbatim
    """

    def __call__(self, request: CompletionRequest) -> str:
        prompt = request.user_text
        if _STRUCTURE_MARKER in prompt:
            return self._structure(prompt)
        if _PAIR_SCORE_MARKER in prompt:
            return self._score_pair(prompt)
        if _HOLISTIC_MARKER in prompt:
            return self._score_holistic(prompt)
        if _GROUND_MARKER in prompt:
            return self._ground(prompt)
        if _GENERATE_MARKER in prompt:
            return self._generate(prompt)
        return "UNRECOGNIZED PROMPT"

    def _structure(self, prompt: str) -> str:
        note = _between(prompt, "Here is the note: ", "\nThe output should be a markdown code snippet")
        # the prompt builder appends one period after the note
        note = note.removesuffix(".")
        keys = _SCHEMA_KEY_RE.findall(prompt)
        sections = parse_note_sections(note)
        obj = {k: sections.get(k) or "NONE" for k in keys}
        return "```json\n" + json.dumps(obj, ensure_ascii=False, indent=2) + "\n```"

    def _score_pair(self, prompt: str) -> str:
        payload = prompt[prompt.rindex("Here is the dictionary: ") + len("Here is the dictionary: ") :]
        obj = json.loads(payload)
        (values,) = obj.values()
        j = jaccard_words(values[0], values[1])
        return str(1 + _round_half_up(3 * j))

    def _score_holistic(self, prompt: str) -> str:
        body = prompt[prompt.index(" summary1: ") + len(" summary1: ") :]
        first, second = body.split("\n summary2: ", 1)
        second = second.rstrip()
        if second.endswith("."):
            second = second[:-1]
        j = jaccard_words(first, second)
        return str(1 + _round_half_up(9 * j))

    def _ground(self, prompt: str) -> str:
        extracted = _between(prompt, "Extracted value: ", "\n\nFind the text span")
        document = prompt[prompt.index("Document:\n") + len("Document:\n") :]
        tokens = [w for w in (_strip_punct(t) for t in extracted.split()) if w]
        longest = max(tokens, key=len).lower() if tokens else ""
        if longest:
            for sentence in split_sentences(document):
                if longest in (w.lower() for w in (_strip_punct(t) for t in sentence.split()) if w):
                    return sentence
        return "NOT FOUND"

    def _generate(self, prompt: str) -> str:
        note = prompt[prompt.rindex("Context : ") + len("Context : ") :]
        sections = parse_note_sections(note)
        if not sections:
            return note.strip()
        return "\n\n".join(f"[[{k}]]\n{v}" for k, v in sections.items() if v)


def _between(text: str, start: str, end: str) -> str:
    i = text.index(start) + len(start)
    j = text.index(end, i)
    return text[i:j]


def _strip_punct(token: str) -> str:
    return token.strip(".,;:!?()[]{}\"'")


# ---------------------------------------------------------------------------
# Gateway
# ---------------------------------------------------------------------------


@dataclass
class GatewayStats:
    """Mutable call bookkeeping; provider_calls counts actual provider
    invocations (each retry attempt counts), cache_hits counts reads served
    without touching a provider."""

    provider_calls: dict[str, int] = field(default_factory=dict)
    cache_hits: int = 0
    retries: int = 0

    def total_calls(self) -> int:
        return sum(self.provider_calls.values())


class _Registered:
    def __init__(self, config: ProviderConfig, impl: Callable[[CompletionRequest], str], clock, sleep):
        self.config = config
        self.impl = impl
        self.bucket = TokenBucket(config.requests_per_minute, clock=clock, sleep=sleep)
        self.semaphore = threading.Semaphore(config.max_concurrent)


class Gateway:
    """Shared front door for all model calls: cache, limits, retries."""

    def __init__(
        self,
        providers: Iterable[ProviderConfig] = (),
        cache_dir: str | Path | None = None,
        clock: Callable[[], float] = time.monotonic,
        sleep: Callable[[float], None] = time.sleep,
        backoff_base: float = 0.5,
        backoff_jitter: float = 0.25,
        rng: random.Random | None = None,
    ):
        if cache_dir is None:
            cache_dir = os.environ.get(CACHE_DIR_ENV) or None
        self.cache = ResponseCache(cache_dir) if cache_dir else None
        self.stats = GatewayStats()
        self._clock = clock
        self._sleep = sleep
        self._backoff_base = backoff_base
        self._backoff_jitter = backoff_jitter
        self._rng = rng or random.Random()
        self._lock = threading.Lock()
        self._providers: dict[str, _Registered] = {}
        for config in providers:
            self.register(config)

    def register(self, config: ProviderConfig, impl: Callable[[CompletionRequest], str] | None = None) -> None:
        if impl is None:
            impl = MockProvider() if config.kind == "mock" else HttpChatProvider(config)
        self._providers[config.provider_id] = _Registered(config, impl, self._clock, self._sleep)

    @property
    def provider_ids(self) -> tuple[str, ...]:
        return tuple(self._providers)

    def call_count(self, provider_id: str | None = None) -> int:
        if provider_id is None:
            return self.stats.total_calls()
        return self.stats.provider_calls.get(provider_id, 0)

    def complete(self, request: CompletionRequest, refresh_cache: bool = False) -> CompletionResult:
        entry = self._providers.get(request.provider_id)
        if entry is None:
            raise ConfigError(
                f"unknown provider {request.provider_id!r}; registered: {', '.join(self._providers) or '(none)'}"
            )
        started = time.perf_counter()
        key = cache_key(request)
        if self.cache is not None and not refresh_cache:
            cached = self.cache.get(key)
            if cached is not None:
                with self._lock:
                    self.stats.cache_hits += 1
                return self._result(cached, True, started, request)
        config = entry.config
        if config.kind == "http" and config.api_key_env and config.api_key_env not in os.environ:
            raise ConfigError(
                f"provider {config.provider_id!r} needs API key env var {config.api_key_env} (not set)"
            )
        text = self._call_with_retries(entry, request)
        if self.cache is not None:
            self.cache.put(key, text, request)
        return self._result(text, False, started, request)

    def _result(self, text: str, from_cache: bool, started: float, request: CompletionRequest) -> CompletionResult:
        latency_ms = max(0, int((time.perf_counter() - started) * 1000))
        return CompletionResult(
            text=text,
            from_cache=from_cache,
            latency_ms=latency_ms,
            provider_id=request.provider_id,
            model=request.model,
        )

    def _call_with_retries(self, entry: _Registered, request: CompletionRequest) -> str:
        last_error: Exception | None = None
        with entry.semaphore:
            for attempt in range(entry.config.max_retries + 1):
                entry.bucket.acquire()
                with self._lock:
                    self.stats.provider_calls[request.provider_id] = (
                        self.stats.provider_calls.get(request.provider_id, 0) + 1
                    )
                try:
                    return entry.impl(request)
                except TransientProviderError as exc:
                    last_error = exc
                    with self._lock:
                        self.stats.retries += 1
                    if attempt < entry.config.max_retries:
                        delay = self._backoff_base * (2**attempt) + self._rng.uniform(0, self._backoff_jitter)
                        self._sleep(delay)
        raise TransportError(
            f"provider {request.provider_id!r} failed after {entry.config.max_retries + 1} attempts: {last_error}"
        ) from last_error


def mock_gateway(cache_dir: str | Path | None = None) -> Gateway:
    """Gateway with only the mock provider registered (offline runs).

    The mock is a local pure function, so the rate limit that protects
    remote APIs is left effectively open here.
    """
    gw = Gateway(cache_dir=cache_dir)
    gw.register(
        ProviderConfig(
            provider_id="mock", kind="mock", requests_per_minute=UNLIMITED_RPM, max_concurrent=64
        )
    )
    return gw
