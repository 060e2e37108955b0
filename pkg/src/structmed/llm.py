"""Text-generation providers: a chat-completions HTTP client, a
deterministic mock for offline runs, and a persistent response cache.

The cache is a directory of one JSON file per key (hex hash filename), so
experiments are resumable and cache contents are diff-able. Cache I/O
failures are non-fatal: the call falls through to the provider with a
warning.
"""

from __future__ import annotations

import hashlib
import json
import logging
import os
import threading
import time
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Callable, Protocol

import requests

log = logging.getLogger(__name__)


class LLMError(Exception):
    """Base class for provider failures."""


class TransportError(LLMError):
    """Network-level failure that persisted through retries."""


class HTTPStatusError(LLMError):
    """Non-success HTTP status from the provider."""

    def __init__(self, status: int, body: str):
        super().__init__(f"HTTP {status}: {body[:200]}")
        self.status = status
        self.body = body


class MissingFixtureError(LLMError):
    """Mock provider has no fixture for the requested prompt."""


@dataclass(frozen=True)
class CompletionParams:
    max_new_tokens: int
    temperature: float = 0.0
    stop_sequences: tuple[str, ...] = ()

    def __post_init__(self):
        if self.max_new_tokens <= 0:
            raise ValueError("max_new_tokens must be positive")
        if self.temperature < 0:
            raise ValueError("temperature must be >= 0")

    def fingerprint(self) -> str:
        return json.dumps(
            {
                "max_new_tokens": self.max_new_tokens,
                "temperature": self.temperature,
                "stop_sequences": list(self.stop_sequences),
            },
            sort_keys=True,
        )


@dataclass(frozen=True)
class ProviderConfig:
    endpoint: str
    model: str
    credential_env: str = "STRUCTMED_API_KEY"
    timeout_seconds: float = 60.0
    retries: int = 2
    backoff_seconds: float = 1.0

    def __post_init__(self):
        if self.retries < 0:
            raise ValueError("retries must be >= 0")
        if self.timeout_seconds <= 0:
            raise ValueError("timeout must be positive")


class CompletionProvider(Protocol):
    model_id: str

    def complete(self, prompt: str, params: CompletionParams) -> str: ...


def apply_stop_sequences(text: str, stops: tuple[str, ...]) -> str:
    """Cut at the earliest occurrence of any stop sequence."""
    cut = len(text)
    for stop in stops:
        idx = text.find(stop)
        if idx != -1:
            cut = min(cut, idx)
    return text[:cut]


def fixture_key(prompt: str, params: CompletionParams) -> str:
    digest = hashlib.sha256()
    digest.update(prompt.encode("utf-8"))
    digest.update(b"\x00")
    digest.update(params.fingerprint().encode("utf-8"))
    return digest.hexdigest()


class MockProvider:
    """Fixture-table provider for deterministic offline pipelines.

    Responses are keyed by a stable hash of (prompt, params). A fallback
    callable may synthesize responses for keys not in the table; every call
    is appended to ``call_log``.
    """

    def __init__(
        self,
        fixtures: dict[str, str] | None = None,
        fallback: Callable[[str, CompletionParams], str] | None = None,
        model_id: str = "mock",
    ):
        self.fixtures = dict(fixtures or {})
        self.fallback = fallback
        self.model_id = model_id
        self.call_log: list[str] = []
        self._lock = threading.Lock()

    def add_fixture(self, prompt: str, params: CompletionParams, text: str) -> None:
        self.fixtures[fixture_key(prompt, params)] = text

    def complete(self, prompt: str, params: CompletionParams) -> str:
        if not prompt:
            raise ValueError("prompt is empty")
        with self._lock:
            self.call_log.append(prompt)
        key = fixture_key(prompt, params)
        if key in self.fixtures:
            text = self.fixtures[key]
        elif self.fallback is not None:
            text = self.fallback(prompt, params)
        else:
            raise MissingFixtureError(f"no fixture for key {key[:16]}…")
        return apply_stop_sequences(text, params.stop_sequences)


class HttpChatProvider:
    """OpenAI-compatible chat-completions client.

    Retries apply only to transport errors and 5xx responses; 4xx means a
    malformed request and is raised immediately.
    """

    def __init__(self, config: ProviderConfig, session: requests.Session | None = None):
        self.config = config
        self.model_id = config.model
        self._session = session or requests.Session()

    def _headers(self) -> dict[str, str]:
        headers = {"Content-Type": "application/json"}
        key = os.environ.get(self.config.credential_env, "")
        if key:
            headers["Authorization"] = f"Bearer {key}"
        return headers

    def complete(self, prompt: str, params: CompletionParams) -> str:
        if not prompt:
            raise ValueError("prompt is empty")
        payload = {
            "model": self.config.model,
            "messages": [{"role": "user", "content": prompt}],
            "temperature": params.temperature,
            "max_tokens": params.max_new_tokens,
        }
        if params.stop_sequences:
            payload["stop"] = list(params.stop_sequences)

        last_exc: Exception | None = None
        for attempt in range(self.config.retries + 1):
            try:
                resp = self._session.post(
                    self.config.endpoint,
                    json=payload,
                    headers=self._headers(),
                    timeout=self.config.timeout_seconds,
                )
            except requests.RequestException as exc:
                last_exc = exc
            else:
                if resp.status_code < 300:
                    try:
                        text = resp.json()["choices"][0]["message"]["content"]
                    except (ValueError, KeyError, IndexError, TypeError) as exc:
                        raise HTTPStatusError(resp.status_code, f"malformed body: {resp.text[:200]}") from exc
                    return apply_stop_sequences(text, params.stop_sequences)
                if resp.status_code < 500:
                    raise HTTPStatusError(resp.status_code, resp.text)
                last_exc = HTTPStatusError(resp.status_code, resp.text)
            if attempt < self.config.retries:
                time.sleep(self.config.backoff_seconds * (2**attempt))
        raise TransportError(f"provider unreachable after {self.config.retries + 1} attempts") from last_exc


class ResponseCache:
    """Directory-backed response cache, one JSON file per key."""

    def __init__(self, directory: str | Path):
        self.directory = Path(directory)
        self.directory.mkdir(parents=True, exist_ok=True)
        self._lock = threading.Lock()

    @staticmethod
    def key(model_id: str, prompt: str, params: CompletionParams) -> str:
        digest = hashlib.sha256()
        for part in (model_id, prompt, params.fingerprint()):
            digest.update(part.encode("utf-8"))
            digest.update(b"\x00")
        return digest.hexdigest()

    def _path(self, key: str) -> Path:
        return self.directory / f"{key}.json"

    def get(self, key: str) -> str | None:
        try:
            path = self._path(key)
            if not path.exists():
                return None
            return json.loads(path.read_text(encoding="utf-8"))["response"]
        except (OSError, ValueError, KeyError) as exc:
            log.warning("cache read failed for %s: %s", key[:16], exc)
            return None

    def put(self, key: str, prompt: str, response: str) -> None:
        entry = {
            "prompt_sha256": hashlib.sha256(prompt.encode("utf-8")).hexdigest(),
            "response": response,
        }
        try:
            with self._lock:
                tmp = self._path(key).with_suffix(".tmp")
                tmp.write_text(json.dumps(entry, ensure_ascii=False), encoding="utf-8")
                tmp.replace(self._path(key))
        except OSError as exc:
            log.warning("cache write failed for %s: %s", key[:16], exc)

    def __len__(self) -> int:
        return sum(1 for _ in self.directory.glob("*.json"))


class CachingProvider:
    """Wraps a provider with a ResponseCache; hits skip the provider."""

    def __init__(self, provider: CompletionProvider, cache: ResponseCache):
        self.provider = provider
        self.cache = cache
        self.model_id = provider.model_id

    def complete(self, prompt: str, params: CompletionParams) -> str:
        key = ResponseCache.key(self.model_id, prompt, params)
        hit = self.cache.get(key)
        if hit is not None:
            return hit
        text = self.provider.complete(prompt, params)
        self.cache.put(key, prompt, text)
        return text


def cached_complete(
    cache: ResponseCache,
    provider: CompletionProvider,
    prompt: str,
    params: CompletionParams,
) -> str:
    return CachingProvider(provider, cache).complete(prompt, params)


class CannedStructuredProvider:
    """Offline demo provider: emits a deterministic structured response.

    The question is read back out of the prompt, and every section is a
    fixed function of it, so whole pipelines built on this provider are
    byte-reproducible. Purely test/demo scaffolding.
    """

    def __init__(self, model_id: str = "canned"):
        self.model_id = model_id
        self.call_log: list[str] = []
        self._lock = threading.Lock()

    @staticmethod
    def _question_from(prompt: str) -> str:
        question = prompt.strip().splitlines()[-1]
        # Last "Question:" line: a one-shot example's question comes first.
        for line in prompt.splitlines():
            if line.startswith("Question:"):
                question = line[len("Question:"):].strip()
        return question

    def complete(self, prompt: str, params: CompletionParams) -> str:
        if not prompt:
            raise ValueError("prompt is empty")
        with self._lock:
            self.call_log.append(prompt)
        q = self._question_from(prompt)
        text = (
            f"### 1. Understand the Question:\nThe question asks: {q}\n\n"
            f"### 2. Recall Relevant Medical Knowledge:\nKnown facts about: {q}\n\n"
            f"### 3. Analyze Medical Information:\nAnalysis of: {q}\n\n"
            f"### 8. Long-Form Answer:\nIn summary, regarding the question {q} "
            f"the available evidence supports a cautious, evidence-based approach. "
            f"ANSWER END\n### END\n"
        )
        return apply_stop_sequences(text, params.stop_sequences)
