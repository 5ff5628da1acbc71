"""Completion backends: live chat-completion HTTP client, cassette replay,
and a record wrapper.

Every backend satisfies one contract: complete(prompt) -> non-empty text.
Exchanges are keyed by a sha256 digest of the rendered prompt text so a
recorded session can be replayed byte-for-byte with zero live calls.
"""

from __future__ import annotations

import hashlib
import json
import logging
import os
import threading
import time
from collections import deque
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Callable, Iterable, Protocol

import httpx

logger = logging.getLogger(__name__)

API_KEY_ENV = "DRAMATURGE_API_KEY"
CASSETTE_SUFFIX = ".cassette.jsonl"


class PromptPurpose(str, Enum):
    INSTANTIATION = "instantiation"
    INTERPRETATION = "interpretation"


@dataclass(frozen=True)
class Prompt:
    template_id: str
    rendered_text: str
    purpose: PromptPurpose

    def __post_init__(self) -> None:
        if not self.rendered_text:
            raise ValueError("prompt text must be non-empty")


def prompt_digest(rendered_text: str) -> str:
    """Stable exchange key: sha256 hex over the UTF-8 prompt text."""
    return hashlib.sha256(rendered_text.encode("utf-8")).hexdigest()


@dataclass(frozen=True)
class ProviderExchange:
    key: str
    prompt: Prompt
    response: str
    timestamp: float

    def to_record(self) -> dict:
        return {
            "key": self.key,
            "purpose": self.prompt.purpose.value,
            "template_id": self.prompt.template_id,
            "prompt": self.prompt.rendered_text,
            "response": self.response,
            "timestamp": self.timestamp,
        }

    @classmethod
    def from_record(cls, record: dict) -> "ProviderExchange":
        prompt = Prompt(
            template_id=record["template_id"],
            rendered_text=record["prompt"],
            purpose=PromptPurpose(record["purpose"]),
        )
        return cls(
            key=record["key"],
            prompt=prompt,
            response=record["response"],
            timestamp=record.get("timestamp", 0.0),
        )


class ProviderError(Exception):
    """Base class for completion-backend failures."""


class TransportError(ProviderError):
    """Network failure, HTTP non-success after retries, or timeout."""


class EmptyCompletionError(ProviderError):
    pass


class CassetteMiss(ProviderError):
    def __init__(self, key: str):
        self.key = key
        super().__init__(f"no recorded exchange for prompt digest {key}")


class CassetteCorrupt(ProviderError):
    pass


class CompletionProvider(Protocol):
    def complete(self, prompt: Prompt) -> str: ...


@dataclass
class ProviderConfig:
    """Live-client settings; the api key comes from the environment and is
    redacted from any serialized or printed form."""

    endpoint_url: str
    model_name: str
    api_key: str | None = field(default=None, repr=False)
    temperature: float | None = 0.0
    request_timeout: float = 60.0
    max_retries: int = 2

    def __post_init__(self) -> None:
        if self.temperature is not None and not 0.0 <= self.temperature <= 2.0:
            raise ValueError("temperature must be within [0, 2]")
        if self.request_timeout <= 0:
            raise ValueError("request_timeout must be positive")
        if self.api_key is None:
            self.api_key = os.environ.get(API_KEY_ENV)

    @classmethod
    def from_env(cls, endpoint_url: str, model_name: str, **kwargs) -> "ProviderConfig":
        return cls(endpoint_url=endpoint_url, model_name=model_name, **kwargs)


class HttpChatProvider:
    """Live client for the de-facto chat-completion HTTP shape.

    POST {endpoint_url} with {model, messages, temperature}; the completion
    is read from choices[0].message.content. 429 and 5xx responses are
    retried with exponential backoff up to max_retries.
    """

    RETRYABLE_STATUS = frozenset({429, 500, 502, 503, 504})

    def __init__(self, config: ProviderConfig, client: httpx.Client | None = None,
                 sleep: Callable[[float], None] = time.sleep):
        self.config = config
        self._client = client or httpx.Client(timeout=config.request_timeout)
        self._sleep = sleep

    def complete(self, prompt: Prompt) -> str:
        payload: dict = {
            "model": self.config.model_name,
            "messages": [{"role": "user", "content": prompt.rendered_text}],
        }
        if self.config.temperature is not None:
            payload["temperature"] = self.config.temperature
        headers = {}
        if self.config.api_key:
            headers["Authorization"] = f"Bearer {self.config.api_key}"

        attempts = self.config.max_retries + 1
        last_error: Exception | None = None
        for attempt in range(attempts):
            try:
                response = self._client.post(self.config.endpoint_url, json=payload,
                                             headers=headers)
            except httpx.HTTPError as exc:
                last_error = exc
                logger.warning("completion transport error (attempt %d/%d): %s",
                               attempt + 1, attempts, exc)
            else:
                if response.status_code == 200:
                    return self._extract(response)
                last_error = TransportError(
                    f"completion endpoint returned HTTP {response.status_code}")
                if response.status_code not in self.RETRYABLE_STATUS:
                    raise last_error
                logger.warning("completion HTTP %d (attempt %d/%d)",
                               response.status_code, attempt + 1, attempts)
            if attempt + 1 < attempts:
                self._sleep(2 ** attempt)
        raise TransportError(f"completion failed after {attempts} attempts: {last_error}")

    @staticmethod
    def _extract(response: httpx.Response) -> str:
        try:
            content = response.json()["choices"][0]["message"]["content"]
        except (KeyError, IndexError, TypeError, ValueError) as exc:
            raise TransportError(f"malformed completion response body: {exc}") from exc
        if not content:
            raise EmptyCompletionError("backend returned an empty completion")
        return content


class Cassette:
    """Append-only, line-delimited store of provider exchanges."""

    def __init__(self, exchanges: Iterable[ProviderExchange] = ()):
        self.exchanges: list[ProviderExchange] = list(exchanges)

    def append(self, exchange: ProviderExchange) -> None:
        self.exchanges.append(exchange)

    @classmethod
    def load(cls, path: str | Path) -> "Cassette":
        exchanges = []
        text = Path(path).read_text(encoding="utf-8")
        for line in text.splitlines():
            if line.strip():
                exchanges.append(ProviderExchange.from_record(json.loads(line)))
        return cls(exchanges)

    def save(self, path: str | Path) -> None:
        lines = [json.dumps(e.to_record(), ensure_ascii=False) for e in self.exchanges]
        Path(path).write_text("\n".join(lines) + ("\n" if lines else ""), encoding="utf-8")


class ReplayProvider:
    """Deterministic playback from a cassette, keyed by prompt digest.

    Repeated identical prompts are answered in recorded order. No clock,
    no randomness: the same session replays identically on any platform.
    """

    def __init__(self, cassette: Cassette):
        self._queues: dict[str, deque[str]] = {}
        for i, exchange in enumerate(cassette.exchanges):
            if exchange.key != prompt_digest(exchange.prompt.rendered_text):
                raise CassetteCorrupt(
                    f"exchange {i}: key does not match the prompt digest")
            self._queues.setdefault(exchange.key, deque()).append(exchange.response)
        self._lock = threading.Lock()

    @classmethod
    def from_file(cls, path: str | Path) -> "ReplayProvider":
        return cls(Cassette.load(path))

    def complete(self, prompt: Prompt) -> str:
        key = prompt_digest(prompt.rendered_text)
        with self._lock:
            queue = self._queues.get(key)
            if not queue:
                raise CassetteMiss(key)
            return queue.popleft()


def replay_provider(cassette: Cassette) -> ReplayProvider:
    return ReplayProvider(cassette)


class SequenceProvider:
    """Answers with a fixed list of responses in order, ignoring the prompt.

    Handy for authoring cassettes (wrap it in a RecordingProvider and play
    the session once) and for driving tests without fixture files.
    """

    def __init__(self, responses: Iterable[str]):
        self._queue: deque[str] = deque(responses)

    def complete(self, prompt: Prompt) -> str:
        if not self._queue:
            raise ProviderError("sequence provider ran out of planned responses")
        return self._queue.popleft()


class RecordingProvider:
    """Forwards to an inner provider and appends every exchange to a cassette.

    Appends are serialized so concurrent sessions can share one recorder;
    pass a fixed clock to produce byte-stable cassettes.
    """

    def __init__(self, inner: CompletionProvider, cassette: Cassette,
                 clock: Callable[[], float] = time.time,
                 sink_path: str | Path | None = None):
        self.inner = inner
        self.cassette = cassette
        self._clock = clock
        self._sink_path = Path(sink_path) if sink_path else None
        self._lock = threading.Lock()

    def complete(self, prompt: Prompt) -> str:
        response = self.inner.complete(prompt)
        exchange = ProviderExchange(
            key=prompt_digest(prompt.rendered_text),
            prompt=prompt,
            response=response,
            timestamp=self._clock(),
        )
        with self._lock:
            self.cassette.append(exchange)
            if self._sink_path is not None:
                with self._sink_path.open("a", encoding="utf-8") as sink:
                    sink.write(json.dumps(exchange.to_record(), ensure_ascii=False) + "\n")
        return response


def record_wrapper(inner: CompletionProvider, cassette: Cassette,
                   **kwargs) -> RecordingProvider:
    return RecordingProvider(inner, cassette, **kwargs)
