"""Shared client machinery: request/response types, retry policy, request log.

The request log is append-only and serialized internally, so a single
client instance can be shared across threads. An in-flight semaphore
bounds outbound concurrency per backend.
"""

from __future__ import annotations

import logging
import random
import threading
import time
from dataclasses import dataclass
from enum import Enum
from typing import Callable

from ..errors import ContractError, EmptyOutputError, TransportError
from ..hashing import text_hash

logger = logging.getLogger(__name__)


class EntityCategory(str, Enum):
    PERSON = "Person"
    DATE = "Date"
    NUMERIC = "Numeric"
    ORGANIZATION = "Organization"
    LOCATION = "Location"
    OTHER = "Other"


class NliLabel(str, Enum):
    ENTAILMENT = "Entailment"
    CONTRADICTION = "Contradiction"
    NEUTRAL = "Neutral"


@dataclass(frozen=True)
class ChatRequest:
    user_message: str
    system_message: str | None = None
    temperature: float = 0.0
    max_output_tokens: int = 512
    model_name: str = "default"

    def __post_init__(self) -> None:
        if not self.user_message:
            raise ContractError("user_message must be non-empty")
        if not 0.0 <= self.temperature <= 2.0:
            raise ContractError(f"temperature {self.temperature} outside [0, 2]")
        if self.max_output_tokens < 1:
            raise ContractError("max_output_tokens must be positive")

    @property
    def prompt_hash(self) -> str:
        return text_hash(self.user_message)


@dataclass(frozen=True)
class ChatResponse:
    text: str
    token_usage: tuple[int, int] | None = None
    latency: float = 0.0


@dataclass(frozen=True)
class EntitySpan:
    surface: str
    category: EntityCategory
    char_start: int
    char_end: int

    def __post_init__(self) -> None:
        if not self.char_start < self.char_end:
            raise ContractError("char_start must be < char_end")


@dataclass(frozen=True)
class NliVerdict:
    label: NliLabel
    scores: tuple[float, float, float]  # (entailment, contradiction, neutral)

    _LABEL_ORDER = (NliLabel.ENTAILMENT, NliLabel.CONTRADICTION, NliLabel.NEUTRAL)

    def __post_init__(self) -> None:
        if abs(sum(self.scores) - 1.0) > 1e-6:
            raise ContractError("NLI scores must sum to 1")
        argmax = self.scores.index(max(self.scores))
        if self._LABEL_ORDER[argmax] is not self.label:
            raise ContractError("NLI label must match the argmax score")

    @classmethod
    def from_label(cls, label: NliLabel, confidence: float = 0.98) -> "NliVerdict":
        rest = (1.0 - confidence) / 2.0
        scores = [rest, rest, rest]
        scores[cls._LABEL_ORDER.index(label)] = confidence
        return cls(label=label, scores=tuple(scores))


@dataclass(frozen=True)
class RetryPolicy:
    """Bounded retry with exponential backoff and jitter.

    Retries fire only for transient failures (transport errors, HTTP 429
    and 5xx). ``max_attempts`` counts the first try.
    """

    max_attempts: int = 3
    base_delay: float = 1.0
    jitter: bool = True

    def __post_init__(self) -> None:
        if self.max_attempts < 1:
            raise ContractError("max_attempts must be >= 1")

    def delay(self, attempt: int, rng: random.Random) -> float:
        backoff = self.base_delay * (2 ** (attempt - 1))
        if self.jitter:
            backoff *= 0.5 + rng.random()
        return backoff


@dataclass(frozen=True)
class RequestLogEntry:
    prompt_hash: str
    retries: int
    outcome: str  # "ok" or "error"
    t_start: float
    t_end: float


class RequestLog:
    """Append-only log of every chat call, one entry per logical request."""

    def __init__(self) -> None:
        self._entries: list[RequestLogEntry] = []
        self._lock = threading.Lock()

    def append(self, entry: RequestLogEntry) -> None:
        with self._lock:
            self._entries.append(entry)

    def entries(self) -> list[RequestLogEntry]:
        with self._lock:
            return list(self._entries)

    def __len__(self) -> int:
        with self._lock:
            return len(self._entries)

    def clear(self) -> None:
        with self._lock:
            self._entries.clear()

    def max_overlap(self) -> int:
        """Largest number of requests in flight at once, from the intervals."""
        events: list[tuple[float, int]] = []
        for e in self.entries():
            events.append((e.t_start, 1))
            events.append((e.t_end, -1))
        peak = current = 0
        for _, delta in sorted(events):
            current += delta
            peak = max(peak, current)
        return peak


class TransientBackendError(TransportError):
    """Internal marker for failures the retry policy may absorb."""


class BaseChatClient:
    """Common chat behavior: validation, retries, logging, concurrency cap.

    Subclasses implement ``_send`` and raise TransientBackendError for
    retryable failures; anything else propagates immediately.
    """

    def __init__(
        self,
        retry: RetryPolicy | None = None,
        max_in_flight: int = 8,
        sleep: Callable[[float], None] = time.sleep,
    ) -> None:
        self.retry = retry or RetryPolicy()
        self.request_log = RequestLog()
        self._limiter = threading.Semaphore(max_in_flight)
        self._sleep = sleep
        self._backoff_rng = random.Random(0)

    def chat(self, request: ChatRequest) -> ChatResponse:
        retries = 0
        with self._limiter:
            # Log intervals cover outbound time only, not limiter queueing,
            # so max_overlap() observes the concurrency bound.
            t_start = time.monotonic()
            try:
                for attempt in range(1, self.retry.max_attempts + 1):
                    try:
                        text, usage = self._send(request)
                        break
                    except TransientBackendError as exc:
                        if attempt == self.retry.max_attempts:
                            raise TransportError(
                                f"backend failed after {attempt} attempts: {exc}"
                            ) from exc
                        retries += 1
                        delay = self.retry.delay(attempt, self._backoff_rng)
                        logger.warning(
                            "transient backend failure (%s); retry %d in %.2fs",
                            exc,
                            retries,
                            delay,
                        )
                        self._sleep(delay)
            except Exception:
                self.request_log.append(
                    RequestLogEntry(
                        prompt_hash=request.prompt_hash,
                        retries=retries,
                        outcome="error",
                        t_start=t_start,
                        t_end=time.monotonic(),
                    )
                )
                raise
            t_end = time.monotonic()
            self.request_log.append(
                RequestLogEntry(
                    prompt_hash=request.prompt_hash,
                    retries=retries,
                    outcome="ok",
                    t_start=t_start,
                    t_end=t_end,
                )
            )
        if not text:
            raise EmptyOutputError(f"empty completion for prompt {request.prompt_hash[:12]}")
        return ChatResponse(text=text, token_usage=usage, latency=t_end - t_start)

    def _send(self, request: ChatRequest) -> tuple[str, tuple[int, int] | None]:
        raise NotImplementedError
