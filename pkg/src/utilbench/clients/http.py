"""HTTP implementations of the chat, NER, and NLI clients.

The chat wire format follows the common chat-completions JSON shape, so any
compatible endpoint works; the exact field names are pinned in
docs/data-formats.md. The NER/NLI sidecar speaks the JSON contract defined
there as well; ``span_to_wire``/``wire_to_spans`` (and the verdict pair)
are the single source of truth for that shape on the client side.
"""

from __future__ import annotations

import json
import logging
import os
import urllib.error
import urllib.request
from typing import Any

from ..errors import ConfigurationError, ContractError
from .base import (
    BaseChatClient,
    ChatRequest,
    EntityCategory,
    EntitySpan,
    NliLabel,
    NliVerdict,
    RetryPolicy,
    TransientBackendError,
)

logger = logging.getLogger(__name__)

DEFAULT_API_KEY_ENV = "UTILBENCH_API_KEY"

# Sidecar label -> judgment category. Unknown labels map to Other with a
# warning; override via configuration when deploying a different tagger.
DEFAULT_LABEL_MAP: dict[str, EntityCategory] = {
    "PERSON": EntityCategory.PERSON,
    "PER": EntityCategory.PERSON,
    "DATE": EntityCategory.DATE,
    "TIME": EntityCategory.DATE,
    "CARDINAL": EntityCategory.NUMERIC,
    "ORDINAL": EntityCategory.NUMERIC,
    "QUANTITY": EntityCategory.NUMERIC,
    "PERCENT": EntityCategory.NUMERIC,
    "MONEY": EntityCategory.NUMERIC,
    "ORG": EntityCategory.ORGANIZATION,
    "GPE": EntityCategory.LOCATION,
    "LOC": EntityCategory.LOCATION,
    "FAC": EntityCategory.LOCATION,
}


def _post_json(url: str, payload: dict, headers: dict[str, str], timeout: float) -> dict:
    body = json.dumps(payload).encode("utf-8")
    request = urllib.request.Request(
        url, data=body, headers={"Content-Type": "application/json", **headers}
    )
    try:
        with urllib.request.urlopen(request, timeout=timeout) as response:
            return json.loads(response.read().decode("utf-8"))
    except urllib.error.HTTPError as exc:
        if exc.code == 429 or exc.code >= 500:
            raise TransientBackendError(f"HTTP {exc.code} from {url}") from exc
        raise ConfigurationError(f"HTTP {exc.code} from {url}") from exc
    except urllib.error.URLError as exc:
        raise TransientBackendError(f"cannot reach {url}: {exc.reason}") from exc


class HttpChatClient(BaseChatClient):
    """Chat client for a chat-completions-compatible HTTPS endpoint."""

    def __init__(
        self,
        endpoint: str,
        api_key_env: str = DEFAULT_API_KEY_ENV,
        timeout: float = 60.0,
        retry: RetryPolicy | None = None,
        max_in_flight: int = 8,
        **kwargs: Any,
    ) -> None:
        super().__init__(retry=retry, max_in_flight=max_in_flight, **kwargs)
        self.endpoint = endpoint
        self.timeout = timeout
        self._api_key = os.environ.get(api_key_env, "")

    def _send(self, request: ChatRequest) -> tuple[str, tuple[int, int] | None]:
        messages = []
        if request.system_message is not None:
            messages.append({"role": "system", "content": request.system_message})
        messages.append({"role": "user", "content": request.user_message})
        payload = {
            "model": request.model_name,
            "messages": messages,
            "temperature": request.temperature,
            "max_tokens": request.max_output_tokens,
        }
        headers = {}
        if self._api_key:
            headers["Authorization"] = f"Bearer {self._api_key}"
        data = _post_json(self.endpoint, payload, headers, self.timeout)
        try:
            text = data["choices"][0]["message"]["content"]
        except (KeyError, IndexError, TypeError) as exc:
            raise ConfigurationError(f"malformed completion payload: {data!r}") from exc
        usage = None
        if isinstance(data.get("usage"), dict):
            u = data["usage"]
            if "prompt_tokens" in u and "completion_tokens" in u:
                usage = (int(u["prompt_tokens"]), int(u["completion_tokens"]))
        return text, usage


# --- sidecar wire helpers ----------------------------------------------------


def wire_to_spans(
    payload: dict,
    text: str,
    label_map: dict[str, EntityCategory] | None = None,
) -> list[EntitySpan]:
    """Decode a /ner response body into spans with mapped categories.

    Spans must be non-overlapping and each surface must equal its source
    slice; violations mean the sidecar broke the contract.
    """
    label_map = DEFAULT_LABEL_MAP if label_map is None else label_map
    spans: list[EntitySpan] = []
    for item in payload.get("entities", []):
        label = str(item["label"])
        category = label_map.get(label)
        if category is None:
            logger.warning("unknown entity label %r mapped to Other", label)
            category = EntityCategory.OTHER
        span = EntitySpan(
            surface=str(item["surface"]),
            category=category,
            char_start=int(item["start"]),
            char_end=int(item["end"]),
        )
        if text[span.char_start : span.char_end] != span.surface:
            raise ContractError(f"span {span.surface!r} does not match its source slice")
        spans.append(span)
    spans.sort(key=lambda s: s.char_start)
    for left, right in zip(spans, spans[1:]):
        if left.char_end > right.char_start:
            raise ContractError("entity spans overlap")
    return spans


def span_to_wire(surface: str, label: str, start: int, end: int) -> dict:
    return {"surface": surface, "label": label, "start": start, "end": end}


_WIRE_LABELS = {
    "entailment": NliLabel.ENTAILMENT,
    "contradiction": NliLabel.CONTRADICTION,
    "neutral": NliLabel.NEUTRAL,
}


def wire_to_verdict(payload: dict) -> NliVerdict:
    label = _WIRE_LABELS.get(str(payload["label"]).lower())
    if label is None:
        raise ContractError(f"unknown NLI label {payload.get('label')!r}")
    scores = payload["scores"]
    if len(scores) != 3:
        raise ContractError("NLI scores must be a triple [e, c, n]")
    return NliVerdict(label=label, scores=tuple(float(s) for s in scores))


def verdict_to_wire(verdict: NliVerdict) -> dict:
    return {"label": verdict.label.value.lower(), "scores": list(verdict.scores)}


class HttpNerClient:
    """Named-entity client backed by the sidecar's POST /ner endpoint."""

    def __init__(
        self,
        base_url: str,
        label_map: dict[str, EntityCategory] | None = None,
        timeout: float = 30.0,
    ) -> None:
        self.base_url = base_url.rstrip("/")
        self.label_map = DEFAULT_LABEL_MAP if label_map is None else label_map
        self.timeout = timeout

    def ner(self, text: str) -> list[EntitySpan]:
        if not text:
            raise ContractError("text must be non-empty")
        payload = _post_json(f"{self.base_url}/ner", {"text": text}, {}, self.timeout)
        return wire_to_spans(payload, text, self.label_map)


class HttpNliClient:
    """NLI client backed by the sidecar's POST /nli endpoint."""

    def __init__(self, base_url: str, timeout: float = 30.0) -> None:
        self.base_url = base_url.rstrip("/")
        self.timeout = timeout

    def nli(self, premise: str, hypothesis: str) -> NliVerdict:
        if not premise or not hypothesis:
            raise ContractError("premise and hypothesis must be non-empty")
        payload = _post_json(
            f"{self.base_url}/nli",
            {"premise": premise, "hypothesis": hypothesis},
            {},
            self.timeout,
        )
        return wire_to_verdict(payload)
