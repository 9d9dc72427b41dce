"""Clients for the three external model services: chat LLM, NER, NLI.

Each service has an HTTP implementation and deterministic mocks; retry,
rate-limit and request-log policy lives in the shared base.
"""

from .base import (
    BaseChatClient,
    ChatRequest,
    ChatResponse,
    EntityCategory,
    EntitySpan,
    NliLabel,
    NliVerdict,
    RequestLog,
    RequestLogEntry,
    RetryPolicy,
)
from .http import (
    DEFAULT_LABEL_MAP,
    HttpChatClient,
    HttpNerClient,
    HttpNliClient,
    span_to_wire,
    verdict_to_wire,
    wire_to_spans,
    wire_to_verdict,
)
from .mocks import (
    GazetteerNerClient,
    NoisyOracleChatClient,
    OracleChatClient,
    OracleKnowledge,
    ScriptedChatClient,
    TableNliClient,
)

__all__ = [
    "BaseChatClient",
    "ChatRequest",
    "ChatResponse",
    "EntityCategory",
    "EntitySpan",
    "NliLabel",
    "NliVerdict",
    "RequestLog",
    "RequestLogEntry",
    "RetryPolicy",
    "DEFAULT_LABEL_MAP",
    "HttpChatClient",
    "HttpNerClient",
    "HttpNliClient",
    "span_to_wire",
    "verdict_to_wire",
    "wire_to_spans",
    "wire_to_verdict",
    "GazetteerNerClient",
    "NoisyOracleChatClient",
    "OracleChatClient",
    "OracleKnowledge",
    "ScriptedChatClient",
    "TableNliClient",
]
