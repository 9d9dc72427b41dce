"""Exception types shared across the package."""

from __future__ import annotations


class UtilbenchError(Exception):
    """Base class for all package errors."""


class RecordError(UtilbenchError):
    """A line-delimited input record is malformed. Carries the line number."""

    def __init__(self, line_no: int, message: str):
        super().__init__(f"line {line_no}: {message}")
        self.line_no = line_no


class ContractError(UtilbenchError, ValueError):
    """An operation was called outside its contract."""


class TransportError(UtilbenchError):
    """A backend could not be reached or kept failing after all retries."""


class ConfigurationError(UtilbenchError):
    """A backend rejected the request in a way retrying cannot fix (e.g. HTTP 4xx)."""


class EmptyOutputError(UtilbenchError):
    """The chat backend returned an empty completion."""


class ScriptError(UtilbenchError):
    """A strict mock received an input it has no scripted response for."""


class OutputParseError(UtilbenchError):
    """No verdict could be extracted from a model output."""


class ExhaustionError(UtilbenchError):
    """No eligible counter-entity remains for a substitution."""


class ShortfallError(UtilbenchError):
    """A retrieval run holds fewer entries than a construction step needs."""


class AssemblyError(UtilbenchError):
    """Candidate-set assembly could not fill all slots for a question."""

    def __init__(self, question_id: str, message: str):
        super().__init__(f"question {question_id}: {message}")
        self.question_id = question_id


class MissingJudgmentError(UtilbenchError, LookupError):
    """An evidence source references a judgment that was never produced."""
