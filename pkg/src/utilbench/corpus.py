"""Data model and ingestion: questions, passages, retrieval runs.

Also owns the text normalization and answer-containment predicates that
every downstream stage shares. All types are immutable after construction
and all functions are pure, so everything here is safe under arbitrary
threading.
"""

from __future__ import annotations

import json
import re
import string
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Iterable, Iterator, NamedTuple

from .errors import ContractError, RecordError

MAX_RUN_DEPTH = 100


class DatasetKind(str, Enum):
    FQA = "FQA"
    NFQA = "NFQA"


class PassageOrigin(str, Enum):
    GROUND_TRUTH = "GroundTruth"
    COUNTERFACTUAL = "Counterfactual"
    HRNP = "HRNP"
    WRNP = "WRNP"
    RETRIEVED = "Retrieved"


@dataclass(frozen=True)
class Question:
    """A query with its gold answers and gold evidence passage ids.

    ``dataset_kind`` FQA means the gold answers are short spans; NFQA means
    full natural-language answers. That distinction is a documented
    convention, not a structural check.
    """

    id: str
    text: str
    gold_answers: tuple[str, ...]
    ground_truth_evidence_ids: tuple[str, ...]
    dataset_kind: DatasetKind

    def __post_init__(self) -> None:
        if not self.id:
            raise ContractError("question id must be non-empty")
        if not self.gold_answers:
            raise ContractError(f"question {self.id}: gold_answers must be non-empty")


@dataclass(frozen=True)
class Passage:
    """A text unit with an origin label and provenance record.

    ``provenance`` keys depend on the origin: counterfactuals record at
    least the counter-answer used; retrieved/noisy passages record their
    source rank; ground truth carries an empty record.
    """

    id: str
    text: str
    origin: PassageOrigin
    provenance: dict[str, Any] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if not self.text:
            raise ContractError(f"passage {self.id}: text must be non-empty")
        if self.origin is PassageOrigin.COUNTERFACTUAL and "counter_answer" not in self.provenance:
            raise ContractError(
                f"passage {self.id}: counterfactual provenance must record counter_answer"
            )

    def to_dict(self) -> dict[str, Any]:
        return {
            "id": self.id,
            "text": self.text,
            "origin": self.origin.value,
            "provenance": self.provenance,
        }

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "Passage":
        return cls(
            id=d["id"],
            text=d["text"],
            origin=PassageOrigin(d["origin"]),
            provenance=dict(d.get("provenance", {})),
        )


class RunEntry(NamedTuple):
    passage_id: str
    rank: int
    score: float


@dataclass(frozen=True)
class RetrievalRun:
    """Per-question ranked retrieval results, ranks 1..depth with no gaps."""

    results: dict[str, tuple[RunEntry, ...]]

    def question_ids(self) -> list[str]:
        return list(self.results)

    def entries(self, question_id: str) -> tuple[RunEntry, ...]:
        return self.results.get(question_id, ())

    def depth(self, question_id: str) -> int:
        return len(self.entries(question_id))

    def to_trec_lines(self, tag: str = "utilbench") -> list[str]:
        lines = []
        for qid, entries in self.results.items():
            for entry in entries:
                lines.append(f"{qid} Q0 {entry.passage_id} {entry.rank} {entry.score!r} {tag}")
        return lines


@dataclass(frozen=True)
class CandidateSet:
    """The ordered size-N input list for one question."""

    question_id: str
    passages: tuple[Passage, ...]
    seed: int
    composition: dict[str, int]

    def __post_init__(self) -> None:
        if sum(self.composition.values()) != len(self.passages):
            raise ContractError(
                f"question {self.question_id}: composition does not sum to set size"
            )

    @property
    def size(self) -> int:
        return len(self.passages)

    def indices_with_origin(self, origin: PassageOrigin) -> list[int]:
        return [i for i, p in enumerate(self.passages) if p.origin is origin]

    def to_dict(self) -> dict[str, Any]:
        return {
            "question_id": self.question_id,
            "seed": self.seed,
            "composition": self.composition,
            "passages": [p.to_dict() for p in self.passages],
        }

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "CandidateSet":
        return cls(
            question_id=d["question_id"],
            passages=tuple(Passage.from_dict(p) for p in d["passages"]),
            seed=d["seed"],
            composition=dict(d["composition"]),
        )


class PassageStore:
    """Lookup table from passage id to raw text, plus optional labels.

    An ``is_selected`` label (0/1) may accompany a passage; noisy-passage
    selection consults it when present.
    """

    def __init__(self) -> None:
        self._texts: dict[str, str] = {}
        self._labels: dict[str, int] = {}

    def __len__(self) -> int:
        return len(self._texts)

    def __contains__(self, passage_id: str) -> bool:
        return passage_id in self._texts

    def add(self, passage_id: str, text: str, is_selected: int | None = None) -> None:
        if passage_id in self._texts:
            raise ContractError(f"duplicate passage id {passage_id!r}")
        if not text:
            raise ContractError(f"passage {passage_id!r}: text must be non-empty")
        self._texts[passage_id] = text
        if is_selected is not None:
            self._labels[passage_id] = int(is_selected)

    def text(self, passage_id: str) -> str:
        if passage_id not in self._texts:
            raise KeyError(f"unknown passage id {passage_id!r}")
        return self._texts[passage_id]

    def label(self, passage_id: str) -> int | None:
        return self._labels.get(passage_id)

    def passage(
        self,
        passage_id: str,
        origin: PassageOrigin,
        provenance: dict[str, Any] | None = None,
    ) -> Passage:
        return Passage(
            id=passage_id,
            text=self.text(passage_id),
            origin=origin,
            provenance=provenance or {},
        )


# --- ingestion ---------------------------------------------------------------

_REQUIRED_QUESTION_FIELDS = ("id", "question", "answers", "ground_truth_ids")


def iter_jsonl(path: str) -> Iterator[tuple[int, dict[str, Any]]]:
    """Yield (line_no, record) for each non-blank line of a JSONL file."""
    with open(path, "r", encoding="utf-8") as f:
        for line_no, line in enumerate(f, start=1):
            if not line.strip():
                continue
            try:
                record = json.loads(line)
            except json.JSONDecodeError as exc:
                raise RecordError(line_no, f"invalid JSON ({exc.msg})") from exc
            if not isinstance(record, dict):
                raise RecordError(line_no, "record is not an object")
            yield line_no, record


def load_questions(path: str, kind: DatasetKind) -> list[Question]:
    """Load a line-delimited questions file.

    Each line must carry {id, question, answers, ground_truth_ids}.
    An empty file yields an empty list; a malformed line raises a
    RecordError naming the line and the missing field.
    """
    questions: list[Question] = []
    seen_ids: set[str] = set()
    for line_no, record in iter_jsonl(path):
        for fld in _REQUIRED_QUESTION_FIELDS:
            if fld not in record:
                raise RecordError(line_no, f"missing field {fld!r}")
        if not isinstance(record["answers"], list) or not record["answers"]:
            raise RecordError(line_no, "field 'answers' must be a non-empty list")
        if not isinstance(record["ground_truth_ids"], list):
            raise RecordError(line_no, "field 'ground_truth_ids' must be a list")
        qid = str(record["id"])
        if qid in seen_ids:
            raise RecordError(line_no, f"duplicate question id {qid!r}")
        seen_ids.add(qid)
        questions.append(
            Question(
                id=qid,
                text=str(record["question"]),
                gold_answers=tuple(str(a) for a in record["answers"]),
                ground_truth_evidence_ids=tuple(str(g) for g in record["ground_truth_ids"]),
                dataset_kind=kind,
            )
        )
    return questions


def load_corpus(path: str) -> PassageStore:
    """Load a line-delimited passage corpus of {id, text} records.

    An optional ``is_selected`` field per record is kept as a label.
    """
    store = PassageStore()
    for line_no, record in iter_jsonl(path):
        for fld in ("id", "text"):
            if fld not in record:
                raise RecordError(line_no, f"missing field {fld!r}")
        try:
            store.add(str(record["id"]), str(record["text"]), record.get("is_selected"))
        except ContractError as exc:
            raise RecordError(line_no, str(exc)) from exc
    return store


def load_run(path: str) -> RetrievalRun:
    """Parse a six-field TREC-layout run file.

    Per question, ranks must start at 1 and increase without gaps; depth is
    capped at 100. Violations raise a RecordError naming the line.
    """
    results: dict[str, list[RunEntry]] = {}
    seen: set[tuple[str, str]] = set()
    with open(path, "r", encoding="utf-8") as f:
        for line_no, line in enumerate(f, start=1):
            if not line.strip():
                continue
            fields = line.split()
            if len(fields) != 6:
                raise RecordError(line_no, f"expected 6 fields, got {len(fields)}")
            qid, _, pid, rank_s, score_s, _ = fields
            try:
                rank = int(rank_s)
            except ValueError:
                raise RecordError(line_no, f"non-integer rank {rank_s!r}") from None
            try:
                score = float(score_s)
            except ValueError:
                raise RecordError(line_no, f"non-numeric score {score_s!r}") from None
            if (qid, pid) in seen:
                raise RecordError(line_no, f"duplicate passage {pid!r} for question {qid!r}")
            seen.add((qid, pid))
            entries = results.setdefault(qid, [])
            expected = len(entries) + 1
            if rank != expected:
                raise RecordError(
                    line_no, f"rank gap at line {line_no}: expected rank {expected}, got {rank}"
                )
            if rank > MAX_RUN_DEPTH:
                raise RecordError(line_no, f"run depth exceeds {MAX_RUN_DEPTH}")
            entries.append(RunEntry(pid, rank, score))
    return RetrievalRun(results={qid: tuple(entries) for qid, entries in results.items()})


# --- normalization and containment -------------------------------------------

_PUNCT_TABLE = str.maketrans("", "", string.punctuation)
_ARTICLE_RE = re.compile(r"\b(a|an|the)\b")


def normalize_text(s: str) -> str:
    """Normalize for answer matching: lowercase, strip ASCII punctuation,
    drop whole-token articles, collapse whitespace.

    Punctuation is removed before articles so the result is idempotent.
    Operates on Unicode scalar values; only ASCII punctuation is stripped.
    """
    s = s.lower()
    s = s.translate(_PUNCT_TABLE)
    s = _ARTICLE_RE.sub(" ", s)
    return " ".join(s.split())


def contains_answer(passage: Passage | str, answers: Iterable[str]) -> bool:
    """True iff any normalized answer occurs as a substring of the
    normalized passage text.
    """
    text = passage.text if isinstance(passage, Passage) else passage
    answers = list(answers)
    if not answers:
        raise ContractError("answers must be non-empty")
    norm_text = normalize_text(text)
    return any(normalize_text(a) in norm_text for a in answers)
