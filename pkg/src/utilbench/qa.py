"""Downstream answer generation over a chosen evidence source, and scoring
of the generated answers against the golds.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from enum import Enum
from typing import Any, Sequence

from .clients.base import ChatRequest
from .corpus import CandidateSet, DatasetKind, Passage, PassageOrigin, Question
from .errors import ContractError
from .hashing import text_hash
from .judge import JudgeConfig, JudgmentStore, Ranking, SelectedSet
from .metrics import AnswerScore, answer_scores, as_percent, mean_of
from .prompts import JudgeForm, render_qa_prompt

ANSWER_TEMPERATURE = 0.0

FQA_METRICS = ("EM", "F1")
NFQA_METRICS = ("ROUGE-L", "BLEU-1", "BLEU-2", "BLEU-3", "BLEU-4")

_FORM_LABELS = {
    JudgeForm.POINTWISE: "Pointwise",
    JudgeForm.PAIRWISE: "Pairwise",
    JudgeForm.LISTWISE_SET: "Listwise-set",
    JudgeForm.LISTWISE_RANK: "Listwise-rank",
}


class EvidenceKind(str, Enum):
    NONE = "None"
    DENSE = "Dense"
    GROUND_TRUTH = "GroundTruth"
    RELEVANCE_JUDGED = "RelevanceJudged"
    UTILITY_JUDGED = "UtilityJudged"


_JUDGED_KINDS = (EvidenceKind.RELEVANCE_JUDGED, EvidenceKind.UTILITY_JUDGED)


@dataclass(frozen=True)
class EvidenceSource:
    kind: EvidenceKind
    judgment_config: JudgeConfig | None = None

    def __post_init__(self) -> None:
        if self.kind in _JUDGED_KINDS and self.judgment_config is None:
            raise ContractError(f"evidence source {self.kind.value} needs a judgment config")

    def label(self) -> tuple[str, str]:
        """(section, row) labels for the report tables."""
        if self.kind is EvidenceKind.NONE:
            return "", "None"
        if self.kind is EvidenceKind.DENSE:
            return "", "Dense"
        if self.kind is EvidenceKind.GROUND_TRUTH:
            return "", "Ground-truth"
        section = (
            "Relevance judgments"
            if self.kind is EvidenceKind.RELEVANCE_JUDGED
            else "Utility judgments"
        )
        config = self.judgment_config
        assert config is not None
        if config.k_samples > 1:
            return section, f"{config.k_samples}-sampling"
        return section, _FORM_LABELS[config.form]

    def slug(self) -> str:
        section, row = self.label()
        slug = row.lower().replace(" ", "-")
        if section:
            slug = f"{section.split()[0].lower()}-{slug}"
        return slug

    def to_dict(self) -> dict[str, Any]:
        return {
            "kind": self.kind.value,
            "judgment_config": self.judgment_config.to_dict() if self.judgment_config else None,
        }

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "EvidenceSource":
        config = d.get("judgment_config")
        return cls(
            kind=EvidenceKind(d["kind"]),
            judgment_config=JudgeConfig.from_dict(config) if config else None,
        )


@dataclass(frozen=True)
class AnswerRecord:
    question_id: str
    source: EvidenceSource
    evidence_ids: tuple[str, ...]
    prompt_hash: str
    answer_text: str
    scores: AnswerScore | None = None

    def __post_init__(self) -> None:
        if self.source.kind is EvidenceKind.NONE and self.evidence_ids:
            raise ContractError("a None evidence source cannot carry evidence ids")

    def to_dict(self) -> dict[str, Any]:
        return {
            "question_id": self.question_id,
            "source": self.source.to_dict(),
            "evidence_ids": list(self.evidence_ids),
            "prompt_hash": self.prompt_hash,
            "answer_text": self.answer_text,
            "scores": self.scores.to_dict() if self.scores else None,
        }

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "AnswerRecord":
        scores = d.get("scores")
        return cls(
            question_id=d["question_id"],
            source=EvidenceSource.from_dict(d["source"]),
            evidence_ids=tuple(d["evidence_ids"]),
            prompt_hash=d["prompt_hash"],
            answer_text=d["answer_text"],
            scores=AnswerScore.from_dict(scores) if scores else None,
        )


def select_evidence(
    source: EvidenceSource,
    candidates: CandidateSet,
    judgments: JudgmentStore | None = None,
    gold_passages: Sequence[Passage] | None = None,
) -> list[Passage]:
    """Resolve an evidence source to concrete passages for one question.

    Set-form judgments return their selection in original candidate
    order. Rank-form judgments return the top s of the ranking, where s is
    the set size the paired set-form run produced for the same question,
    so both forms feed answer generation equally many passages.
    """
    if source.kind is EvidenceKind.NONE:
        return []
    if source.kind is EvidenceKind.DENSE:
        return list(candidates.passages)
    if source.kind is EvidenceKind.GROUND_TRUTH:
        if gold_passages is not None:
            return list(gold_passages)
        return [p for p in candidates.passages if p.origin is PassageOrigin.GROUND_TRUTH]
    if judgments is None:
        raise ContractError("judged evidence sources need a judgment store")
    config = source.judgment_config
    assert config is not None
    record = judgments.get(candidates.question_id, config)
    if isinstance(record.result, SelectedSet):
        return [candidates.passages[i] for i in sorted(record.result.indices)]
    ranking: Ranking = record.result
    paired = judgments.paired_set_record(candidates.question_id, config)
    set_size = len(paired.result.indices)  # type: ignore[union-attr]
    return [candidates.passages[i] for i in ranking.order[:set_size]]


def generate_answer(
    question: Question,
    evidence: Sequence[Passage],
    client,
    source: EvidenceSource | None = None,
) -> AnswerRecord:
    """One deterministic chat call over the evidence; the completion text
    is stored verbatim.
    """
    prompt = render_qa_prompt(question.dataset_kind, question, list(evidence))
    response = client.chat(ChatRequest(user_message=prompt, temperature=ANSWER_TEMPERATURE))
    return AnswerRecord(
        question_id=question.id,
        source=source if source is not None else EvidenceSource(EvidenceKind.DENSE),
        evidence_ids=tuple(p.id for p in evidence),
        prompt_hash=text_hash(prompt),
        answer_text=response.text,
        scores=None,
    )


def score_answers(
    records: Sequence[AnswerRecord], questions: Sequence[Question]
) -> list[AnswerRecord]:
    """Attach AnswerScores to records that lack them."""
    by_id = {q.id: q for q in questions}
    scored = []
    for record in records:
        if record.question_id not in by_id:
            raise ContractError(f"no question {record.question_id!r} for answer record")
        if record.scores is None:
            question = by_id[record.question_id]
            record = replace(
                record, scores=answer_scores(record.answer_text, list(question.gold_answers))
            )
        scored.append(record)
    return scored


@dataclass(frozen=True)
class EvalReport:
    """Per-question metric values plus per-kind aggregates (% to 2 dp)."""

    per_question: dict[str, dict[str, float]]
    sections: dict[str, dict[str, Any]]

    def section(self, kind: DatasetKind) -> dict[str, Any]:
        if kind.value not in self.sections:
            raise ContractError(f"report has no {kind.value} section")
        return self.sections[kind.value]

    def to_dict(self) -> dict[str, Any]:
        return {"per_question": self.per_question, "sections": self.sections}


def _metrics_for(kind: DatasetKind, scores: AnswerScore) -> dict[str, float]:
    if kind is DatasetKind.FQA:
        return {"EM": float(scores.em), "F1": scores.token_f1}
    return {
        "ROUGE-L": scores.rouge_l,
        "BLEU-1": scores.bleu[1],
        "BLEU-2": scores.bleu[2],
        "BLEU-3": scores.bleu[3],
        "BLEU-4": scores.bleu[4],
    }


def evaluate_answers(
    records: Sequence[AnswerRecord], questions: Sequence[Question]
) -> EvalReport:
    """Score answers and aggregate them per dataset kind.

    FQA questions report EM and token F1, NFQA questions ROUGE-L and
    BLEU-1..4; kinds never average together. Aggregates are arithmetic
    means scaled to percentages.
    """
    by_id = {q.id: q for q in questions}
    per_question: dict[str, dict[str, float]] = {}
    buckets: dict[str, list[dict[str, float]]] = {}
    for record in records:
        if record.question_id not in by_id:
            raise ContractError(f"no question {record.question_id!r} for answer record")
        question = by_id[record.question_id]
        scores = record.scores or answer_scores(record.answer_text, list(question.gold_answers))
        values = _metrics_for(question.dataset_kind, scores)
        per_question[record.question_id] = values
        buckets.setdefault(question.dataset_kind.value, []).append(values)
    sections: dict[str, dict[str, Any]] = {}
    for kind_value, rows in buckets.items():
        metric_names = FQA_METRICS if kind_value == DatasetKind.FQA.value else NFQA_METRICS
        sections[kind_value] = {
            "count": len(rows),
            "metrics": {
                name: as_percent(mean_of(r[name] for r in rows)) for name in metric_names
            },
        }
    return EvalReport(per_question=per_question, sections=sections)
