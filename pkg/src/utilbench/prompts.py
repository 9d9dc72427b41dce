"""Prompt templates for judging and answer generation, plus a structural
parser used by the deterministic mocks.

Rendering is byte-deterministic: equal inputs always give byte-equal
prompts, and the snapshot tests pin every template variant. Passages are
labeled "Passage-1", "Passage-2", ... in the order given; all stored
records use 0-based indices, so the 1-based labels exist only inside
prompt text and model output.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from enum import Enum

from .corpus import DatasetKind, Passage, Question
from .errors import ContractError


class JudgeForm(str, Enum):
    POINTWISE = "pointwise"
    PAIRWISE = "pairwise"
    LISTWISE_SET = "listwise_set"
    LISTWISE_RANK = "listwise_rank"


class JudgmentType(str, Enum):
    UTILITY = "utility"
    RELEVANCE = "relevance"


class Requirement(str, Enum):
    NONE = "none"
    COT = "cot"
    REASONING = "reasoning"
    ANSWER = "answer"


class PromptOrder(str, Enum):
    QUESTION_FIRST = "question_first"
    PASSAGES_FIRST = "passages_first"


_HEADERS: dict[tuple[JudgeForm, JudgmentType], str] = {
    (JudgeForm.POINTWISE, JudgmentType.UTILITY): (
        "Given a question and a passage, judge whether the passage has utility in "
        "answering the question."
    ),
    (JudgeForm.PAIRWISE, JudgmentType.UTILITY): (
        "Given a question and two passages, judge which passage has more utility in "
        "answering the question."
    ),
    (JudgeForm.LISTWISE_SET, JudgmentType.UTILITY): (
        "Given a question and a list of candidate passages, select the passages that "
        "have utility in answering the question."
    ),
    (JudgeForm.LISTWISE_RANK, JudgmentType.UTILITY): (
        "Given a question and a list of candidate passages, rank the passages "
        "according to their utility in answering the question."
    ),
    (JudgeForm.LISTWISE_SET, JudgmentType.RELEVANCE): (
        "Given a question and a list of candidate passages, select the passages that "
        "are relevant to the question."
    ),
    (JudgeForm.LISTWISE_RANK, JudgmentType.RELEVANCE): (
        "Given a question and a list of candidate passages, rank the passages "
        "according to their relevance to the question."
    ),
}

_REQUIREMENT_CLAUSES: dict[Requirement, str | None] = {
    Requirement.NONE: None,
    Requirement.COT: "Let's think step by step before giving the judgment.",
    Requirement.REASONING: "Please provide a brief reasoning before giving the judgment.",
    Requirement.ANSWER: "Please provide the answer to the question before giving the judgment.",
}

_OUTPUT_INSTRUCTIONS: dict[tuple[JudgeForm, JudgmentType], str] = {
    (JudgeForm.POINTWISE, JudgmentType.UTILITY): (
        'Output "Yes" if the passage has utility in answering the question, '
        'otherwise output "No".'
    ),
    (JudgeForm.PAIRWISE, JudgmentType.UTILITY): (
        'Output "Passage-1" or "Passage-2" to indicate which passage has more utility '
        "in answering the question."
    ),
    (JudgeForm.LISTWISE_SET, JudgmentType.UTILITY): (
        'Output the selected passages in the format "My selection: Passage-i, Passage-j". '
        'If no passage qualifies, output "My selection: none".'
    ),
    (JudgeForm.LISTWISE_RANK, JudgmentType.UTILITY): (
        "Output the ranking in descending order of utility in the format "
        '"Passage-i > Passage-j > Passage-k", including every passage.'
    ),
    (JudgeForm.LISTWISE_SET, JudgmentType.RELEVANCE): (
        'Output the selected passages in the format "My selection: Passage-i, Passage-j". '
        'If no passage qualifies, output "My selection: none".'
    ),
    (JudgeForm.LISTWISE_RANK, JudgmentType.RELEVANCE): (
        "Output the ranking in descending order of relevance in the format "
        '"Passage-i > Passage-j > Passage-k", including every passage.'
    ),
}

_QA_HEADERS: dict[DatasetKind, str] = {
    DatasetKind.FQA: (
        "Answer the following question based on the given passages. The answer "
        "should be a short span of one or a few words."
    ),
    DatasetKind.NFQA: (
        "Answer the following question based on the given passages. The answer "
        "should be a complete sentence in natural language."
    ),
}

_QA_HEADERS_NO_EVIDENCE: dict[DatasetKind, str] = {
    DatasetKind.FQA: (
        "Answer the following question. The answer should be a short span of one "
        "or a few words."
    ),
    DatasetKind.NFQA: (
        "Answer the following question. The answer should be a complete sentence "
        "in natural language."
    ),
}

QUESTION_PREFIX = "Question: "
ANSWER_CUE = "Answer:"
REPROMPT_LINE = "Answer with the required format only."

_EXPECTED_COUNTS = {JudgeForm.POINTWISE: 1, JudgeForm.PAIRWISE: 2}


def _passage_block(passages: list[Passage] | tuple[Passage, ...]) -> list[str]:
    return [f"Passage-{i}: {p.text}" for i, p in enumerate(passages, start=1)]


def render_judge_prompt(
    form: JudgeForm,
    judgment: JudgmentType,
    requirement: Requirement,
    order: PromptOrder,
    question: Question,
    passages: list[Passage] | tuple[Passage, ...],
) -> str:
    """Instantiate one judgment prompt.

    Pointwise takes exactly one passage, pairwise exactly two, and the
    listwise forms the whole candidate list.
    """
    if (form, judgment) not in _HEADERS:
        raise ContractError(f"no {judgment.value} template for {form.value}")
    expected = _EXPECTED_COUNTS.get(form)
    if expected is not None and len(passages) != expected:
        raise ContractError(f"{form.value} takes exactly {expected} passage(s), got {len(passages)}")
    if not passages:
        raise ContractError("listwise forms need at least one passage")

    lines = [_HEADERS[(form, judgment)]]
    question_line = f"{QUESTION_PREFIX}{question.text}"
    if order is PromptOrder.QUESTION_FIRST:
        lines.append(question_line)
        lines.extend(_passage_block(passages))
    else:
        lines.extend(_passage_block(passages))
        lines.append(question_line)
    clause = _REQUIREMENT_CLAUSES[requirement]
    if clause is not None:
        lines.append(clause)
    lines.append(_OUTPUT_INSTRUCTIONS[(form, judgment)])
    return "\n".join(lines)


def render_qa_prompt(
    kind: DatasetKind,
    question: Question,
    evidence: list[Passage] | tuple[Passage, ...],
) -> str:
    """Instantiate an answer-generation prompt over the given evidence.

    With no evidence the passage block is omitted entirely.
    """
    if evidence:
        lines = [_QA_HEADERS[kind]]
        lines.extend(_passage_block(evidence))
    else:
        lines = [_QA_HEADERS_NO_EVIDENCE[kind]]
    lines.append(f"{QUESTION_PREFIX}{question.text}")
    lines.append(ANSWER_CUE)
    return "\n".join(lines)


def make_reprompt(prompt: str) -> str:
    """The single automatic follow-up used after an unparseable output."""
    return f"{prompt}\n{REPROMPT_LINE}"


# --- structural inspection (mock support) ------------------------------------


@dataclass(frozen=True)
class PromptShape:
    """What a rendered prompt contains, recovered from its text."""

    kind: str  # "judge" or "qa"
    form: JudgeForm | None
    judgment: JudgmentType | None
    qa_kind: DatasetKind | None
    question_text: str
    passage_texts: tuple[str, ...]


_HEADER_LOOKUP = {text: key for key, text in _HEADERS.items()}
_QA_HEADER_LOOKUP = {text: kind for kind, text in _QA_HEADERS.items()}
_QA_HEADER_LOOKUP.update({text: kind for kind, text in _QA_HEADERS_NO_EVIDENCE.items()})

_FIXED_LINES = (
    set(_OUTPUT_INSTRUCTIONS.values())
    | {clause for clause in _REQUIREMENT_CLAUSES.values() if clause}
    | {ANSWER_CUE, REPROMPT_LINE}
)

_PASSAGE_MARKER = re.compile(r"^Passage-(\d+): ")


def inspect_prompt(prompt: str) -> PromptShape:
    """Parse a rendered prompt back into its parts.

    Exists so the deterministic mocks can behave like perfect judges
    without any metadata outside the prompt text itself. Raises
    ContractError for text that was not produced by the renderers.
    """
    lines = prompt.split("\n")
    header = lines[0]
    form = judgment = qa_kind = None
    if header in _HEADER_LOOKUP:
        kind = "judge"
        form, judgment = _HEADER_LOOKUP[header]
    elif header in _QA_HEADER_LOOKUP:
        kind = "qa"
        qa_kind = _QA_HEADER_LOOKUP[header]
    else:
        raise ContractError(f"unrecognized prompt header: {header!r}")

    question_parts: list[str] | None = None
    passages: list[list[str]] = []
    current: list[str] | None = None
    for line in lines[1:]:
        marker = _PASSAGE_MARKER.match(line)
        if marker:
            current = [line[marker.end() :]]
            passages.append(current)
        elif line.startswith(QUESTION_PREFIX) and question_parts is None:
            question_parts = [line[len(QUESTION_PREFIX) :]]
            current = question_parts
        elif line in _FIXED_LINES:
            current = None
        elif current is not None:
            current.append(line)
    if question_parts is None:
        raise ContractError("prompt has no question line")
    return PromptShape(
        kind=kind,
        form=form,
        judgment=judgment,
        qa_kind=qa_kind,
        question_text="\n".join(question_parts),
        passage_texts=tuple("\n".join(block) for block in passages),
    )
