"""Judging operations: prompt rendering, output parsing, the four input
forms, pairwise tournament aggregation, and k-sampling voting.

Index convention: prompts label passages "Passage-1"... in presentation
order, while every stored record uses 0-based indices into the original
candidate order. Sub-calls of one question may run in parallel; results
are always aggregated by index, never by completion order.
"""

from __future__ import annotations

import logging
import re
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from random import Random
from typing import Any, Callable, Iterable

from .clients.base import ChatRequest
from .corpus import CandidateSet, Question
from .errors import ContractError, MissingJudgmentError, OutputParseError
from .hashing import derive_seed, text_hash
from .prompts import (
    JudgeForm,
    JudgmentType,
    PromptOrder,
    Requirement,
    make_reprompt,
    render_judge_prompt,
)

logger = logging.getLogger(__name__)

JUDGE_TEMPERATURE = 0.0


@dataclass(frozen=True)
class JudgeConfig:
    form: JudgeForm
    judgment: JudgmentType = JudgmentType.UTILITY
    requirement: Requirement = Requirement.NONE
    order: PromptOrder = PromptOrder.QUESTION_FIRST
    k_samples: int = 1
    seed: int = 0

    def __post_init__(self) -> None:
        if self.judgment is JudgmentType.RELEVANCE and self.form not in (
            JudgeForm.LISTWISE_SET,
            JudgeForm.LISTWISE_RANK,
        ):
            raise ContractError("relevance judgments only take the listwise forms")
        if self.k_samples < 1:
            raise ContractError("k_samples must be >= 1")
        if self.k_samples > 1 and self.form is not JudgeForm.LISTWISE_SET:
            raise ContractError("k-sampling applies to the listwise-set form only")
        if self.form is JudgeForm.PAIRWISE and self.requirement is Requirement.ANSWER:
            logger.warning("pairwise judging with the answer requirement is a flagged combination")

    def slug(self) -> str:
        return (
            f"{self.judgment.value}-{self.form.value}-{self.requirement.value}"
            f"-{self.order.value}-k{self.k_samples}"
        )

    def to_dict(self) -> dict[str, Any]:
        return {
            "form": self.form.value,
            "judgment": self.judgment.value,
            "requirement": self.requirement.value,
            "order": self.order.value,
            "k_samples": self.k_samples,
            "seed": self.seed,
        }

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "JudgeConfig":
        return cls(
            form=JudgeForm(d["form"]),
            judgment=JudgmentType(d["judgment"]),
            requirement=Requirement(d["requirement"]),
            order=PromptOrder(d["order"]),
            k_samples=d["k_samples"],
            seed=d["seed"],
        )


@dataclass(frozen=True)
class SelectedSet:
    indices: frozenset[int]


@dataclass(frozen=True)
class Ranking:
    order: tuple[int, ...]


@dataclass(frozen=True)
class JudgmentRecord:
    question_id: str
    config: JudgeConfig
    n_candidates: int
    prompt_hashes: tuple[str, ...]
    raw_outputs: tuple[str, ...]
    result: SelectedSet | Ranking
    call_count: int
    parse_failures: int
    reprompt_count: int = 0
    votes: dict[int, int] | None = None

    def __post_init__(self) -> None:
        n = self.n_candidates
        if isinstance(self.result, SelectedSet):
            if any(i < 0 or i >= n for i in self.result.indices):
                raise ContractError("selected indices out of range")
        else:
            order = self.result.order
            if len(set(order)) != len(order):
                raise ContractError("ranking has duplicate indices")
            if any(i < 0 or i >= n for i in order):
                raise ContractError("ranking indices out of range")
        expected = expected_call_count(self.config, n)
        if self.call_count != expected:
            raise ContractError(
                f"call_count {self.call_count} does not match contract {expected}"
            )

    def to_dict(self) -> dict[str, Any]:
        if isinstance(self.result, SelectedSet):
            result: dict[str, Any] = {"kind": "set", "indices": sorted(self.result.indices)}
        else:
            result = {"kind": "ranking", "order": list(self.result.order)}
        d: dict[str, Any] = {
            "question_id": self.question_id,
            "config": self.config.to_dict(),
            "n_candidates": self.n_candidates,
            "prompt_hashes": list(self.prompt_hashes),
            "raw_outputs": list(self.raw_outputs),
            "result": result,
            "call_count": self.call_count,
            "parse_failures": self.parse_failures,
            "reprompt_count": self.reprompt_count,
        }
        if self.votes is not None:
            d["votes"] = {str(k): v for k, v in sorted(self.votes.items())}
        return d

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "JudgmentRecord":
        raw_result = d["result"]
        result: SelectedSet | Ranking
        if raw_result["kind"] == "set":
            result = SelectedSet(frozenset(raw_result["indices"]))
        else:
            result = Ranking(tuple(raw_result["order"]))
        votes = d.get("votes")
        return cls(
            question_id=d["question_id"],
            config=JudgeConfig.from_dict(d["config"]),
            n_candidates=d["n_candidates"],
            prompt_hashes=tuple(d["prompt_hashes"]),
            raw_outputs=tuple(d["raw_outputs"]),
            result=result,
            call_count=d["call_count"],
            parse_failures=d["parse_failures"],
            reprompt_count=d.get("reprompt_count", 0),
            votes={int(k): v for k, v in votes.items()} if votes else None,
        )


def expected_call_count(config: JudgeConfig, n: int) -> int:
    if config.form is JudgeForm.POINTWISE:
        return n
    if config.form is JudgeForm.PAIRWISE:
        return n * (n - 1) // 2
    return config.k_samples


# --- output parsing -----------------------------------------------------------

_YES_NO_RE = re.compile(r"\b(yes|no)\b", re.IGNORECASE)
_TAG_RE = re.compile(r"Passage-(\d+)", re.IGNORECASE)
_INT_RE = re.compile(r"\d+")
_NONE_RE = re.compile(r"\bnone\b", re.IGNORECASE)


def parse_output(
    form: JudgeForm, raw: str, n: int
) -> bool | int | set[int] | list[int]:
    """Extract the verdict from a raw model output.

    Scans for the last line carrying the form's answer pattern. Pointwise
    gives a bool, pairwise the 0/1 position of the preferred passage, the
    listwise forms a 0-based index set or ordered index list. Out-of-range
    indices are dropped with a warning; no extractable verdict raises
    OutputParseError.
    """
    if not raw:
        raise OutputParseError("empty output")
    if form is JudgeForm.POINTWISE:
        for line in reversed(raw.split("\n")):
            match = _YES_NO_RE.search(line)
            if match:
                return match.group(1).lower() == "yes"
        raise OutputParseError("no yes/no verdict found")
    if form is JudgeForm.PAIRWISE:
        for line in reversed(raw.split("\n")):
            match = _TAG_RE.search(line)
            if match:
                tag = int(match.group(1))
                if tag in (1, 2):
                    return tag - 1
                raise OutputParseError(f"pairwise tag Passage-{tag} out of range")
        raise OutputParseError("no passage tag found")
    return _parse_listwise(form, raw, n)


def _parse_listwise(form: JudgeForm, raw: str, n: int) -> set[int] | list[int]:
    answer_line = None
    for line in reversed(raw.split("\n")):
        if _INT_RE.search(line):
            answer_line = line
            break
    if answer_line is None:
        if form is JudgeForm.LISTWISE_SET and _NONE_RE.search(raw):
            return set()
        raise OutputParseError("no indices found")
    tags = [int(t) for t in _TAG_RE.findall(answer_line)]
    if not tags:
        tags = [int(t) for t in _INT_RE.findall(answer_line)]
    indices: list[int] = []
    for tag in tags:
        index = tag - 1
        if 0 <= index < n:
            if index not in indices:
                indices.append(index)
        else:
            logger.warning("dropping out-of-range passage index %d (n=%d)", tag, n)
    if not indices:
        raise OutputParseError(f"no in-range indices in line {answer_line!r}")
    if form is JudgeForm.LISTWISE_SET:
        return set(indices)
    return indices


# --- judging operations -------------------------------------------------------


def _chat_request(prompt: str, model_name: str = "default") -> ChatRequest:
    return ChatRequest(user_message=prompt, temperature=JUDGE_TEMPERATURE, model_name=model_name)


def _judge_call(client, prompt: str, form: JudgeForm, n: int):
    """One judge call with a single format re-prompt on parse failure.

    Returns (value_or_None, raw_outputs, prompt_hashes, reprompts, failed).
    """
    response = client.chat(_chat_request(prompt))
    raws = [response.text]
    hashes = [text_hash(prompt)]
    try:
        return parse_output(form, response.text, n), raws, hashes, 0, 0
    except OutputParseError:
        reprompt = make_reprompt(prompt)
        retry = client.chat(_chat_request(reprompt))
        raws.append(retry.text)
        hashes.append(text_hash(reprompt))
        try:
            return parse_output(form, retry.text, n), raws, hashes, 1, 0
        except OutputParseError:
            return None, raws, hashes, 1, 1


def _indexed_map(fn: Callable[[int], Any], count: int, parallelism: int) -> list[Any]:
    if parallelism <= 1 or count <= 1:
        return [fn(i) for i in range(count)]
    with ThreadPoolExecutor(max_workers=parallelism) as pool:
        return list(pool.map(fn, range(count)))


def judge_pointwise(
    question: Question,
    candidates: CandidateSet,
    client,
    config: JudgeConfig,
    parallelism: int = 1,
) -> JudgmentRecord:
    """Judge each passage alone; the selected set is every yes verdict."""
    if config.form is not JudgeForm.POINTWISE:
        raise ContractError("config.form must be pointwise")
    n = candidates.size

    def one(i: int):
        prompt = render_judge_prompt(
            config.form, config.judgment, config.requirement, config.order,
            question, [candidates.passages[i]],
        )
        return _judge_call(client, prompt, config.form, n)

    outcomes = _indexed_map(one, n, parallelism)
    selected = {i for i, (value, *_rest) in enumerate(outcomes) if value is True}
    return JudgmentRecord(
        question_id=question.id,
        config=config,
        n_candidates=n,
        prompt_hashes=tuple(h for _, _, hashes, _, _ in outcomes for h in hashes),
        raw_outputs=tuple(r for _, raws, _, _, _ in outcomes for r in raws),
        result=SelectedSet(frozenset(selected)),
        call_count=n,
        parse_failures=sum(failed for *_h, failed in outcomes),
        reprompt_count=sum(rep for *_r, rep, _ in outcomes),
    )


def judge_pairwise(
    question: Question,
    candidates: CandidateSet,
    client,
    config: JudgeConfig,
    parallelism: int = 1,
) -> JudgmentRecord:
    """Run all N(N-1)/2 comparisons and rank by win count.

    Each pair is presented once, lower original index first. An
    unparseable comparison counts as a win for the lower index (recorded
    as a failure). Ties in win count break toward the lower index.
    """
    if config.form is not JudgeForm.PAIRWISE:
        raise ContractError("config.form must be pairwise")
    n = candidates.size
    pairs = [(i, j) for i in range(n) for j in range(i + 1, n)]

    def one(pair_index: int):
        i, j = pairs[pair_index]
        prompt = render_judge_prompt(
            config.form, config.judgment, config.requirement, config.order,
            question, [candidates.passages[i], candidates.passages[j]],
        )
        return _judge_call(client, prompt, config.form, n)

    outcomes = _indexed_map(one, len(pairs), parallelism)
    wins = [0] * n
    failures = 0
    reprompts = 0
    for (i, j), (value, _raws, _hashes, rep, failed) in zip(pairs, outcomes):
        reprompts += rep
        if failed:
            failures += 1
            wins[i] += 1
        else:
            wins[i if value == 0 else j] += 1
    order = tuple(sorted(range(n), key=lambda idx: (-wins[idx], idx)))
    return JudgmentRecord(
        question_id=question.id,
        config=config,
        n_candidates=n,
        prompt_hashes=tuple(h for _, _, hashes, _, _ in outcomes for h in hashes),
        raw_outputs=tuple(r for _, raws, _, _, _ in outcomes for r in raws),
        result=Ranking(order),
        call_count=len(pairs),
        parse_failures=failures,
        reprompt_count=reprompts,
    )


def judge_listwise(
    question: Question,
    candidates: CandidateSet,
    client,
    config: JudgeConfig,
) -> JudgmentRecord:
    """Single-call listwise judgment (set or rank output)."""
    if config.form not in (JudgeForm.LISTWISE_SET, JudgeForm.LISTWISE_RANK):
        raise ContractError("config.form must be a listwise form")
    if config.k_samples != 1:
        raise ContractError("judge_listwise takes k_samples = 1; use k_sampling_judge")
    n = candidates.size
    prompt = render_judge_prompt(
        config.form, config.judgment, config.requirement, config.order,
        question, candidates.passages,
    )
    value, raws, hashes, reprompts, failed = _judge_call(client, prompt, config.form, n)
    result: SelectedSet | Ranking
    if config.form is JudgeForm.LISTWISE_SET:
        result = SelectedSet(frozenset(value) if value is not None else frozenset())
    else:
        result = Ranking(tuple(value) if value is not None else ())
    return JudgmentRecord(
        question_id=question.id,
        config=config,
        n_candidates=n,
        prompt_hashes=tuple(hashes),
        raw_outputs=tuple(raws),
        result=result,
        call_count=1,
        parse_failures=failed,
        reprompt_count=reprompts,
    )


def sampling_permutation(seed: int, iteration: int, n: int) -> list[int]:
    """The candidate-order shuffle used by k-sampling iteration ``iteration``.

    Position p of the shuffled list shows original index perm[p].
    """
    rng = Random(derive_seed(seed, "ksample", iteration))
    perm = list(range(n))
    rng.shuffle(perm)
    return perm


def k_sampling_judge(
    question: Question,
    candidates: CandidateSet,
    client,
    config: JudgeConfig,
    parallelism: int = 1,
) -> JudgmentRecord:
    """Shuffle the candidate list k times, judge each order, vote.

    Every selected index earns one vote per iteration that picked it. The
    final set size is the most frequent per-iteration set size (ties go to
    the smaller size); the set itself is the top-voted indices, vote ties
    breaking toward the lower original index. Iterations whose output
    could not be parsed contribute neither votes nor a size.
    """
    if config.form is not JudgeForm.LISTWISE_SET:
        raise ContractError("k-sampling uses the listwise-set form")
    n = candidates.size
    k = config.k_samples

    def one(t0: int):
        t = t0 + 1
        perm = sampling_permutation(config.seed, t, n)
        shuffled = [candidates.passages[orig] for orig in perm]
        prompt = render_judge_prompt(
            config.form, config.judgment, config.requirement, config.order,
            question, shuffled,
        )
        value, raws, hashes, reprompts, failed = _judge_call(client, prompt, config.form, n)
        original: set[int] | None = None
        if value is not None:
            original = {perm[pos] for pos in value}
        return original, raws, hashes, reprompts, failed

    outcomes = _indexed_map(one, k, parallelism)
    votes = {i: 0 for i in range(n)}
    sizes: list[int] = []
    for original, *_rest in outcomes:
        if original is None:
            continue
        sizes.append(len(original))
        for index in original:
            votes[index] += 1
    if sizes:
        size_counts: dict[int, int] = {}
        for s in sizes:
            size_counts[s] = size_counts.get(s, 0) + 1
        modal_size = min(s for s, c in size_counts.items() if c == max(size_counts.values()))
        by_votes = sorted(range(n), key=lambda idx: (-votes[idx], idx))
        selected = frozenset(by_votes[:modal_size])
    else:
        selected = frozenset()
    return JudgmentRecord(
        question_id=question.id,
        config=config,
        n_candidates=n,
        prompt_hashes=tuple(h for _, _, hashes, _, _ in outcomes for h in hashes),
        raw_outputs=tuple(r for _, raws, _, _, _ in outcomes for r in raws),
        result=SelectedSet(selected),
        call_count=k,
        parse_failures=sum(failed for *_x, failed in outcomes),
        reprompt_count=sum(rep for *_y, rep, _ in outcomes),
        votes=votes,
    )


def judge(
    question: Question,
    candidates: CandidateSet,
    client,
    config: JudgeConfig,
    parallelism: int = 1,
) -> JudgmentRecord:
    """Dispatch to the right judging operation for the config's form."""
    if config.form is JudgeForm.POINTWISE:
        return judge_pointwise(question, candidates, client, config, parallelism)
    if config.form is JudgeForm.PAIRWISE:
        return judge_pairwise(question, candidates, client, config, parallelism)
    if config.k_samples > 1:
        return k_sampling_judge(question, candidates, client, config, parallelism)
    return judge_listwise(question, candidates, client, config)


class JudgmentStore:
    """In-memory index of judgment records by question and config."""

    def __init__(self, records: Iterable[JudgmentRecord] = ()) -> None:
        self._records: dict[tuple[str, tuple], JudgmentRecord] = {}
        for record in records:
            self.add(record)

    @staticmethod
    def _key(question_id: str, config: JudgeConfig) -> tuple[str, tuple]:
        return question_id, tuple(sorted(config.to_dict().items()))

    def add(self, record: JudgmentRecord) -> None:
        self._records[self._key(record.question_id, record.config)] = record

    def get(self, question_id: str, config: JudgeConfig) -> JudgmentRecord:
        key = self._key(question_id, config)
        if key not in self._records:
            raise MissingJudgmentError(
                f"no judgment for question {question_id!r} under config {config.slug()}"
            )
        return self._records[key]

    def records(self) -> list[JudgmentRecord]:
        return list(self._records.values())

    def paired_set_record(self, question_id: str, rank_config: JudgeConfig) -> JudgmentRecord:
        """The set-form judgment paired with a rank-form config.

        Pairing key is (judgment, seed) for the same question; the plain
        listwise-set run is preferred, then any listwise-set, then
        pointwise.
        """
        matches = [
            r
            for (qid, _), r in self._records.items()
            if qid == question_id
            and isinstance(r.result, SelectedSet)
            and r.config.judgment is rank_config.judgment
            and r.config.seed == rank_config.seed
        ]
        if not matches:
            raise MissingJudgmentError(
                f"no paired set-form judgment for question {question_id!r}"
            )

        def priority(record: JudgmentRecord) -> int:
            if record.config.form is JudgeForm.LISTWISE_SET:
                return 0 if record.config.k_samples == 1 else 1
            return 2

        return min(matches, key=priority)
