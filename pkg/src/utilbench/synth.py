"""Benchmark construction: counterfactual passages, noisy passage selection,
and candidate-set assembly for the two evaluation scenarios.

A ground-truth-inclusion (GTI) set mixes the gold evidence with three
non-gold categories: counterfactual passages (CP) built by entity
substitution or LLM generation, highly relevant noisy passages (HRNP)
taken top-down from the retrieval run, and weakly relevant noisy passages
(WRNP) taken bottom-up. A ground-truth-uncertainty (GTU) set is simply the
retriever's top N.

All randomness is drawn from generators seeded by (seed, question id, ...),
so per-question construction can run in parallel without affecting output.
"""

from __future__ import annotations

import logging
import re
from collections import Counter
from dataclasses import dataclass
from enum import Enum
from random import Random
from typing import Sequence

from .clients.base import ChatRequest, EntityCategory, NliLabel
from .corpus import (
    CandidateSet,
    Passage,
    PassageOrigin,
    PassageStore,
    Question,
    RetrievalRun,
    contains_answer,
    normalize_text,
)
from .errors import AssemblyError, ContractError, ExhaustionError, ShortfallError
from .hashing import derive_seed, text_hash

logger = logging.getLogger(__name__)

FABRICATION_TEMPERATURE = 0.7
FABRICATION_PROMPT = (
    "Given a claim, please write a short piece of evidence to support it. "
    "The maximum length of the generated evidence is 100 words. "
    "You can fabricate content, but it should be as realistic as possible. "
    "Claim: {claim} Evidence:"
)
SUPPORT_RETRY_CAP = 3
DUPLICATE_DRAW_CAP = 10
MAX_EVIDENCE_WORDS = 100
REPEATS_PER_MODE = 5

CATEGORY_ORDER = (
    EntityCategory.PERSON,
    EntityCategory.DATE,
    EntityCategory.NUMERIC,
    EntityCategory.ORGANIZATION,
    EntityCategory.LOCATION,
)


class SubstitutionMode(str, Enum):
    CORPUS_SUBSTITUTION = "CorpusSubstitution"
    TYPE_SWAP = "TypeSwap"


@dataclass(frozen=True)
class CounterfactualSpec:
    mode: SubstitutionMode
    original_answer: str
    counter_answer: str
    repeat_index: int

    def __post_init__(self) -> None:
        if self.counter_answer == self.original_answer:
            raise ContractError("counter answer must differ from the original answer")
        if not 1 <= self.repeat_index <= REPEATS_PER_MODE:
            raise ContractError(f"repeat_index must be in 1..{REPEATS_PER_MODE}")


class EntityCorpus:
    """Unique entity surfaces grouped by category, built from gold answers."""

    def __init__(self) -> None:
        self._by_category: dict[EntityCategory, list[str]] = {c: [] for c in CATEGORY_ORDER}
        self._category_by_surface: dict[str, EntityCategory] = {}

    def add(self, category: EntityCategory, surface: str) -> None:
        if category not in self._by_category:
            raise ContractError(f"cannot file entities under category {category.value}")
        if not surface:
            raise ContractError("entity surface must be non-empty")
        if surface in self._by_category[category]:
            return
        self._by_category[category].append(surface)
        self._category_by_surface.setdefault(surface, category)

    def entities(self, category: EntityCategory) -> tuple[str, ...]:
        return tuple(self._by_category.get(category, ()))

    def category_of(self, surface: str) -> EntityCategory | None:
        return self._category_by_surface.get(surface)

    def eligible(
        self, category: EntityCategory, mode: SubstitutionMode, exclude: set[str] | None = None
    ) -> list[str]:
        """Counter-answer candidates for a mode, relative to one category."""
        exclude_fold = {s.lower() for s in (exclude or set())}
        if mode is SubstitutionMode.CORPUS_SUBSTITUTION:
            pool = self._by_category.get(category, [])
        else:
            pool = [
                surface
                for other in CATEGORY_ORDER
                if other is not category
                for surface in self._by_category[other]
            ]
        return [s for s in pool if s.lower() not in exclude_fold]

    def counts(self) -> dict[str, int]:
        return {c.value: len(v) for c, v in self._by_category.items()}

    def __len__(self) -> int:
        return sum(len(v) for v in self._by_category.values())


def build_entity_corpus(questions: Sequence[Question], ner) -> EntityCorpus:
    """NER-categorize every gold answer into the entity corpus.

    Each recognized span files its surface under its category; for
    entity-style answers the surface is the whole answer. Answers the
    recognizer cannot place in one of the five categories are skipped and
    the skip count is logged. Sentence-style answers contribute every
    recognized entity, which is what the generation pipeline substitutes.
    """
    corpus = EntityCorpus()
    skipped = 0
    for question in questions:
        for answer in question.gold_answers:
            if not answer:
                continue
            spans = [s for s in ner.ner(answer) if s.category is not EntityCategory.OTHER]
            if not spans:
                skipped += 1
                continue
            for span in spans:
                corpus.add(span.category, span.surface)
    if skipped:
        logger.info("entity corpus: skipped %d gold answers with category Other", skipped)
    return corpus


# --- substitution counterfactuals ---------------------------------------------


def _occurrences_ci(text: str, target: str) -> int:
    return len(re.findall(re.escape(target), text, re.IGNORECASE))


def _replace_all_ci(text: str, target: str, replacement: str) -> tuple[str, int]:
    # Callable replacement keeps backslashes in entity surfaces literal.
    return re.subn(re.escape(target), lambda _m: replacement, text, flags=re.IGNORECASE)


def substitute_entities(
    evidence: Passage,
    answer: str,
    corpus: EntityCorpus,
    mode: SubstitutionMode,
    seed: int,
    repeat_index: int = 1,
) -> tuple[Passage, CounterfactualSpec]:
    """Replace every occurrence of the answer in the evidence with one
    randomly drawn counter-answer.

    Corpus substitution draws from the answer's own category, type swap
    from the other categories. Deterministic for a fixed seed.
    """
    if _occurrences_ci(evidence.text, answer) == 0 or not contains_answer(evidence, [answer]):
        raise ContractError(f"answer {answer!r} does not occur in evidence {evidence.id!r}")
    category = corpus.category_of(answer)
    if category is None:
        raise ExhaustionError(f"answer {answer!r} is not categorized in the entity corpus")
    eligible = corpus.eligible(category, mode, exclude={answer})
    if not eligible:
        raise ExhaustionError(
            f"no eligible counter-answer for {answer!r} under {mode.value}"
        )
    rng = Random(derive_seed(seed, mode.value, repeat_index))
    counter = rng.choice(eligible)
    new_text, replaced = _replace_all_ci(evidence.text, answer, counter)
    spec = CounterfactualSpec(
        mode=mode, original_answer=answer, counter_answer=counter, repeat_index=repeat_index
    )
    mode_slug = "cs" if mode is SubstitutionMode.CORPUS_SUBSTITUTION else "ts"
    passage = Passage(
        id=f"{evidence.id}::cf-{mode_slug}-{repeat_index}",
        text=new_text,
        origin=PassageOrigin.COUNTERFACTUAL,
        provenance={
            "source_passage_id": evidence.id,
            "original_answer": answer,
            "counter_answer": counter,
            "mode": mode.value,
            "repeat_index": repeat_index,
            "replaced_occurrences": replaced,
        },
    )
    return passage, spec


def make_counterfactuals_substitution(
    question: Question,
    evidence: Passage,
    corpus: EntityCorpus,
    seed: int,
) -> list[Passage]:
    """Five corpus-substitution plus five type-swap counterfactuals.

    Duplicate (counter answer, mode) draws are regenerated up to a cap and
    then dropped, so the result may be shorter than ten. The substituted
    answer is the first gold answer that occurs in the evidence.
    """
    answer = next(
        (a for a in question.gold_answers if a and _occurrences_ci(evidence.text, a) > 0),
        None,
    )
    if answer is None:
        raise ContractError(
            f"no gold answer of question {question.id!r} occurs in evidence {evidence.id!r}"
        )
    category = corpus.category_of(answer)
    results: list[Passage] = []
    exhausted_modes = 0
    for mode in SubstitutionMode:
        if category is None:
            exhausted_modes += 1
            continue
        eligible_count = len(corpus.eligible(category, mode, exclude={answer}))
        if eligible_count == 0:
            exhausted_modes += 1
            continue
        seen: set[str] = set()
        for repeat in range(1, REPEATS_PER_MODE + 1):
            if len(seen) >= eligible_count:
                break
            for attempt in range(DUPLICATE_DRAW_CAP):
                passage, spec = substitute_entities(
                    evidence,
                    answer,
                    corpus,
                    mode,
                    derive_seed(seed, question.id, mode.value, repeat, attempt),
                    repeat_index=repeat,
                )
                if spec.counter_answer not in seen:
                    seen.add(spec.counter_answer)
                    results.append(passage)
                    break
    if exhausted_modes == len(SubstitutionMode):
        logger.warning(
            "question %s: both substitution modes exhausted for answer %r", question.id, answer
        )
    return results


# --- generation-based counterfactuals ------------------------------------------


def _truncate_to_sentences(text: str, max_words: int) -> str:
    if len(text.split()) <= max_words:
        return text
    sentences = re.split(r"(?<=[.!?])\s+", text)
    kept: list[str] = []
    words = 0
    for sentence in sentences:
        count = len(sentence.split())
        if kept and words + count > max_words:
            break
        kept.append(sentence)
        words += count
        if words > max_words:
            break
    truncated = " ".join(kept)
    if len(truncated.split()) > max_words:
        truncated = " ".join(truncated.split()[:max_words])
    return truncated


def make_counterfactuals_generated(
    question: Question,
    evidence: Passage,
    answer: str,
    corpus: EntityCorpus,
    llm,
    nli,
    seed: int,
    support_retry_cap: int = SUPPORT_RETRY_CAP,
) -> list[Passage]:
    """Generate counterfactual passages for sentence-level answers.

    Pipeline: build up to ten incorrect-answer claims by substituting
    entities of the answer that the question does not mention (five per
    substitution mode); keep claims the NLI model finds contradictory to
    the correct answer; have the LLM fabricate supporting evidence for
    each kept claim; keep only fabrications the NLI model confirms as
    entailing their claim, retrying failed support checks a bounded number
    of times. Over-long fabrications are cut at a sentence boundary and
    re-checked. Zero survivors is a valid (logged) outcome.
    """
    question_norm = normalize_text(question.text)
    targets = [
        (surface, category)
        for category in CATEGORY_ORDER
        for surface in corpus.entities(category)
        if _occurrences_ci(answer, surface) > 0
        and normalize_text(surface) not in question_norm
    ]
    if not targets:
        logger.warning("question %s: no substitutable entities in the answer", question.id)
        return []

    claims: list[tuple[str, SubstitutionMode, int, str, str]] = []
    seen_claims: set[str] = set()
    for mode in SubstitutionMode:
        for repeat in range(1, REPEATS_PER_MODE + 1):
            for attempt in range(DUPLICATE_DRAW_CAP):
                rng = Random(derive_seed(seed, question.id, "gen", mode.value, repeat, attempt))
                target, category = rng.choice(targets)
                eligible = corpus.eligible(category, mode, exclude={target})
                if not eligible:
                    continue
                counter = rng.choice(eligible)
                claim, _ = _replace_all_ci(answer, target, counter)
                if claim != answer and claim not in seen_claims:
                    seen_claims.add(claim)
                    claims.append((claim, mode, repeat, target, counter))
                    break

    contradictions = [
        entry for entry in claims if nli.nli(answer, entry[0]).label is NliLabel.CONTRADICTION
    ]

    results: list[Passage] = []
    for claim, mode, repeat, target, counter in contradictions:
        prompt = FABRICATION_PROMPT.format(claim=claim)
        retained: str | None = None
        retries_used = 0
        for attempt in range(1 + support_retry_cap):
            response = llm.chat(
                ChatRequest(user_message=prompt, temperature=FABRICATION_TEMPERATURE)
            )
            fabricated = _truncate_to_sentences(response.text, MAX_EVIDENCE_WORDS)
            if nli.nli(fabricated, claim).label is NliLabel.ENTAILMENT:
                retained = fabricated
                retries_used = attempt
                break
        if retained is None:
            logger.warning(
                "question %s: fabricated evidence for claim %r never passed the support check",
                question.id,
                claim[:60],
            )
            continue
        mode_slug = "cs" if mode is SubstitutionMode.CORPUS_SUBSTITUTION else "ts"
        results.append(
            Passage(
                id=f"{question.id}::gencf-{mode_slug}-{repeat}",
                text=retained,
                origin=PassageOrigin.COUNTERFACTUAL,
                provenance={
                    "source_passage_id": evidence.id,
                    "claim": claim,
                    "original_answer": target,
                    "counter_answer": counter,
                    "mode": mode.value,
                    "repeat_index": repeat,
                    "generation_prompt_hash": text_hash(prompt),
                    "support_retries": retries_used,
                },
            )
        )
    if not results:
        logger.warning("question %s: generation pipeline produced no counterfactuals", question.id)
    return results


# --- noisy passage selection ----------------------------------------------------


def select_hrnp(
    run: RetrievalRun, question: Question, store: PassageStore, k: int = 10
) -> list[Passage]:
    """Highly relevant noisy passages: scan the run top-down, keep passages
    that contain no answer information and are not gold evidence (and are
    labeled 0 when a selection label exists), stop at k.
    """
    selected: list[Passage] = []
    gt_ids = set(question.ground_truth_evidence_ids)
    for entry in run.entries(question.id):
        if len(selected) >= k:
            break
        if entry.passage_id in gt_ids:
            continue
        if store.label(entry.passage_id) == 1:
            continue
        text = store.text(entry.passage_id)
        if contains_answer(text, question.gold_answers):
            continue
        selected.append(
            Passage(
                id=entry.passage_id,
                text=text,
                origin=PassageOrigin.HRNP,
                provenance={"rank": entry.rank, "score": entry.score},
            )
        )
    return selected


def select_wrnp(
    run: RetrievalRun,
    question: Question,
    store: PassageStore,
    exclude: set[str],
    k: int = 10,
) -> list[Passage]:
    """Weakly relevant noisy passages: scan the run bottom-up, skip
    excluded ids (HRNP and gold evidence) and answer-bearing passages,
    stop at k. The weakest passage comes first in the result.
    """
    selected: list[Passage] = []
    gt_ids = set(question.ground_truth_evidence_ids)
    for entry in reversed(run.entries(question.id)):
        if len(selected) >= k:
            break
        if entry.passage_id in exclude or entry.passage_id in gt_ids:
            continue
        text = store.text(entry.passage_id)
        if contains_answer(text, question.gold_answers):
            continue
        selected.append(
            Passage(
                id=entry.passage_id,
                text=text,
                origin=PassageOrigin.WRNP,
                provenance={"rank": entry.rank, "score": entry.score},
            )
        )
    return selected


# --- candidate assembly -----------------------------------------------------------


def build_gtu(
    run: RetrievalRun, store: PassageStore, question: Question, n: int = 10
) -> CandidateSet:
    """The retriever's top n passages, in retrieval order."""
    entries = run.entries(question.id)
    if len(entries) < n:
        raise ShortfallError(
            f"question {question.id!r}: run holds {len(entries)} entries, need {n}"
        )
    passages = tuple(
        Passage(
            id=entry.passage_id,
            text=store.text(entry.passage_id),
            origin=PassageOrigin.RETRIEVED,
            provenance={"rank": entry.rank, "score": entry.score},
        )
        for entry in entries[:n]
    )
    return CandidateSet(
        question_id=question.id,
        passages=passages,
        seed=0,
        composition={PassageOrigin.RETRIEVED.value: n},
    )


_BACKFILL_CHAIN = {
    "cp": ("hrnp", "wrnp"),
    "hrnp": ("wrnp", "cp"),
    "wrnp": ("hrnp", "cp"),
}


def assemble_candidates(
    ground_truth: Sequence[Passage],
    cp_pool: Sequence[Passage],
    hrnp_pool: Sequence[Passage],
    wrnp_pool: Sequence[Passage],
    n: int = 10,
    seed: int = 0,
    question_id: str = "",
) -> CandidateSet:
    """Assemble the final candidate set around the gold evidence.

    The n - |gt| non-gold slots split as evenly as possible across the
    three pools; leftover slots go to uniformly random categories. CP
    slots are random samples, HRNP/WRNP come from the top of their pools.
    A short pool backfills from the other noisy pool, then from CP; only
    when everything is empty does assembly fail. The final order is a
    seeded shuffle.
    """
    g = len(ground_truth)
    if g >= n:
        raise ContractError(f"need |ground_truth| < n, got {g} >= {n}")
    remaining = n - g
    base = remaining // 3
    leftover = remaining - 3 * base
    rng = Random(derive_seed(seed, "assemble", question_id))
    targets = {"cp": base, "hrnp": base, "wrnp": base}
    for _ in range(leftover):
        targets[rng.choice(("cp", "hrnp", "wrnp"))] += 1

    pools = {"cp": list(cp_pool), "hrnp": list(hrnp_pool), "wrnp": list(wrnp_pool)}

    def draw(category: str) -> Passage | None:
        pool = pools[category]
        if not pool:
            return None
        if category == "cp":
            return pool.pop(rng.randrange(len(pool)))
        return pool.pop(0)

    taken: list[Passage] = []
    deficits = {"cp": 0, "hrnp": 0, "wrnp": 0}
    for category in ("cp", "hrnp", "wrnp"):
        for _ in range(targets[category]):
            passage = draw(category)
            if passage is None:
                deficits[category] += 1
            else:
                taken.append(passage)
    for category in ("cp", "hrnp", "wrnp"):
        for _ in range(deficits[category]):
            for fallback in _BACKFILL_CHAIN[category]:
                passage = draw(fallback)
                if passage is not None:
                    taken.append(passage)
                    break
            else:
                raise AssemblyError(
                    question_id,
                    f"pools exhausted while filling {remaining} non-gold slots",
                )

    members = list(ground_truth) + taken
    rng.shuffle(members)
    composition = dict(Counter(p.origin.value for p in members))
    return CandidateSet(
        question_id=question_id,
        passages=tuple(members),
        seed=seed,
        composition=composition,
    )


def with_ground_truth_at(cset: CandidateSet, position: int, seed: int = 0) -> CandidateSet:
    """Reorder a candidate set so its gold block starts at ``position``.

    Non-gold passages are shuffled around the block with a seeded RNG;
    membership and composition stay untouched. Drives the fixed-position
    experiments.
    """
    gt = [p for p in cset.passages if p.origin is PassageOrigin.GROUND_TRUTH]
    others = [p for p in cset.passages if p.origin is not PassageOrigin.GROUND_TRUTH]
    if not gt:
        raise ContractError(f"candidate set for {cset.question_id!r} has no ground truth")
    if position < 0 or position + len(gt) > cset.size:
        raise ContractError(f"position {position} cannot hold {len(gt)} gold passages")
    rng = Random(derive_seed(seed, "fixpos", cset.question_id, position))
    rng.shuffle(others)
    reordered = others[:position] + gt + others[position:]
    return CandidateSet(
        question_id=cset.question_id,
        passages=tuple(reordered),
        seed=seed,
        composition=dict(cset.composition),
    )


def build_gti_candidates(
    question: Question,
    store: PassageStore,
    run: RetrievalRun,
    entity_corpus: EntityCorpus,
    seed: int,
    n: int = 10,
    cp_mode: str = "substitution",
    llm=None,
    nli=None,
) -> CandidateSet:
    """Build one GTI candidate set end to end for a question."""
    gt = [
        store.passage(pid, PassageOrigin.GROUND_TRUTH)
        for pid in question.ground_truth_evidence_ids
    ]
    if not gt:
        raise AssemblyError(question.id, "GTI construction needs ground-truth evidence")
    if len(gt) >= n:
        raise AssemblyError(question.id, f"{len(gt)} gold passages do not fit a size-{n} set")

    cp_pool: list[Passage] = []
    if cp_mode == "substitution":
        for evidence in gt:
            try:
                cp_pool.extend(
                    make_counterfactuals_substitution(question, evidence, entity_corpus, seed)
                )
            except (ContractError, ExhaustionError) as exc:
                logger.warning("question %s: substitution skipped: %s", question.id, exc)
    elif cp_mode == "generated":
        if llm is None or nli is None:
            raise ContractError("generated counterfactuals need llm and nli clients")
        cp_pool = make_counterfactuals_generated(
            question, gt[0], question.gold_answers[0], entity_corpus, llm, nli, seed
        )
    else:
        raise ContractError(f"unknown counterfactual mode {cp_mode!r}")

    hrnp = select_hrnp(run, question, store, k=10)
    wrnp = select_wrnp(
        run,
        question,
        store,
        exclude={p.id for p in hrnp} | set(question.ground_truth_evidence_ids),
        k=10,
    )
    return assemble_candidates(
        gt, cp_pool, hrnp, wrnp, n=n, seed=seed, question_id=question.id
    )
