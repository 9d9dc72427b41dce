"""Deterministic mock backends.

Three chat mocks cover the offline test modes: scripted responses keyed by
prompt hash, a perfect judge that reads ground-truth labels out-of-band
from a knowledge registry, and a noisy judge whose error rate depends on
where the ground truth sits in the prompt's passage list. With a fixed
script or seed, any pipeline run through these is bit-reproducible.
"""

from __future__ import annotations

import random
import threading
from typing import Iterable, Mapping

from ..corpus import CandidateSet, PassageOrigin, PassageStore, Question
from ..errors import ContractError, ScriptError
from ..hashing import derive_seed, text_hash
from ..prompts import JudgeForm, PromptShape, inspect_prompt
from .base import (
    BaseChatClient,
    ChatRequest,
    EntityCategory,
    EntitySpan,
    NliLabel,
    NliVerdict,
)
from .http import DEFAULT_LABEL_MAP, span_to_wire, wire_to_spans


class ScriptedChatClient(BaseChatClient):
    """Replays responses keyed by prompt hash.

    A key may map to a single response or a list consumed call by call
    (the last entry repeats once exhausted). In strict mode an unscripted
    prompt raises; otherwise the default response is returned.
    """

    def __init__(
        self,
        script: Mapping[str, str | list[str]] | None = None,
        strict: bool = True,
        default_response: str = "",
        **kwargs,
    ) -> None:
        super().__init__(**kwargs)
        self._script = {k: list(v) if isinstance(v, list) else [v] for k, v in (script or {}).items()}
        self._cursor: dict[str, int] = {}
        self._script_lock = threading.Lock()
        self.strict = strict
        self.default_response = default_response

    @classmethod
    def from_prompts(cls, prompt_responses: Mapping[str, str | list[str]], **kwargs) -> "ScriptedChatClient":
        return cls({text_hash(p): r for p, r in prompt_responses.items()}, **kwargs)

    def _send(self, request: ChatRequest) -> tuple[str, tuple[int, int] | None]:
        key = request.prompt_hash
        with self._script_lock:
            if key not in self._script:
                if self.strict:
                    raise ScriptError(f"no scripted response for prompt {key[:12]}")
                return self.default_response, None
            responses = self._script[key]
            index = self._cursor.get(key, 0)
            self._cursor[key] = index + 1
            return responses[min(index, len(responses) - 1)], None


class OracleKnowledge:
    """Out-of-band registry the oracle mocks read: which passage texts are
    ground truth for each question, and what the gold answers are.
    """

    def __init__(self) -> None:
        self._golds: dict[str, tuple[str, ...]] = {}
        self._gt_texts: dict[str, set[str]] = {}

    def register(self, question_text: str, golds: Iterable[str], gt_texts: Iterable[str]) -> None:
        self._golds[question_text] = tuple(golds)
        self._gt_texts.setdefault(question_text, set()).update(gt_texts)

    @classmethod
    def from_store(cls, questions: Iterable[Question], store: PassageStore) -> "OracleKnowledge":
        knowledge = cls()
        for q in questions:
            texts = [store.text(pid) for pid in q.ground_truth_evidence_ids if pid in store]
            knowledge.register(q.text, q.gold_answers, texts)
        return knowledge

    @classmethod
    def from_candidates(
        cls, questions: Iterable[Question], candidate_sets: Iterable[CandidateSet]
    ) -> "OracleKnowledge":
        by_id = {c.question_id: c for c in candidate_sets}
        knowledge = cls()
        for q in questions:
            cset = by_id.get(q.id)
            texts = []
            if cset is not None:
                texts = [p.text for p in cset.passages if p.origin is PassageOrigin.GROUND_TRUTH]
            knowledge.register(q.text, q.gold_answers, texts)
        return knowledge

    def golds(self, question_text: str) -> tuple[str, ...]:
        if question_text not in self._golds:
            raise ScriptError(f"question not registered with oracle: {question_text[:60]!r}")
        return self._golds[question_text]

    def is_ground_truth(self, question_text: str, passage_text: str) -> bool:
        if question_text not in self._gt_texts:
            raise ScriptError(f"question not registered with oracle: {question_text[:60]!r}")
        return passage_text in self._gt_texts[question_text]


def _selection_reply(tags: list[int]) -> str:
    if not tags:
        return "My selection: none"
    return "My selection: " + ", ".join(f"Passage-{t}" for t in tags)


class OracleChatClient(BaseChatClient):
    """Answers every judge prompt perfectly and QA prompts from the golds.

    Judgments select exactly the ground-truth passages (rankings put them
    first); QA prompts get the first gold answer when any ground-truth
    passage is present in the evidence, else "unknown".
    """

    def __init__(self, knowledge: OracleKnowledge, **kwargs) -> None:
        super().__init__(**kwargs)
        self.knowledge = knowledge

    def _send(self, request: ChatRequest) -> tuple[str, tuple[int, int] | None]:
        shape = inspect_prompt(request.user_message)
        return self._reply(shape, request), None

    def _gt_flags(self, shape: PromptShape) -> list[bool]:
        return [
            self.knowledge.is_ground_truth(shape.question_text, text)
            for text in shape.passage_texts
        ]

    def _reply(self, shape: PromptShape, request: ChatRequest) -> str:
        if shape.kind == "qa":
            golds = self.knowledge.golds(shape.question_text)
            if any(self._gt_flags(shape)):
                return golds[0]
            return "unknown"
        flags = self._gt_flags(shape)
        if shape.form is JudgeForm.POINTWISE:
            return "Yes" if flags[0] else "No"
        if shape.form is JudgeForm.PAIRWISE:
            return "Passage-2" if (flags[1] and not flags[0]) else "Passage-1"
        if shape.form is JudgeForm.LISTWISE_SET:
            return _selection_reply([i + 1 for i, f in enumerate(flags) if f])
        gt_first = [i + 1 for i, f in enumerate(flags) if f]
        gt_first += [i + 1 for i, f in enumerate(flags) if not f]
        return " > ".join(f"Passage-{t}" for t in gt_first)


class NoisyOracleChatClient(OracleChatClient):
    """Oracle judge with a seeded, position-keyed error model.

    On listwise-set prompts the chance of a wrong judgment grows linearly
    with the position of the first ground-truth passage in the prompt
    (front: 0, back: ``max_error``); a wrong judgment selects one random
    non-ground-truth passage instead. All other prompt kinds behave like
    the clean oracle. Draws are keyed by (seed, prompt), so identical runs
    stay bit-reproducible.
    """

    def __init__(self, knowledge: OracleKnowledge, seed: int, max_error: float = 0.75, **kwargs) -> None:
        super().__init__(knowledge, **kwargs)
        self.seed = seed
        self.max_error = max_error

    def _reply(self, shape: PromptShape, request: ChatRequest) -> str:
        if shape.kind != "judge" or shape.form is not JudgeForm.LISTWISE_SET:
            return super()._reply(shape, request)
        flags = self._gt_flags(shape)
        gt_positions = [i for i, f in enumerate(flags) if f]
        non_gt = [i for i, f in enumerate(flags) if not f]
        if not gt_positions or not non_gt or len(flags) < 2:
            return super()._reply(shape, request)
        position = gt_positions[0]
        error_rate = self.max_error * position / (len(flags) - 1)
        rng = random.Random(derive_seed(self.seed, request.user_message))
        if rng.random() < error_rate:
            return _selection_reply([rng.choice(non_gt) + 1])
        return super()._reply(shape, request)


class GazetteerNerClient:
    """NER mock: finds exact occurrences of gazetteer surfaces in the text.

    Longer surfaces win overlaps; native labels go through the same
    label-to-category mapping as the HTTP client, so both paths produce
    identical spans for identical wire payloads.
    """

    def __init__(
        self,
        gazetteer: Mapping[str, str],
        label_map: dict[str, EntityCategory] | None = None,
    ) -> None:
        self.gazetteer = dict(gazetteer)
        self.label_map = DEFAULT_LABEL_MAP if label_map is None else label_map

    def wire_payload(self, text: str) -> dict:
        if not text:
            raise ContractError("text must be non-empty")
        taken: list[tuple[int, int]] = []
        found: list[tuple[int, str, str]] = []
        for surface in sorted(self.gazetteer, key=len, reverse=True):
            start = 0
            while True:
                pos = text.find(surface, start)
                if pos == -1:
                    break
                end = pos + len(surface)
                if not any(pos < t_end and t_start < end for t_start, t_end in taken):
                    taken.append((pos, end))
                    found.append((pos, surface, self.gazetteer[surface]))
                start = pos + 1
        found.sort()
        return {
            "entities": [
                span_to_wire(surface, label, pos, pos + len(surface))
                for pos, surface, label in found
            ]
        }

    def ner(self, text: str) -> list[EntitySpan]:
        return wire_to_spans(self.wire_payload(text), text, self.label_map)


class TableNliClient:
    """NLI mock backed by an explicit (premise, hypothesis) table.

    Identical premise and hypothesis entail by convention. In strict mode
    an untabled pair raises; otherwise it is Neutral.
    """

    def __init__(
        self,
        table: Mapping[tuple[str, str], NliLabel | NliVerdict] | None = None,
        strict: bool = True,
    ) -> None:
        self.table = dict(table or {})
        self.strict = strict

    def nli(self, premise: str, hypothesis: str) -> NliVerdict:
        if not premise or not hypothesis:
            raise ContractError("premise and hypothesis must be non-empty")
        entry = self.table.get((premise, hypothesis))
        if entry is None:
            if premise == hypothesis:
                return NliVerdict.from_label(NliLabel.ENTAILMENT)
            if self.strict:
                raise ScriptError(f"no NLI table entry for pair ({premise[:40]!r}, {hypothesis[:40]!r})")
            return NliVerdict.from_label(NliLabel.NEUTRAL)
        if isinstance(entry, NliVerdict):
            return entry
        return NliVerdict.from_label(entry)
