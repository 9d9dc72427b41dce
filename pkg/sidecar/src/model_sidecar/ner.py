"""Named-entity backends.

Every backend returns wire-shaped span dicts {surface, label, start, end}
with the model's native labels; category mapping is the client's job.
The rule backend is a deterministic pattern-and-gazetteer tagger covering
persons, places, organizations, dates, and number-like entities; it exists
so the service runs with zero model downloads. A spaCy backend activates
when that stack is installed.
"""

from __future__ import annotations

import re
from typing import Callable

Span = dict  # {surface, label, start, end}

_MONTHS = (
    "January|February|March|April|May|June|July|August|September|October|November|December"
)

# (regex, label, priority) — lower priority wins ties at equal span length.
_PATTERNS: list[tuple[re.Pattern, str, int]] = [
    (re.compile(rf"\b(?:{_MONTHS}) \d{{1,2}}, \d{{4}}\b"), "DATE", 0),
    (re.compile(rf"\b\d{{1,2}} (?:{_MONTHS}) \d{{4}}\b"), "DATE", 0),
    (re.compile(rf"\b(?:{_MONTHS}) \d{{4}}\b"), "DATE", 0),
    (re.compile(r"\b[12]\d{3}s\b"), "DATE", 0),
    (re.compile(r"\b[12]\d{3}\b"), "DATE", 1),
    (re.compile(r"\$\d[\d,]*(?:\.\d+)?(?: (?:million|billion|trillion))?"), "MONEY", 0),
    (re.compile(r"\b\d+(?:\.\d+)?%"), "PERCENT", 0),
    (re.compile(r"\b\d+(?:\.\d+)? percent\b"), "PERCENT", 0),
    (re.compile(r"\b\d[\d,]*(?:\.\d+)?\b"), "CARDINAL", 2),
    (
        re.compile(
            r"\b(?:Mr|Mrs|Ms|Dr|Prof)\. [A-Z][a-z]+(?: [A-Z][a-z]+)?"
        ),
        "PERSON",
        0,
    ),
    (
        re.compile(
            r"\b[A-Z][A-Za-z&]*(?: [A-Z][A-Za-z&]*)* "
            r"(?:Inc|Corp|Corporation|Ltd|LLC|University|Institute|Laboratories|Company)\b"
        ),
        "ORG",
        0,
    ),
    (re.compile(r"\bUniversity of [A-Z][a-z]+\b"), "ORG", 0),
]

_FIRST_NAMES = (
    "Alice Bob Carol David Emma Frank Grace Henry Irene James Karen Liam Marie Noah "
    "Olivia Peter Quinn Rosa Samuel Tara Victor Wendy Ada Alan Sofia Hugo Ivan Nora"
).split()

_PERSON_RE = re.compile(
    r"\b(?:" + "|".join(_FIRST_NAMES) + r") [A-Z][a-z]+(?: [A-Z][a-z]+)?\b"
)

_GPE_GAZETTEER = (
    "Paris London Berlin Madrid Rome Vienna Amsterdam Tokyo Beijing Moscow Cairo "
    "Sydney Toronto Chicago Boston Seattle France Germany Spain Italy Japan China "
    "Russia Egypt Australia Canada Brazil India Norway Sweden Kenya Chile"
).split() + ["New York", "United States", "United Kingdom", "San Francisco", "Los Angeles",
             "South Korea", "New Zealand", "The Hague"]

_ORG_GAZETTEER = [
    "Google", "Microsoft", "Apple", "Amazon", "NASA", "UNESCO", "IBM", "Boeing",
    "Toyota", "Siemens", "OpenAI", "Interpol", "Reuters",
]


def _gazetteer_spans(text: str, surfaces: list[str], label: str, priority: int) -> list[tuple]:
    found = []
    for surface in surfaces:
        start = 0
        while True:
            pos = text.find(surface, start)
            if pos == -1:
                break
            before_ok = pos == 0 or not text[pos - 1].isalnum()
            end = pos + len(surface)
            after_ok = end == len(text) or not text[end].isalnum()
            if before_ok and after_ok:
                found.append((pos, end, label, priority))
            start = pos + 1
    return found


def rule_ner(text: str) -> list[Span]:
    """Deterministic tagger: patterns plus small built-in gazetteers.

    Overlaps resolve to the longer span, then the higher-priority pattern,
    then the leftmost; output is sorted and non-overlapping.
    """
    candidates: list[tuple] = []
    for pattern, label, priority in _PATTERNS:
        for match in pattern.finditer(text):
            candidates.append((match.start(), match.end(), label, priority))
    for match in _PERSON_RE.finditer(text):
        candidates.append((match.start(), match.end(), "PERSON", 1))
    candidates.extend(_gazetteer_spans(text, _GPE_GAZETTEER, "GPE", 1))
    candidates.extend(_gazetteer_spans(text, _ORG_GAZETTEER, "ORG", 1))

    candidates.sort(key=lambda c: (c[0], -(c[1] - c[0]), c[3]))
    accepted: list[tuple] = []
    for start, end, label, priority in candidates:
        if any(start < a_end and a_start < end for a_start, a_end, _, _ in accepted):
            continue
        accepted.append((start, end, label, priority))
    accepted.sort()
    return [
        {"surface": text[start:end], "label": label, "start": start, "end": end}
        for start, end, label, _ in accepted
    ]


def _load_spacy(model_name: str) -> Callable[[str], list[Span]]:
    try:
        import spacy
    except ImportError as exc:
        raise RuntimeError("spaCy backend requested but spacy is not installed") from exc
    nlp = spacy.load(model_name)

    def run(text: str) -> list[Span]:
        doc = nlp(text)
        return [
            {"surface": ent.text, "label": ent.label_, "start": ent.start_char, "end": ent.end_char}
            for ent in doc.ents
        ]

    return run


def load_ner_backend(model_id: str) -> Callable[[str], list[Span]]:
    backend, _, name = model_id.partition(":")
    if backend == "rule":
        return rule_ner
    if backend == "spacy":
        return _load_spacy(name)
    raise RuntimeError(f"unknown NER backend {backend!r}")
