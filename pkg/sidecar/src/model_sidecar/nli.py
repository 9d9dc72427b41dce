"""NLI backends.

Wire shape: {"label": entailment|contradiction|neutral, "scores": [e, c, n]}
with scores summing to 1. The rule backend is a deterministic lexical
classifier: exact or containment matches entail, negation-parity flips and
entity/number swaps on near-identical sentences contradict, low overlap is
neutral. Each rule carries fixed scores, so outputs are exactly
reproducible. A transformers backend activates when that stack (plus a
checkpoint) is available.
"""

from __future__ import annotations

import re
import string
from collections import Counter
from typing import Callable

Verdict = dict  # {"label": str, "scores": [e, c, n]}

_PUNCT_TABLE = str.maketrans("", "", string.punctuation)
_NEGATORS = {"not", "no", "never", "none", "cannot", "nor", "nt"}
_NUMBER_RE = re.compile(r"\d+(?:\.\d+)?")


def _tokens(text: str) -> list[str]:
    return text.lower().replace("n't", " nt").translate(_PUNCT_TABLE).split()


def _verdict(label: str, scores: tuple[float, float, float]) -> Verdict:
    return {"label": label, "scores": list(scores)}


def rule_nli(premise: str, hypothesis: str) -> Verdict:
    """Deterministic lexical entailment rules, applied in fixed order."""
    p_tokens = _tokens(premise)
    h_tokens = _tokens(hypothesis)
    if p_tokens == h_tokens:
        return _verdict("entailment", (0.90, 0.04, 0.06))

    p_counts = Counter(p_tokens)
    h_counts = Counter(h_tokens)
    p_negs = sum(p_counts[n] for n in _NEGATORS)
    h_negs = sum(h_counts[n] for n in _NEGATORS)
    contained = not (h_counts - p_counts)
    overlap = (
        sum((h_counts & p_counts).values()) / max(1, sum(h_counts.values()))
    )

    if contained and p_negs % 2 == h_negs % 2:
        return _verdict("entailment", (0.82, 0.06, 0.12))
    if p_negs % 2 != h_negs % 2 and overlap >= 0.5:
        return _verdict("contradiction", (0.05, 0.85, 0.10))
    p_numbers = set(_NUMBER_RE.findall(premise))
    h_numbers = set(_NUMBER_RE.findall(hypothesis))
    if p_numbers and h_numbers and p_numbers != h_numbers and overlap >= 0.5:
        return _verdict("contradiction", (0.06, 0.80, 0.14))
    if overlap >= 0.75:
        return _verdict("contradiction", (0.08, 0.72, 0.20))
    if overlap >= 0.3:
        return _verdict("neutral", (0.25, 0.15, 0.60))
    return _verdict("neutral", (0.10, 0.08, 0.82))


def _load_transformers(model_name: str) -> Callable[[str, str], Verdict]:
    try:
        from transformers import pipeline
    except ImportError as exc:
        raise RuntimeError("hf backend requested but transformers is not installed") from exc
    classifier = pipeline("text-classification", model=model_name, top_k=None)
    order = {"entailment": 0, "contradiction": 1, "neutral": 2}

    def run(premise: str, hypothesis: str) -> Verdict:
        raw = classifier({"text": premise, "text_pair": hypothesis})
        scores = [0.0, 0.0, 0.0]
        for entry in raw:
            label = entry["label"].lower()
            if label in order:
                scores[order[label]] = float(entry["score"])
        total = sum(scores) or 1.0
        scores = [s / total for s in scores]
        labels = ["entailment", "contradiction", "neutral"]
        return {"label": labels[scores.index(max(scores))], "scores": scores}

    return run


def load_nli_backend(model_id: str) -> Callable[[str, str], Verdict]:
    backend, _, name = model_id.partition(":")
    if backend == "rule":
        return rule_nli
    if backend == "hf":
        return _load_transformers(name)
    raise RuntimeError(f"unknown NLI backend {backend!r}")
