"""Pure metric kernels for judgment quality and answer quality.

Set metrics and ranking metrics score the judgment outputs; exact match,
token F1, ROUGE-L and BLEU score generated answers. Everything is a pure
function over small inputs, reentrant under any parallelism.
"""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass
from typing import Iterable, Mapping, Sequence

from .corpus import normalize_text
from .errors import ContractError

BLEU_EPSILON = 1e-9


@dataclass(frozen=True)
class SetScore:
    precision: float
    recall: float
    f1: float


@dataclass(frozen=True)
class RankScore:
    ndcg_at: dict[int, float]
    mrr_at: dict[int, float]


@dataclass(frozen=True)
class AnswerScore:
    em: int
    token_f1: float
    rouge_l: float
    bleu: dict[int, float]

    def to_dict(self) -> dict:
        return {
            "em": self.em,
            "token_f1": self.token_f1,
            "rouge_l": self.rouge_l,
            "bleu": {str(n): v for n, v in self.bleu.items()},
        }

    @classmethod
    def from_dict(cls, d: dict) -> "AnswerScore":
        return cls(
            em=d["em"],
            token_f1=d["token_f1"],
            rouge_l=d["rouge_l"],
            bleu={int(n): v for n, v in d["bleu"].items()},
        )


def set_metrics(selected: Iterable, truth: Iterable) -> SetScore:
    """Precision/recall/F1 of a selected id set against the true id set."""
    selected = set(selected)
    truth = set(truth)
    if not truth:
        raise ContractError("truth set must be non-empty")
    hits = len(selected & truth)
    precision = hits / len(selected) if selected else 0.0
    recall = hits / len(truth)
    f1 = 0.0 if precision + recall == 0 else 2 * precision * recall / (precision + recall)
    return SetScore(precision=precision, recall=recall, f1=f1)


def ndcg_at_k(ranking: Sequence, relevant: Iterable, k: int) -> float:
    """Binary-gain NDCG@k.

    The ideal DCG counts the full relevant set (truncated at k), so a
    ranking that omits relevant items is penalized.
    """
    relevant = set(relevant)
    _check_rank_args(ranking, relevant, k)
    dcg = 0.0
    for i, item in enumerate(ranking[:k], start=1):
        if item in relevant:
            dcg += 1.0 / math.log2(i + 1)
    idcg = sum(1.0 / math.log2(i + 1) for i in range(1, min(k, len(relevant)) + 1))
    return dcg / idcg


def mrr_at_k(ranking: Sequence, relevant: Iterable, k: int) -> float:
    """Reciprocal rank of the first relevant item within the top k, else 0."""
    relevant = set(relevant)
    _check_rank_args(ranking, relevant, k)
    for i, item in enumerate(ranking[:k], start=1):
        if item in relevant:
            return 1.0 / i
    return 0.0


def _check_rank_args(ranking: Sequence, relevant: set, k: int) -> None:
    if k < 1:
        raise ContractError("k must be >= 1")
    if not relevant:
        raise ContractError("relevant set must be non-empty")
    if len(set(ranking)) != len(ranking):
        raise ContractError("ranking must be duplicate-free")


def rank_scores(
    ranking: Sequence,
    relevant: Iterable,
    ndcg_ks: Sequence[int] = (1, 5),
    mrr_ks: Sequence[int] = (5,),
) -> RankScore:
    relevant = set(relevant)
    return RankScore(
        ndcg_at={k: ndcg_at_k(ranking, relevant, k) for k in ndcg_ks},
        mrr_at={k: mrr_at_k(ranking, relevant, k) for k in mrr_ks},
    )


# --- answer metrics -----------------------------------------------------------


def exact_match(prediction: str, golds: Sequence[str]) -> int:
    """1 iff the normalized prediction equals any normalized gold."""
    if not golds:
        raise ContractError("golds must be non-empty")
    norm_pred = normalize_text(prediction)
    return int(any(norm_pred == normalize_text(g) for g in golds))


def token_f1(prediction: str, golds: Sequence[str]) -> float:
    """Max over golds of the harmonic mean of token precision and recall.

    Tokens are normalized whitespace tokens; overlap is a multiset
    intersection. A pair where both sides normalize to nothing scores 1.
    """
    if not golds:
        raise ContractError("golds must be non-empty")
    pred_tokens = normalize_text(prediction).split()
    return max(_pair_f1(pred_tokens, normalize_text(g).split()) for g in golds)


def _pair_f1(pred_tokens: list[str], gold_tokens: list[str]) -> float:
    if not pred_tokens or not gold_tokens:
        return float(pred_tokens == gold_tokens)
    common = Counter(pred_tokens) & Counter(gold_tokens)
    num_same = sum(common.values())
    if num_same == 0:
        return 0.0
    precision = num_same / len(pred_tokens)
    recall = num_same / len(gold_tokens)
    return 2 * precision * recall / (precision + recall)


def rouge_l(prediction: str, reference: str) -> float:
    """LCS-based F measure over normalized tokens (balanced F, beta = 1)."""
    pred_tokens = normalize_text(prediction).split()
    ref_tokens = normalize_text(reference).split()
    if not pred_tokens and not ref_tokens:
        return 1.0
    if not pred_tokens or not ref_tokens:
        return 0.0
    lcs = _lcs_length(pred_tokens, ref_tokens)
    if lcs == 0:
        return 0.0
    precision = lcs / len(pred_tokens)
    recall = lcs / len(ref_tokens)
    return 2 * precision * recall / (precision + recall)


def _lcs_length(a: Sequence[str], b: Sequence[str]) -> int:
    # One-row dynamic program; inputs are short answer strings.
    prev = [0] * (len(b) + 1)
    for x in a:
        cur = [0]
        for j, y in enumerate(b, start=1):
            if x == y:
                cur.append(prev[j - 1] + 1)
            else:
                cur.append(max(prev[j], cur[j - 1]))
        prev = cur
    return prev[-1]


def bleu(prediction: str, references: Sequence[str], max_n: int = 4) -> dict[int, float]:
    """Sentence-level BLEU-1..max_n with clipped modified precisions.

    Zero n-gram precisions are smoothed to a fixed epsilon so higher-order
    scores stay defined on short outputs. The brevity penalty uses the
    reference length closest to the candidate length (ties go short).
    An empty prediction scores 0 at every order.
    """
    if not references:
        raise ContractError("references must be non-empty")
    pred_tokens = normalize_text(prediction).split()
    ref_token_lists = [normalize_text(r).split() for r in references]
    if not pred_tokens:
        return {n: 0.0 for n in range(1, max_n + 1)}
    c = len(pred_tokens)
    r = min((abs(len(ref) - c), len(ref)) for ref in ref_token_lists)[1]
    bp = min(1.0, math.exp(1.0 - r / c))
    precisions: list[float] = []
    scores: dict[int, float] = {}
    for n in range(1, max_n + 1):
        pred_ngrams = Counter(_ngrams(pred_tokens, n))
        total = sum(pred_ngrams.values())
        if total == 0:
            p_n = BLEU_EPSILON
        else:
            max_ref_counts: Counter = Counter()
            for ref in ref_token_lists:
                ref_ngrams = Counter(_ngrams(ref, n))
                for gram, count in ref_ngrams.items():
                    max_ref_counts[gram] = max(max_ref_counts[gram], count)
            clipped = sum(min(count, max_ref_counts[gram]) for gram, count in pred_ngrams.items())
            p_n = clipped / total if clipped > 0 else BLEU_EPSILON
        precisions.append(p_n)
        scores[n] = bp * math.exp(sum(math.log(p) for p in precisions) / n)
    return scores


def _ngrams(tokens: Sequence[str], n: int) -> list[tuple[str, ...]]:
    return [tuple(tokens[i : i + n]) for i in range(len(tokens) - n + 1)]


def answer_scores(prediction: str, golds: Sequence[str], max_bleu_n: int = 4) -> AnswerScore:
    """Score one answer against its golds with every answer metric.

    ROUGE-L and BLEU take the max over golds, mirroring the token-F1
    convention for multi-reference questions.
    """
    return AnswerScore(
        em=exact_match(prediction, golds),
        token_f1=token_f1(prediction, golds),
        rouge_l=max(rouge_l(prediction, g) for g in golds),
        bleu=bleu(prediction, golds, max_n=max_bleu_n),
    )


def mean_of(values: Iterable[float]) -> float:
    values = list(values)
    if not values:
        raise ContractError("cannot average an empty sequence")
    return sum(values) / len(values)


def as_percent(value: float) -> float:
    """Scale to percentage points, rounded to 2 decimals for reporting."""
    return round(value * 100.0, 2)


def percent_table(per_metric: Mapping[str, Iterable[float]]) -> dict[str, float]:
    return {name: as_percent(mean_of(vals)) for name, vals in per_metric.items()}
