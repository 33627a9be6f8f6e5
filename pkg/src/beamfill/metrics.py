"""Span-level evaluation: exact-match rank and BLEU.

Predictions and references are token-id spans of equal length (the gap
is fixed-width), so BLEU needs no brevity penalty.
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass
from math import exp, log
from typing import Optional, Sequence

from beamfill.errors import InvalidInput

Span = Sequence[int]


def top_k_hit(predictions: Sequence[Span], truth: Span, k: int) -> bool:
    """True iff one of the first k predictions equals the truth exactly."""
    if k < 1:
        raise InvalidInput("k must be at least 1")
    truth = tuple(truth)
    return any(tuple(p) == truth for p in predictions[:k])


def _ngram_precision(candidate: tuple, reference: tuple, n: int) -> float:
    cand = Counter(candidate[i : i + n] for i in range(len(candidate) - n + 1))
    ref = Counter(reference[i : i + n] for i in range(len(reference) - n + 1))
    clipped = sum(min(count, ref[gram]) for gram, count in cand.items())
    return clipped / max(1, sum(cand.values()))


def bleu_k(candidate: Span, reference: Span) -> float:
    """BLEU on a single equal-length span pair, in [0, 100].

    Geometric mean of modified n-gram precisions for n up to min(4, span
    length), uniform weights, no smoothing: any zero precision zeroes the
    score.  Brevity penalty is 1 by the equal-length precondition.
    """
    candidate = tuple(int(t) for t in candidate)
    reference = tuple(int(t) for t in reference)
    if not candidate or not reference:
        raise InvalidInput("spans must be nonempty")
    if len(candidate) != len(reference):
        raise InvalidInput("spans must have equal length")
    max_n = min(4, len(candidate))
    total = 0.0
    for n in range(1, max_n + 1):
        precision = _ngram_precision(candidate, reference, n)
        if precision == 0.0:
            return 0.0
        total += log(precision)
    return 100.0 * exp(total / max_n)


@dataclass(frozen=True)
class EvalRecord:
    """One task x method outcome."""

    task_id: str
    method: str
    truth: tuple[int, ...]
    predictions: tuple[tuple[int, ...], ...]
    hit_rank: Optional[int]
    bleu: float

    def __post_init__(self) -> None:
        if self.hit_rank is not None and not 1 <= self.hit_rank <= len(self.predictions):
            raise ValueError("hit_rank must index into predictions")
        if not 0.0 <= self.bleu <= 100.0:
            raise ValueError("bleu must lie in [0, 100]")

    @classmethod
    def build(
        cls,
        task_id: str,
        method: str,
        truth: Span,
        predictions: Sequence[Span],
    ) -> "EvalRecord":
        truth_t = tuple(int(t) for t in truth)
        preds = tuple(tuple(int(t) for t in p) for p in predictions)
        hit_rank = None
        for rank, p in enumerate(preds, start=1):
            if p == truth_t:
                hit_rank = rank
                break
        bleu = bleu_k(preds[0], truth_t) if preds else 0.0
        return cls(task_id, method, truth_t, preds, hit_rank, bleu)
