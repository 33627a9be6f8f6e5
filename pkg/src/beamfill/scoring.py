"""Per-step scoring functions for the infilling search.

Three ways to score the candidate tokens for one unfilled position:

* ``STANDARD``: the backend's log-conditional at the position, with
  every other unfilled position realized as a mask.
* ``HCB_MASK``: the same call, minus the scalar log-probability the
  backend assigns to the mask token itself.  The correction turns
  per-step conditionals into telescoping probability ratios and costs no
  extra backend call.
* ``HCB_PIVOT``: realize the unfilled positions (including the queried
  one) with a fixed pivot sequence instead of masks, and subtract the
  log-probability of the pivot token at the queried position.

Scores are rankings, meaningful up to an additive constant; nothing here
renormalizes after the subtraction.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from typing import Optional, Sequence

import numpy as np

from beamfill.backends import ConditionalBackend
from beamfill.errors import ConfigError, InvalidQuery
from beamfill.seqcore import GapTask, Hypothesis, realize


class ScoringKind(Enum):
    STANDARD = "standard"
    HCB_MASK = "hcb"
    HCB_PIVOT = "hcb-pivot"


@dataclass(frozen=True)
class ScoringMode:
    """A scoring function selection plus its parameters.

    ``pivot`` is required for HCB_PIVOT and must have gap length.
    ``query_holds_mask`` switches the pivot realization to put a mask at
    the queried position instead of the pivot token; default off, so the
    denominator conditions on the pivot occupying the whole gap.
    """

    kind: ScoringKind
    pivot: Optional[tuple[int, ...]] = None
    query_holds_mask: bool = False

    def __post_init__(self) -> None:
        if self.kind is ScoringKind.HCB_PIVOT:
            if self.pivot is None:
                raise ConfigError("pivot scoring requires a pivot sequence")
            object.__setattr__(self, "pivot", tuple(int(t) for t in self.pivot))
        elif self.pivot is not None:
            raise ConfigError(f"{self.kind.value} scoring takes no pivot")

    @classmethod
    def standard(cls) -> "ScoringMode":
        return cls(ScoringKind.STANDARD)

    @classmethod
    def hcb_mask(cls) -> "ScoringMode":
        return cls(ScoringKind.HCB_MASK)

    @classmethod
    def hcb_pivot(cls, pivot: Sequence[int], query_holds_mask: bool = False) -> "ScoringMode":
        return cls(ScoringKind.HCB_PIVOT, tuple(pivot), query_holds_mask)


def step_scores(
    backend: ConditionalBackend,
    task: GapTask,
    hyp: Hypothesis,
    position: int,
    mode: ScoringMode,
) -> np.ndarray:
    """Score every vocabulary token for filling ``position`` next.

    Returns a dense length-V vector; the search restricts candidates to
    content tokens afterwards.  Exactly one backend call per invocation,
    whatever the mode.
    """
    if position in hyp.positions or position not in task.gap_positions:
        raise InvalidQuery(f"position {position} is not an unfilled gap position")
    vocab = backend.vocab

    if mode.kind is ScoringKind.HCB_PIVOT:
        pivot = mode.pivot
        if pivot is None or len(pivot) != task.gap_length:
            raise ConfigError("pivot length must equal gap length")
        for tok in pivot:
            if not 0 <= tok < vocab.size:
                raise ConfigError(f"pivot token {tok} outside vocabulary")
        seq = list(realize(task, hyp, pivot))
        gap_index = task.gap_positions.index(position)
        if mode.query_holds_mask:
            seq[position] = vocab.mask_id
        dist = backend.conditionals(seq, position)
        return dist.logp - float(dist.logp[pivot[gap_index]])

    seq = realize(task, hyp, vocab.mask_id)
    dist = backend.conditionals(seq, position)
    if mode.kind is ScoringKind.STANDARD:
        return dist.logp.copy()
    # HCB_MASK: reading the mask entry goes through the backend hook so
    # ablation wrappers can intercept it.
    return dist.logp - backend.correction_logp(seq, dist)
