"""Vocabulary, gap tasks, normalized distributions, and partial infills.

Shared data layer for the infilling engine.  Everything here is immutable
after construction and safe to share across threads without locking.
Probabilities live in log domain throughout; linear-domain values exist
only transiently inside log-sum-exp reductions, because products of a few
small per-step probabilities underflow linearly.

Token ids, never strings, flow through the engine.  The string side of a
vocabulary matters only at the harness and server boundary.
"""

from __future__ import annotations

import string
from dataclasses import dataclass, field
from typing import Mapping, Sequence, Union

import numpy as np

from beamfill.errors import ConfigError, InvalidDistribution, InvalidToken
from beamfill.kernels import logsumexp

#: Stand-in for log(0).  exp() of it underflows to exactly 0.0, while sums
#: of a handful of floors stay comfortably finite.
NEG_FLOOR = -1.0e9

#: Tolerance on |logsumexp(logp)| for a vector to count as normalized.
NORM_TOL = 1e-9

MASK_TOKEN = "[MASK]"


@dataclass(frozen=True)
class Vocab:
    """Token inventory with contiguous integer ids and designated specials.

    Ids are positions in ``tokens``; ``mask_id`` must be one of the
    ``special_ids``.  Content ids (everything non-special) are the only
    candidates beam search and the samplers will ever emit.
    """

    tokens: tuple[str, ...]
    mask_id: int
    special_ids: frozenset[int]
    _content_ids: tuple[int, ...] = field(init=False, repr=False, compare=False)

    def __post_init__(self) -> None:
        if len(set(self.tokens)) != len(self.tokens):
            raise ValueError("token strings must be unique")
        if not 0 <= self.mask_id < len(self.tokens):
            raise ValueError("mask_id out of range")
        if self.mask_id not in self.special_ids:
            raise ValueError("mask_id must be flagged special")
        if any(not 0 <= i < len(self.tokens) for i in self.special_ids):
            raise ValueError("special id out of range")
        content = tuple(i for i in range(len(self.tokens)) if i not in self.special_ids)
        if not content:
            raise ValueError("vocabulary needs at least one content token")
        object.__setattr__(self, "_content_ids", content)

    @property
    def size(self) -> int:
        return len(self.tokens)

    @property
    def content_ids(self) -> tuple[int, ...]:
        """Ids of non-special tokens, ascending."""
        return self._content_ids

    def is_content(self, token: int) -> bool:
        return 0 <= token < len(self.tokens) and token not in self.special_ids

    @classmethod
    def toy(cls, alphabet: int) -> "Vocab":
        """Content tokens ``a..`` (or ``t<i>``) plus a single mask token.

        The mask gets the last id, so content ids are exactly
        ``0..alphabet-1``, the layout the exact backends require.
        """
        if alphabet < 1:
            raise ValueError("alphabet must be positive")
        if alphabet <= 26:
            names = tuple(string.ascii_lowercase[:alphabet])
        else:
            names = tuple(f"t{i}" for i in range(alphabet))
        return cls(
            tokens=names + (MASK_TOKEN,),
            mask_id=alphabet,
            special_ids=frozenset({alphabet}),
        )


@dataclass(frozen=True)
class GapTask:
    """A fixed-length sequence with one contiguous span of missing tokens.

    ``tokens`` holds the full sequence with mask ids in ``[start, stop)``;
    everything outside the span is given context.
    """

    tokens: tuple[int, ...]
    start: int
    stop: int

    def __post_init__(self) -> None:
        if not 0 <= self.start < self.stop <= len(self.tokens):
            raise ValueError(
                f"invalid span [{self.start}, {self.stop}) for length {len(self.tokens)}"
            )

    @property
    def n(self) -> int:
        return len(self.tokens)

    @property
    def gap_length(self) -> int:
        return self.stop - self.start

    @property
    def gap_positions(self) -> range:
        return range(self.start, self.stop)

    def check_against(self, vocab: Vocab) -> None:
        """Full invariant check: masks inside the span, content outside."""
        for pos, tok in enumerate(self.tokens):
            if not 0 <= tok < vocab.size:
                raise InvalidToken(f"token id {tok} at position {pos} out of range")
            inside = self.start <= pos < self.stop
            if inside and tok != vocab.mask_id:
                raise ValueError(f"gap position {pos} does not hold the mask token")
            if not inside and tok == vocab.mask_id:
                raise ValueError(f"context position {pos} holds the mask token")


def mask_out(
    sequence: Sequence[int], start: int, stop: int, vocab: Vocab
) -> tuple[GapTask, tuple[int, ...]]:
    """Mask ``[start, stop)`` of a full sequence; return the task and truth span."""
    seq = tuple(int(t) for t in sequence)
    truth = seq[start:stop]
    if any(t == vocab.mask_id for t in seq):
        raise InvalidToken("source sequence already contains mask tokens")
    masked = seq[:start] + (vocab.mask_id,) * (stop - start) + seq[stop:]
    return GapTask(tokens=masked, start=start, stop=stop), truth


@dataclass(frozen=True)
class CondDistribution:
    """Normalized log-probability vector over the full vocabulary.

    Construction validates the two invariants every consumer relies on:
    all entries finite (full support, with ``NEG_FLOOR`` standing in for
    log 0) and ``logsumexp == 0`` within ``NORM_TOL``.
    """

    logp: np.ndarray

    def __post_init__(self) -> None:
        arr = np.asarray(self.logp, dtype=np.float64)
        if arr.ndim != 1 or arr.shape[0] < 2:
            raise InvalidDistribution("logp must be a vector of length >= 2")
        if not np.all(np.isfinite(arr)):
            raise InvalidDistribution("log-probabilities must be finite")
        total = logsumexp(arr)
        if abs(total) > NORM_TOL:
            raise InvalidDistribution(f"logsumexp deviates from 0 by {total:.3e}")
        arr = arr.copy()
        arr.flags.writeable = False
        object.__setattr__(self, "logp", arr)

    def __len__(self) -> int:
        return int(self.logp.shape[0])

    def argmax(self) -> int:
        return int(np.argmax(self.logp))


def normalize(scores) -> CondDistribution:
    """Shift raw log-scores so they exponentiate-and-sum to one.

    The argmax is preserved and the operation is idempotent up to float
    round-off.  Callers must pre-floor any -inf entries (use NEG_FLOOR).
    """
    arr = np.asarray(scores, dtype=np.float64)
    if arr.ndim != 1 or arr.shape[0] < 2:
        raise ValueError("scores must be a vector of length >= 2")
    if not np.all(np.isfinite(arr)):
        raise InvalidDistribution("raw scores must be finite")
    return CondDistribution(arr - logsumexp(arr))


@dataclass(frozen=True)
class Hypothesis:
    """A partial infill: positions filled so far, in fill order, with the
    per-step score contributions recorded at fill time.

    ``score`` is the running left-fold of ``values``, so it is exactly
    recomputable from the recorded steps.
    """

    positions: tuple[int, ...] = ()
    tokens: tuple[int, ...] = ()
    values: tuple[float, ...] = ()
    score: float = 0.0

    @classmethod
    def empty(cls) -> "Hypothesis":
        return cls()

    @property
    def filled(self) -> Mapping[int, int]:
        return dict(zip(self.positions, self.tokens))

    @property
    def fill_order(self) -> tuple[int, ...]:
        return self.positions

    def extend(self, position: int, token: int, value: float) -> "Hypothesis":
        if position in self.positions:
            raise ValueError(f"position {position} already filled")
        return Hypothesis(
            positions=self.positions + (position,),
            tokens=self.tokens + (token,),
            values=self.values + (value,),
            score=self.score + value,
        )

    def unfilled(self, task: GapTask) -> tuple[int, ...]:
        taken = set(self.positions)
        return tuple(p for p in task.gap_positions if p not in taken)

    def recomputed_score(self) -> float:
        total = 0.0
        for v in self.values:
            total += v
        return total


FillerSpec = Union[int, Sequence[int]]


def realize(
    task: GapTask,
    hyp: Hypothesis,
    filler: FillerSpec,
    vocab: Vocab | None = None,
) -> tuple[int, ...]:
    """Materialize the full-length sequence for one backend query.

    Filled gap positions take the hypothesis's tokens; still-unfilled ones
    take ``filler``, the mask id for standard scoring, pivot tokens for
    pivot scoring.  ``filler`` may be a single id or a per-position
    sequence of gap length.  It is validated only where actually used, so
    a fully filled hypothesis ignores it entirely.
    """
    filled = dict(zip(hyp.positions, hyp.tokens))
    if not all(task.start <= p < task.stop for p in filled):
        raise ValueError("hypothesis fills positions outside the task's gap")

    if isinstance(filler, (int, np.integer)):
        fill_at = lambda pos: int(filler)  # noqa: E731
    else:
        fillers = tuple(int(t) for t in filler)
        if len(fillers) != task.gap_length:
            raise ConfigError(
                f"filler sequence length {len(fillers)} != gap length {task.gap_length}"
            )
        fill_at = lambda pos: fillers[pos - task.start]  # noqa: E731

    out = list(task.tokens)
    for pos in task.gap_positions:
        if pos in filled:
            out[pos] = filled[pos]
        else:
            tok = fill_at(pos)
            if vocab is not None and not 0 <= tok < vocab.size:
                raise InvalidToken(f"filler token {tok} out of vocabulary range")
            out[pos] = tok
    return tuple(out)
