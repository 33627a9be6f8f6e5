"""Brute-force ground truth and residual diagnostics.

Everything here is computed directly from an explicit joint table or from
raw backend calls, with no dependency on the search or scoring modules.
The engine is tested against these functions, never the other way around.
"""

from __future__ import annotations

from dataclasses import dataclass
from itertools import product
from typing import Sequence

import numpy as np

from beamfill.backends import ConditionalBackend, ExactMarginalModel, JointTable
from beamfill.errors import InvalidInput, TooLarge
from beamfill.kernels import logsumexp, marginal_logcond
from beamfill.seqcore import GapTask

ENUM_LIMIT = 10**6


@dataclass(frozen=True)
class ResidualReport:
    """Aggregate diagnostics for the two soundness assumptions.

    ci_mean / ci_max: absolute nats by which a backend's conditional under
    a masked realization deviates from the exact mask-marginalized
    conditional.  pivot_spread: max over candidate completions of the
    (max - min) across pivots of mean-centered pivot-relative scores;
    zero means the pivot choice cannot change any ranking.
    """

    ci_mean: float
    ci_max: float
    pivot_spread: float

    def __post_init__(self) -> None:
        for field in ("ci_mean", "ci_max", "pivot_spread"):
            if getattr(self, field) < 0.0:
                raise ValueError(f"{field} must be nonnegative")


def enumerate_gap(
    joint: JointTable, task: GapTask
) -> list[tuple[tuple[int, ...], float]]:
    """Exact posterior over every completion of the gap, best first.

    Returns (span, log p(span | observed context)) for all A**gap spans,
    sorted by log-probability descending with ties broken by span
    lexicographically ascending, the same tie-break the engine uses.
    """
    if task.n != joint.length:
        raise InvalidInput("task length must match joint length")
    gap = task.gap_length
    total = joint.alphabet**gap
    if total > ENUM_LIMIT:
        raise TooLarge(f"{total} completions exceeds enumeration limit {ENUM_LIMIT}")

    spans = list(product(range(joint.alphabet), repeat=gap))
    seq = list(task.tokens)
    scores = np.empty(total)
    for row, span in enumerate(spans):
        for p, tok in zip(task.gap_positions, span):
            seq[p] = tok
        scores[row] = joint.logprob(seq)
    scores -= logsumexp(scores)
    ranked = sorted(zip(spans, scores.tolist()), key=lambda it: (-it[1], it[0]))
    return ranked


def full_context_logcond(
    joint: JointTable, sequence: Sequence[int], position: int
) -> np.ndarray:
    """log p(v | all other positions observed), length-A vector."""
    obs = np.asarray(sequence, dtype=np.int64).copy()
    obs[position] = -1
    return marginal_logcond(joint.logp, obs, position, joint.alphabet)


def hcb_identity_check(
    joint: JointTable, x: Sequence[int], y: Sequence[int]
) -> float:
    """Residual of the telescoping ratio identity, in nats.

    |log p(x) - log p(y) - sum_i [log p(x_i | x_:i, y_i+1:)
                                  - log p(y_i | x_:i, y_i+1:)]|

    The identity is algebraic, so the residual is floating-point noise on
    any full-support joint.
    """
    x = [int(t) for t in x]
    y = [int(t) for t in y]
    if len(x) != joint.length or len(y) != joint.length:
        raise InvalidInput("sequences must match joint length")
    direct = joint.logprob(x) - joint.logprob(y)
    telescoped = 0.0
    for i in range(joint.length):
        hybrid = x[:i] + [y[i]] + y[i + 1 :]
        cond = full_context_logcond(joint, hybrid, i)
        telescoped += float(cond[x[i]] - cond[y[i]])
    return abs(direct - telescoped)


def _content_logcond(backend: ConditionalBackend, context: Sequence[int], position: int) -> np.ndarray:
    """Backend conditional restricted to content tokens and renormalized.

    Restricting before comparing cancels any constant mask mass, so exact
    backends compare as exactly equal regardless of the mixture weight.
    """
    dist = backend.conditionals(context, position)
    content = dist.logp[np.array(backend.vocab.content_ids)]
    return content - logsumexp(content)


def ci_residual(
    backend: ConditionalBackend,
    reference: ExactMarginalModel,
    tasks: Sequence[GapTask],
) -> tuple[float, float]:
    """Mean and max violation of masks-carry-no-information, in nats.

    For every task and every gap position, queries the backend on the
    task's masked realization and compares, token by token over content,
    against the reference conditional that marginalizes the masked
    positions instead of conditioning on them.
    """
    if backend.vocab is not reference.vocab and backend.vocab != reference.vocab:
        raise InvalidInput("backend and reference must share a vocabulary")
    diffs: list[float] = []
    for task in tasks:
        if task.n != reference.joint.length:
            raise InvalidInput("task length must match reference length")
        for position in task.gap_positions:
            got = _content_logcond(backend, task.tokens, position)
            want = reference.content_conditional(task.tokens, position)
            diffs.extend(np.abs(got - want).tolist())
    if not diffs:
        return 0.0, 0.0
    arr = np.asarray(diffs)
    return float(arr.mean()), float(arr.max())


def pivot_relative_scores(
    backend: ConditionalBackend,
    task: GapTask,
    pivot: Sequence[int],
    completions: Sequence[Sequence[int]],
) -> np.ndarray:
    """Telescoped log p(x)/p(pivot) for each completion, filled left to right.

    At step i the realization carries the completion before the query
    position and the pivot at it and after it, so numerator and
    denominator come from one backend call and any constant factors in
    the conditionals cancel.
    """
    positions = task.gap_positions
    pivot = [int(t) for t in pivot]
    if len(pivot) != len(positions):
        raise InvalidInput("pivot must have gap length")
    out = np.empty(len(completions))
    for row, completion in enumerate(completions):
        completion = [int(t) for t in completion]
        seq = list(task.tokens)
        for p, tok in zip(positions, pivot):
            seq[p] = tok
        score = 0.0
        for i, p in enumerate(positions):
            dist = backend.conditionals(seq, p)
            score += float(dist.logp[completion[i]] - dist.logp[pivot[i]])
            seq[p] = completion[i]
        out[row] = score
    return out


def pivot_spread(
    backend: ConditionalBackend,
    task: GapTask,
    pivots: Sequence[Sequence[int]],
    completions: Sequence[Sequence[int]],
) -> float:
    """Worst-case disagreement of pivot-relative score vectors.

    Each pivot's scores are defined only up to an additive constant, so
    every vector is mean-centered before comparison.  The return is the
    max over completions of (max - min) across pivots; zero certifies
    that ranking by these scores does not depend on the pivot.
    """
    if not pivots or not completions:
        raise InvalidInput("need at least one pivot and one completion")
    centered = []
    for pivot in pivots:
        scores = pivot_relative_scores(backend, task, pivot, completions)
        centered.append(scores - scores.mean())
    stacked = np.stack(centered)
    return float((stacked.max(axis=0) - stacked.min(axis=0)).max())
