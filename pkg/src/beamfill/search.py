"""Beam search over gap completions, with pluggable position order.

One search step expands every live hypothesis by every content token at
one unfilled position and keeps the top ``B`` by cumulative score.  The
position may be chosen left-to-right or by backend confidence
(best-to-worst), per hypothesis or shared across the beam.

All rankings use one total order: score descending, then the realized
gap span ascending, then the fill order ascending.  The tie-break makes
runs bit-reproducible and keeps the retained set well-defined under ties.
"""

from __future__ import annotations

import heapq
from dataclasses import dataclass, field
from enum import Enum
from typing import Optional

import numpy as np

from beamfill.backends import ConditionalBackend
from beamfill.errors import ConfigError
from beamfill.scoring import ScoringMode, step_scores
from beamfill.seqcore import GapTask, Hypothesis, Vocab, realize


class OrderPolicy(Enum):
    LEFT_TO_RIGHT = "ltr"
    BEST_TO_WORST = "b2w"


@dataclass(frozen=True)
class BeamConfig:
    """Search parameters.

    ``probe_with_mode``: score confidence probes with the active scoring
    mode instead of the standard masked realization.  Off by default so
    that runs differing only in scoring function visit the same orders.

    ``shared_order``: pick one position per step for the whole beam
    (highest confidence over all live hypotheses) instead of one per
    hypothesis.
    """

    beam_size: int
    mode: ScoringMode = field(default_factory=ScoringMode.standard)
    order: OrderPolicy = OrderPolicy.LEFT_TO_RIGHT
    probe_with_mode: bool = False
    shared_order: bool = False

    def __post_init__(self) -> None:
        if self.beam_size < 1:
            raise ConfigError("beam size must be at least 1")


@dataclass
class SearchStats:
    """Backend-call accounting for one search run.

    Scoring calls and confidence-probe calls are tracked separately; the
    budget comparisons against samplers use scoring calls only.
    """

    score_calls: int = 0
    probe_calls: int = 0
    live_per_step: list[int] = field(default_factory=list)


def _probe_confidence(
    backend: ConditionalBackend,
    task: GapTask,
    hyp: Hypothesis,
    position: int,
    cfg: Optional[BeamConfig],
) -> float:
    content = list(backend.vocab.content_ids)
    if cfg is not None and cfg.probe_with_mode:
        scores = step_scores(backend, task, hyp, position, cfg.mode)
        return float(np.max(scores[content]))
    dist = backend.conditionals(realize(task, hyp, backend.vocab.mask_id), position)
    return float(np.max(dist.logp[content]))


def select_next_position(
    backend: ConditionalBackend,
    task: GapTask,
    hyp: Hypothesis,
    order: OrderPolicy,
    cfg: Optional[BeamConfig] = None,
    stats: Optional[SearchStats] = None,
) -> int:
    """The unfilled position this hypothesis fills next.

    Best-to-worst probes each candidate position with one backend call
    and takes the one whose best content token is most probable, smallest
    index on ties.  A single remaining position is returned without
    probing.
    """
    unfilled = hyp.unfilled(task)
    if not unfilled:
        raise ConfigError("hypothesis is already complete")
    if order is OrderPolicy.LEFT_TO_RIGHT or len(unfilled) == 1:
        return unfilled[0]
    best_pos = unfilled[0]
    best_conf = -np.inf
    for position in unfilled:
        conf = _probe_confidence(backend, task, hyp, position, cfg)
        if stats is not None:
            stats.probe_calls += 1
        if conf > best_conf:
            best_conf = conf
            best_pos = position
    return best_pos


def _span_key(task: GapTask, hyp: Hypothesis, mask_id: int) -> tuple[int, ...]:
    by_pos = dict(zip(hyp.positions, hyp.tokens))
    return tuple(by_pos.get(p, mask_id) for p in task.gap_positions)


def _rank_key(task: GapTask, hyp: Hypothesis, mask_id: int):
    return (-hyp.score, _span_key(task, hyp, mask_id), hyp.fill_order)


def infill_beam_search(
    backend: ConditionalBackend,
    task: GapTask,
    cfg: BeamConfig,
    stats: Optional[SearchStats] = None,
) -> list[tuple[tuple[int, ...], float]]:
    """Fill the task's gap by beam search.

    Returns at most ``beam_size`` completed full sequences with their
    cumulative scores, best first.  Only content tokens are candidates;
    masks and specials never appear in an output.
    """
    vocab = backend.vocab
    task.check_against(vocab)
    content = list(vocab.content_ids)
    beam = [Hypothesis.empty()]

    for _ in range(task.gap_length):
        if cfg.shared_order:
            shared = _select_shared_position(backend, task, beam, cfg, stats)
        candidates: list[Hypothesis] = []
        for hyp in beam:
            if cfg.shared_order:
                position = shared
            else:
                position = select_next_position(
                    backend, task, hyp, cfg.order, cfg, stats
                )
            scores = step_scores(backend, task, hyp, position, cfg.mode)
            if stats is not None:
                stats.score_calls += 1
            for tok in content:
                candidates.append(hyp.extend(position, tok, float(scores[tok])))
        beam = heapq.nsmallest(
            cfg.beam_size, candidates, key=lambda h: _rank_key(task, h, vocab.mask_id)
        )
        if stats is not None:
            stats.live_per_step.append(len(beam))

    beam.sort(key=lambda h: _rank_key(task, h, vocab.mask_id))
    return [(realize(task, h, vocab.mask_id), h.score) for h in beam]


def _select_shared_position(
    backend: ConditionalBackend,
    task: GapTask,
    beam: list[Hypothesis],
    cfg: BeamConfig,
    stats: Optional[SearchStats],
) -> int:
    """One position for the whole step: the highest confidence any live
    hypothesis assigns to any candidate position, smallest index on ties.

    All hypotheses share a fill history under shared ordering, so the
    unfilled set is common to the beam.
    """
    unfilled = beam[0].unfilled(task)
    if len(unfilled) == 1 or cfg.order is OrderPolicy.LEFT_TO_RIGHT:
        return unfilled[0]
    best_pos = unfilled[0]
    best_conf = -np.inf
    for position in unfilled:
        for hyp in beam:
            conf = _probe_confidence(backend, task, hyp, position, cfg)
            if stats is not None:
                stats.probe_calls += 1
            if conf > best_conf:
                best_conf = conf
                best_pos = position
    return best_pos


def autoregressive_beam_search(
    backend: ConditionalBackend,
    length: int,
    beam_size: int,
    stats: Optional[SearchStats] = None,
) -> list[tuple[tuple[int, ...], float]]:
    """Left-to-right beam search over whole sequences.

    Equivalent to running the infilling search on an all-gap task with
    left-to-right order and standard scoring.
    """
    vocab = backend.vocab
    task = GapTask(tokens=(vocab.mask_id,) * length, start=0, stop=length)
    cfg = BeamConfig(beam_size=beam_size)
    return infill_beam_search(backend, task, cfg, stats=stats)
