"""Sampling baselines with beam-matched backend-call budgets.

``B`` independent candidates each fill the gap left to right, drawing
every token from a (possibly transformed) conditional, so a run costs
exactly ``B`` backend calls per gap position, the same scoring-call
budget as a beam of size ``B``.

Candidates never interact.  Randomness is derived per (seed, candidate,
step), so results are identical whatever the execution order.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np

from beamfill.backends import ConditionalBackend
from beamfill.errors import ConfigError
from beamfill.kernels import logsumexp
from beamfill.seqcore import CondDistribution, GapTask, NEG_FLOOR


class SamplerKind(Enum):
    PURE = "pure"
    TEMPERATURE = "temperature"
    NUCLEUS = "nucleus"


@dataclass(frozen=True)
class SamplerConfig:
    kind: SamplerKind = SamplerKind.PURE
    temperature: float = 1.0
    top_p: float = 1.0
    num_candidates: int = 1
    seed: int = 0

    def __post_init__(self) -> None:
        if self.temperature <= 0.0:
            raise ConfigError("temperature must be positive")
        if not 0.0 < self.top_p <= 1.0:
            raise ConfigError("top_p must lie in (0, 1]")
        if self.num_candidates < 1:
            raise ConfigError("need at least one candidate")


def transform(dist: CondDistribution, cfg: SamplerConfig) -> CondDistribution:
    """Apply the sampler's distribution transform.

    Pure is the identity.  Temperature rescales log-probabilities by 1/T
    and renormalizes.  Nucleus keeps the smallest descending-probability
    prefix with cumulative mass >= top_p, renormalizes over it, and
    floors everything else.
    """
    if cfg.kind is SamplerKind.PURE:
        return dist
    if cfg.kind is SamplerKind.TEMPERATURE:
        if cfg.temperature == 1.0:
            return dist
        scaled = dist.logp / cfg.temperature
        return CondDistribution(scaled - logsumexp(scaled))
    # nucleus
    if cfg.top_p == 1.0:
        return dist
    order = np.lexsort((np.arange(len(dist)), -dist.logp))
    cum = np.cumsum(np.exp(dist.logp[order]))
    keep_count = int(np.searchsorted(cum, cfg.top_p, side="left")) + 1
    kept = order[:keep_count]
    out = np.full(len(dist), NEG_FLOOR)
    out[kept] = dist.logp[kept] - logsumexp(dist.logp[kept])
    return CondDistribution(out)


def _candidate_rng(cfg: SamplerConfig, candidate: int, step: int) -> np.random.Generator:
    base = cfg.seed & 0xFFFFFFFFFFFFFFFF
    return np.random.default_rng(np.random.SeedSequence([base, candidate, step]))


def sample_infill(
    backend: ConditionalBackend,
    task: GapTask,
    cfg: SamplerConfig,
) -> list[tuple[tuple[int, ...], float]]:
    """Draw ``num_candidates`` gap completions.

    Every candidate is reported (duplicates and all), ranked by its
    cumulative log-probability under the untransformed conditionals; any
    deduplication is the caller's reporting concern.  Only content
    tokens can be drawn.
    """
    vocab = backend.vocab
    task.check_against(vocab)
    content = np.array(vocab.content_ids)
    results: list[tuple[tuple[int, ...], float]] = []

    for cand in range(cfg.num_candidates):
        seq = list(task.tokens)
        score = 0.0
        for step, position in enumerate(task.gap_positions):
            dist = backend.conditionals(seq, position)
            restricted = dist.logp[content]
            base = CondDistribution(restricted - logsumexp(restricted))
            probs = np.exp(transform(base, cfg).logp)
            probs /= probs.sum()
            rng = _candidate_rng(cfg, cand, step)
            tok = int(content[rng.choice(len(content), p=probs)])
            score += float(dist.logp[tok])
            seq[position] = tok
        results.append((tuple(seq), score))

    results.sort(key=lambda it: (-it[1], it[0]))
    return results
