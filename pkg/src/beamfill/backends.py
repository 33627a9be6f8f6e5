"""Conditional-distribution providers.

Four in-process backends share one contract: given a full-length token
sequence and a position, return a normalized log-distribution over the
whole vocabulary for that position.

* :class:`ExactMarginalModel`: Bayes-exact conditionals of an explicit
  joint table, the ground-truth regime where the mask token carries no
  information and its probability is a context-independent constant.
* :class:`EmpiricalMaskedEstimator`: count-based conditionals fitted from
  randomly masked samples, converging to the exact marginals as the
  sample budget grows.
* :class:`PerturbedModel`: the exact model with a deterministic
  hash-driven distortion applied only to mask-containing contexts,
  breaking the mask-carries-no-information property on demand.
* The HTTP client for real masked LMs lives in :mod:`beamfill.remote`.

All in-process backends are immutable after construction and thread-safe.
"""

from __future__ import annotations

import hashlib
import struct
from abc import ABC, abstractmethod
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from beamfill.errors import InvalidInput, InvalidQuery
from beamfill.kernels import logsumexp, marginal_logcond
from beamfill.seqcore import CondDistribution, Vocab

DEFAULT_MASK_MASS = 1e-4


class ConditionalBackend(ABC):
    """Contract: a deterministic map from (context, position) to a
    normalized distribution over the full vocabulary."""

    vocab: Vocab
    name: str

    @abstractmethod
    def conditionals(self, context: Sequence[int], position: int) -> CondDistribution:
        """Distribution at ``position`` given ``context``.

        What occupies the queried slot in ``context`` may or may not
        matter; exact backends ignore it by construction, a real MLM
        attends to it.  Callers control the slot via the realization.
        """

    def correction_logp(self, context: Sequence[int], dist: CondDistribution) -> float:
        """The mask log-probability read used by mask-corrected scoring.

        Wrappers (the ablations) override this; plain backends just read
        the mask entry of the distribution they already produced, so the
        correction costs no extra backend call.
        """
        return float(dist.logp[self.vocab.mask_id])


def flat_index(sequence: Sequence[int], alphabet: int) -> int:
    """Row-major flat index of a content-token sequence."""
    idx = 0
    for tok in sequence:
        idx = idx * alphabet + int(tok)
    return idx


@dataclass(frozen=True)
class JointTable:
    """Explicit full-support joint over fixed-length content sequences.

    ``logp`` is a flat row-major vector of ``alphabet**length`` entries
    normalized to logsumexp 0.  Entries may sit at the log-0 floor but
    never at -inf, keeping every conditional well-defined.
    """

    alphabet: int
    length: int
    logp: np.ndarray

    def __post_init__(self) -> None:
        arr = np.asarray(self.logp, dtype=np.float64).reshape(-1)
        if self.alphabet < 2 or self.length < 1:
            raise ValueError("need alphabet >= 2 and length >= 1")
        if arr.shape[0] != self.alphabet**self.length:
            raise ValueError("table size must be alphabet**length")
        if not np.all(np.isfinite(arr)):
            raise ValueError("joint table entries must be finite")
        total = logsumexp(arr)
        if abs(total) > 1e-9:
            raise ValueError(f"joint table not normalized: logsumexp={total:.3e}")
        arr = arr.copy()
        arr.flags.writeable = False
        object.__setattr__(self, "logp", arr)

    @classmethod
    def uniform(cls, alphabet: int, length: int) -> "JointTable":
        size = alphabet**length
        return cls(alphabet, length, np.full(size, -np.log(size)))

    @classmethod
    def random(
        cls, alphabet: int, length: int, rng: np.random.Generator, scale: float = 1.0
    ) -> "JointTable":
        """Gaussian log-potentials; ``scale`` controls concentration."""
        raw = rng.normal(0.0, scale, size=alphabet**length)
        return cls(alphabet, length, raw - logsumexp(raw))

    @classmethod
    def point_mass(cls, alphabet: int, length: int, sequence: Sequence[int]) -> "JointTable":
        """All mass on one sequence; everything else at the log-0 floor."""
        from beamfill.seqcore import NEG_FLOOR

        table = np.full(alphabet**length, NEG_FLOOR)
        table[flat_index(sequence, alphabet)] = 0.0
        return cls(alphabet, length, table)

    def logprob(self, sequence: Sequence[int]) -> float:
        if len(sequence) != self.length:
            raise InvalidQuery("sequence length mismatch")
        return float(self.logp[flat_index(sequence, self.alphabet)])

    def sample(self, rng: np.random.Generator, size: int) -> np.ndarray:
        """Draw ``size`` sequences; returns an int array of shape (size, length)."""
        probs = np.exp(self.logp)
        probs = probs / probs.sum()
        flat = rng.choice(probs.shape[0], size=size, p=probs)
        digits = np.empty((size, self.length), dtype=np.int64)
        rem = flat
        for p in range(self.length - 1, -1, -1):
            digits[:, p] = rem % self.alphabet
            rem = rem // self.alphabet
        return digits


def _check_exact_vocab(vocab: Vocab, alphabet: int) -> None:
    if vocab.content_ids != tuple(range(alphabet)) or vocab.size != alphabet + 1:
        raise InvalidInput(
            "exact backends need content ids 0..A-1 plus a single trailing mask "
            "(use Vocab.toy)"
        )


class ExactMarginalModel(ConditionalBackend):
    """Bayes-exact conditionals of a joint table, with constant mask mass.

    Content tokens share ``1 - mask_mass`` in proportion to the exact
    marginal conditional given the observed (content) positions of the
    context; the mask token always gets exactly ``mask_mass``.  Mask
    tokens in the context are treated as unobserved, so inserting masks
    never changes the content conditionals, the regime in which plain
    per-position scoring is provably sound.

    The truth-level conditionals give the mask zero probability (it is
    never a label); the explicit mixture keeps log p(mask | ·) finite for
    mask-corrected scoring while, being constant, preserving all rankings.
    """

    def __init__(
        self, vocab: Vocab, joint: JointTable, mask_mass: float = DEFAULT_MASK_MASS
    ) -> None:
        if not 0.0 < mask_mass < 1.0:
            raise ValueError("mask_mass must lie in (0, 1)")
        _check_exact_vocab(vocab, joint.alphabet)
        self.vocab = vocab
        self.joint = joint
        self.mask_mass = float(mask_mass)
        self.name = "exact"
        self._log_keep = float(np.log1p(-self.mask_mass))
        self._log_mask = float(np.log(self.mask_mass))

    def _observation_vector(self, context: Sequence[int], position: int) -> np.ndarray:
        if len(context) != self.joint.length:
            raise InvalidQuery(
                f"context length {len(context)} != model length {self.joint.length}"
            )
        if not 0 <= position < self.joint.length:
            raise InvalidQuery(f"position {position} out of range")
        obs = np.empty(self.joint.length, dtype=np.int64)
        for p, tok in enumerate(context):
            tok = int(tok)
            if not 0 <= tok < self.vocab.size:
                raise InvalidQuery(f"token id {tok} out of vocabulary range")
            obs[p] = tok if tok < self.joint.alphabet else -1
        obs[position] = -1
        return obs

    def content_conditional(self, context: Sequence[int], position: int) -> np.ndarray:
        """Length-A normalized log-conditional over content tokens only."""
        obs = self._observation_vector(context, position)
        return marginal_logcond(self.joint.logp, obs, position, self.joint.alphabet)

    def conditionals(self, context: Sequence[int], position: int) -> CondDistribution:
        content = self.content_conditional(context, position)
        out = np.empty(self.vocab.size)
        out[: self.joint.alphabet] = content + self._log_keep
        out[self.vocab.mask_id] = self._log_mask
        return CondDistribution(out)


class EmpiricalMaskedEstimator(ConditionalBackend):
    """Count-based conditionals keyed by the exact masked context.

    Queries whose (masked sequence, position) key was seen during fitting
    return additive-smoothed relative frequencies; unseen contexts fall
    back to the uniform distribution over content tokens.  No
    generalization across contexts is attempted: at toy scale the context
    space is enumerable, and exact keying makes the loss-minimizer
    argument literal.
    """

    def __init__(
        self,
        vocab: Vocab,
        length: int,
        counts: Mapping[tuple[tuple[int, ...], int], np.ndarray],
        mask_rate: float,
        smoothing: float = 0.5,
        mask_mass: float = DEFAULT_MASK_MASS,
        num_samples: int = 0,
    ) -> None:
        if smoothing <= 0.0:
            raise ValueError("smoothing must be positive to guarantee full support")
        _check_exact_vocab(vocab, vocab.size - 1)
        self.vocab = vocab
        self.length = length
        self.counts = dict(counts)
        self.mask_rate = float(mask_rate)
        self.smoothing = float(smoothing)
        self.mask_mass = float(mask_mass)
        self.num_samples = int(num_samples)
        self.name = "empirical"
        self._alphabet = vocab.size - 1
        self._log_keep = float(np.log1p(-self.mask_mass))
        self._log_mask = float(np.log(self.mask_mass))
        self._uniform = np.full(self._alphabet, -np.log(self._alphabet))

    def content_conditional(self, context: Sequence[int], position: int) -> np.ndarray:
        if len(context) != self.length:
            raise InvalidQuery(f"context length {len(context)} != {self.length}")
        if not 0 <= position < self.length:
            raise InvalidQuery(f"position {position} out of range")
        key = (tuple(int(t) for t in context), int(position))
        cell = self.counts.get(key)
        if cell is None:
            return self._uniform
        smoothed = cell + self.smoothing
        return np.log(smoothed) - np.log(smoothed.sum())

    def conditionals(self, context: Sequence[int], position: int) -> CondDistribution:
        content = self.content_conditional(context, position)
        out = np.empty(self.vocab.size)
        out[: self._alphabet] = content + self._log_keep
        out[self.vocab.mask_id] = self._log_mask
        return CondDistribution(out)


def fit_empirical(
    corpus: np.ndarray,
    vocab: Vocab,
    mask_rate: float,
    num_samples: int,
    seed: int = 0,
    smoothing: float = 0.5,
    mask_mass: float = DEFAULT_MASK_MASS,
) -> EmpiricalMaskedEstimator:
    """Fit the masked estimator from a corpus of content sequences.

    Each of ``num_samples`` draws picks a corpus row (with replacement),
    masks every position independently with probability ``mask_rate``, and
    for every masked position credits the true token under the key
    (masked sequence, position), the empirical analogue of minimizing the
    standard masked-prediction loss.
    """
    corpus = np.asarray(corpus, dtype=np.int64)
    if corpus.ndim != 2 or corpus.shape[0] == 0:
        raise InvalidInput("corpus must be a nonempty (rows, length) array")
    if not 0.0 < mask_rate < 1.0:
        raise InvalidInput("mask_rate must lie in (0, 1)")
    if num_samples < 0:
        raise InvalidInput("num_samples must be nonnegative")
    alphabet = vocab.size - 1
    _check_exact_vocab(vocab, alphabet)
    if corpus.max(initial=0) >= alphabet or corpus.min(initial=0) < 0:
        raise InvalidInput("corpus must contain content token ids only")

    length = corpus.shape[1]
    counts: dict[tuple[tuple[int, ...], int], np.ndarray] = {}
    rng = np.random.default_rng(seed)
    if num_samples > 0:
        rows = rng.integers(0, corpus.shape[0], size=num_samples)
        mask = rng.random((num_samples, length)) < mask_rate
        for r, masked in zip(rows, mask):
            if not masked.any():
                continue
            seq = corpus[r]
            key_seq = tuple(
                vocab.mask_id if masked[p] else int(seq[p]) for p in range(length)
            )
            for p in np.nonzero(masked)[0]:
                cell = counts.get((key_seq, int(p)))
                if cell is None:
                    cell = np.zeros(alphabet)
                    counts[(key_seq, int(p))] = cell
                cell[seq[p]] += 1.0
    return EmpiricalMaskedEstimator(
        vocab=vocab,
        length=length,
        counts=counts,
        mask_rate=mask_rate,
        smoothing=smoothing,
        mask_mass=mask_mass,
        num_samples=num_samples,
    )


class PerturbedModel(ConditionalBackend):
    """Exact conditionals distorted only where the context contains masks.

    For mask-free contexts the output equals the base model exactly.  For
    mask-containing contexts, every content log-probability is shifted by
    ``strength * g(token, context)`` and the mask mass is rescaled by
    ``exp(strength * g(mask, context))`` before renormalization, where
    ``g`` maps a 64-bit keyed hash into [-1, 1].  The distortion is
    deterministic, seedable, and context-sensitive, enough to break the
    masks-carry-no-information property without training anything.
    """

    def __init__(self, base: ExactMarginalModel, strength: float, seed: int = 0) -> None:
        if strength < 0.0:
            raise ValueError("strength must be nonnegative")
        self.base = base
        self.vocab = base.vocab
        self.strength = float(strength)
        self.seed = int(seed)
        self.name = "perturbed"
        self._key = struct.pack("<q", self.seed)

    def _gains(self, context: Sequence[int]) -> np.ndarray:
        ctx_digest = hashlib.blake2b(
            struct.pack(f"<{len(context)}i", *[int(t) for t in context]),
            key=self._key,
            digest_size=16,
        ).digest()
        out = np.empty(self.vocab.size)
        for tok in range(self.vocab.size):
            h = hashlib.blake2b(
                ctx_digest + struct.pack("<i", tok), digest_size=8
            ).digest()
            out[tok] = 2.0 * (int.from_bytes(h, "little") / 0xFFFFFFFFFFFFFFFF) - 1.0
        return out

    def conditionals(self, context: Sequence[int], position: int) -> CondDistribution:
        base_dist = self.base.conditionals(context, position)
        if self.strength == 0.0 or all(
            int(t) != self.vocab.mask_id for t in context
        ):
            return base_dist
        shifted = base_dist.logp + self.strength * self._gains(context)
        return CondDistribution(shifted - logsumexp(shifted))


class CallCountingBackend(ConditionalBackend):
    """Transparent wrapper counting backend queries.

    Used by the budget checks: a query is one ``conditionals`` call;
    reading the mask correction off an already-produced distribution is
    free and therefore not counted.
    """

    def __init__(self, inner: ConditionalBackend) -> None:
        self.inner = inner
        self.vocab = inner.vocab
        self.name = f"counted({inner.name})"
        self.calls = 0

    def conditionals(self, context: Sequence[int], position: int) -> CondDistribution:
        self.calls += 1
        return self.inner.conditionals(context, position)

    def correction_logp(self, context: Sequence[int], dist: CondDistribution) -> float:
        return self.inner.correction_logp(context, dist)

    def reset(self) -> None:
        self.calls = 0
