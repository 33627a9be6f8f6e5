"""Gap infilling with masked conditional models.

Beam search over masked-out spans with three per-step scoring functions
(standard conditionals, mask-corrected, pivot-corrected), sampling
baselines under matched call budgets, exact brute-force oracles over
explicit joint tables, and an HTTP client for real masked LMs.
"""

from beamfill.backends import (
    CallCountingBackend,
    ConditionalBackend,
    EmpiricalMaskedEstimator,
    ExactMarginalModel,
    JointTable,
    PerturbedModel,
    fit_empirical,
)
from beamfill.errors import (
    BackendUnavailable,
    ConfigError,
    InfillError,
    InvalidDistribution,
    InvalidInput,
    InvalidQuery,
    InvalidToken,
    ProtocolError,
    TooLarge,
)
from beamfill.metrics import EvalRecord, bleu_k, top_k_hit
from beamfill.oracle import (
    ResidualReport,
    ci_residual,
    enumerate_gap,
    hcb_identity_check,
    pivot_spread,
)
from beamfill.sampling import SamplerConfig, SamplerKind, sample_infill, transform
from beamfill.scoring import ScoringKind, ScoringMode, step_scores
from beamfill.search import (
    BeamConfig,
    OrderPolicy,
    SearchStats,
    autoregressive_beam_search,
    infill_beam_search,
    select_next_position,
)
from beamfill.seqcore import (
    CondDistribution,
    GapTask,
    Hypothesis,
    MASK_TOKEN,
    NEG_FLOOR,
    Vocab,
    mask_out,
    normalize,
    realize,
)

__version__ = "0.1.0"

__all__ = [
    "BackendUnavailable",
    "BeamConfig",
    "CallCountingBackend",
    "ConditionalBackend",
    "CondDistribution",
    "ConfigError",
    "EmpiricalMaskedEstimator",
    "EvalRecord",
    "ExactMarginalModel",
    "GapTask",
    "Hypothesis",
    "InfillError",
    "InvalidDistribution",
    "InvalidInput",
    "InvalidQuery",
    "InvalidToken",
    "JointTable",
    "MASK_TOKEN",
    "NEG_FLOOR",
    "OrderPolicy",
    "PerturbedModel",
    "ProtocolError",
    "ResidualReport",
    "SamplerConfig",
    "SamplerKind",
    "ScoringKind",
    "ScoringMode",
    "SearchStats",
    "TooLarge",
    "Vocab",
    "autoregressive_beam_search",
    "bleu_k",
    "ci_residual",
    "enumerate_gap",
    "fit_empirical",
    "hcb_identity_check",
    "infill_beam_search",
    "mask_out",
    "normalize",
    "pivot_spread",
    "realize",
    "sample_infill",
    "select_next_position",
    "step_scores",
    "top_k_hit",
    "transform",
]
