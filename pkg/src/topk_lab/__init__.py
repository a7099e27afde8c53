"""Top-k grouping and transition losses, from-scratch softmax classifiers,
and synthetic circle-mixture experiments on top-1 / top-k trade-offs."""

from topk_lab.core import (
    InvalidInputError,
    OracleFailureError,
    RngStream,
    derive_seed,
    finite_diff_gradient,
    rank_descending,
    seeded_rng,
    softmax,
)
from topk_lab.losses import (
    KlDecomposition,
    LossResult,
    ce_kl_decomposition,
    ce_loss,
    grouping_loss,
    one_hot,
    transition_loss,
)
from topk_lab.metrics import AccuracyCurve, accuracy_curve, topk_error, topk_prediction

__version__ = "0.1.0"

__all__ = [
    "AccuracyCurve",
    "InvalidInputError",
    "KlDecomposition",
    "LossResult",
    "OracleFailureError",
    "RngStream",
    "accuracy_curve",
    "ce_kl_decomposition",
    "ce_loss",
    "derive_seed",
    "finite_diff_gradient",
    "grouping_loss",
    "one_hot",
    "rank_descending",
    "seeded_rng",
    "softmax",
    "topk_error",
    "topk_prediction",
    "transition_loss",
]
