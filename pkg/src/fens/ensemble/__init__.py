"""
Voting ensembles over member probability matrices and classification metrics.
"""

from .combos import (
    MODES,
    Combination,
    best_ens_search,
    ensemble_spec,
    enumerate_combinations,
    evaluate_combination,
    member_weights,
)
from .matrix import MemberRecord, ProbabilityMatrix, read_manifest, write_manifest
from .metrics import MetricsRow, compute_metrics
from .voting import VOTING, EnsembleSpec, hard_vote, normalize_weights, soft_vote, vote, weighted_vote

__all__ = [
    "MODES",
    "VOTING",
    "Combination",
    "EnsembleSpec",
    "MemberRecord",
    "MetricsRow",
    "ProbabilityMatrix",
    "best_ens_search",
    "compute_metrics",
    "ensemble_spec",
    "enumerate_combinations",
    "evaluate_combination",
    "hard_vote",
    "member_weights",
    "normalize_weights",
    "read_manifest",
    "soft_vote",
    "vote",
    "weighted_vote",
    "write_manifest",
]
