"""
Soft, hard and weighted voting over member probability matrices.

Argmax ties resolve to the lowest class index. Hard-vote ties between equally
voted classes go to the class with the higher mean probability first.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence, Tuple

import numpy as np

from fens.core.errors import EnsembleError

from .matrix import MatrixLike, stack_members

VOTING = ("soft", "hard", "weighted")
WEIGHT_SUM_TOLERANCE = 1e-9
# scores this close to the row maximum count as tied
TIE_RTOL = 1e-12


def first_argmax(scores: np.ndarray) -> np.ndarray:
    """
    Row-wise argmax, lowest index among near-equal maxima.
    """
    top = scores.max(axis=1, keepdims=True)
    slack = TIE_RTOL * np.maximum(1.0, np.abs(top))
    return np.argmax(scores >= top - slack, axis=1)


def _combine(stack: np.ndarray, weights: Sequence[float]) -> np.ndarray:
    combined = np.zeros(stack.shape[1:], dtype=np.float64)
    for w, member in zip(weights, stack):
        combined += w * member
    return combined


def normalize_weights(scores: Sequence[float]) -> np.ndarray:
    values = np.asarray(scores, dtype=np.float64)
    if values.ndim != 1 or values.size == 0:
        raise EnsembleError("need at least one validation score")
    if (values < 0).any():
        raise EnsembleError("validation scores must be non-negative")
    total = values.sum()
    if total <= 0:
        raise EnsembleError("validation scores are all zero; weights are undefined")
    return values / total


def check_weights(weights: Sequence[float], members: int) -> np.ndarray:
    w = np.asarray(weights, dtype=np.float64)
    if w.shape != (members,):
        raise EnsembleError(f"{w.size} weights for {members} members", details={"weights": int(w.size), "members": members})
    if (w < 0).any() or abs(float(w.sum()) - 1.0) > WEIGHT_SUM_TOLERANCE:
        raise EnsembleError("weights must be non-negative and sum to 1")
    return w


def weighted_vote(members: Sequence[MatrixLike], weights: Sequence[float]) -> np.ndarray:
    stack = stack_members(members)
    w = check_weights(weights, stack.shape[0])
    return first_argmax(_combine(stack, w))


def soft_vote(members: Sequence[MatrixLike]) -> np.ndarray:
    stack = stack_members(members)
    uniform = np.full(stack.shape[0], 1.0 / stack.shape[0])
    return first_argmax(_combine(stack, uniform))


def hard_vote(members: Sequence[MatrixLike]) -> np.ndarray:
    stack = stack_members(members)
    m, n, c = stack.shape
    votes = np.zeros((n, c), dtype=np.int64)
    rows = np.arange(n)
    for member in stack:
        votes[rows, first_argmax(member)] += 1
    mean = _combine(stack, np.full(m, 1.0 / m))
    leaders = votes == votes.max(axis=1, keepdims=True)
    # non-leading classes can never win the tie-break
    masked = np.where(leaders, mean, -np.inf)
    return first_argmax(masked)


def vote(strategy: str, members: Sequence[MatrixLike], weights: Optional[Sequence[float]] = None) -> np.ndarray:
    if strategy == "soft":
        return soft_vote(members)
    if strategy == "hard":
        return hard_vote(members)
    if strategy == "weighted":
        if weights is None:
            raise EnsembleError("weighted voting needs weights")
        return weighted_vote(members, weights)
    raise EnsembleError(f"unknown voting strategy {strategy!r}", details={"known": list(VOTING)})


@dataclass(frozen=True)
class EnsembleSpec:
    members: Tuple[str, ...]
    strategy: str
    weights: Optional[Tuple[float, ...]] = None
    name: str = ""

    def __post_init__(self) -> None:
        if not self.members:
            raise EnsembleError("an ensemble needs at least one member")
        if self.strategy not in VOTING:
            raise EnsembleError(f"unknown voting strategy {self.strategy!r}")
        if (self.weights is not None) != (self.strategy == "weighted"):
            raise EnsembleError("weights are present exactly when the strategy is weighted")
        if self.weights is not None:
            check_weights(self.weights, len(self.members))

    def to_dict(self):
        return {
            "name": self.name,
            "members": list(self.members),
            "strategy": self.strategy,
            "weights": list(self.weights) if self.weights is not None else None,
        }
