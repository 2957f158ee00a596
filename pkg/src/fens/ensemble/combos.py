"""
Combination taxonomy (all / per-strategy / per-model / best) and Best-Ens search.
"""

from __future__ import annotations

import itertools
import logging
from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from fens.core.errors import EnsembleError
from fens.core.logs import log_event
from fens.zoo.model import STRATEGIES
from fens.zoo.spec import FAMILIES

from .matrix import MemberRecord
from .metrics import MetricsRow, compute_metrics
from .voting import EnsembleSpec, normalize_weights, vote

logger = logging.getLogger(__name__)

MODES = ("all", "per-strategy", "per-model", "best")
EXHAUSTIVE_LIMIT = 20
_GROUP_ORDER = {"strategy": STRATEGIES, "family": FAMILIES}


@dataclass(frozen=True)
class Combination:
    name: str
    members: Tuple[MemberRecord, ...]

    @property
    def member_ids(self) -> Tuple[str, ...]:
        return tuple(m.member_id for m in self.members)


def _check_pool(pool: Sequence[MemberRecord]) -> None:
    if not pool:
        raise EnsembleError("the member pool is empty")
    datasets = {m.dataset for m in pool}
    classes = {m.test.c for m in pool}
    if len(datasets) > 1 or len(classes) > 1:
        raise EnsembleError(
            "pool members must share dataset and class count",
            details={"datasets": sorted(datasets), "classes": sorted(classes)},
        )


def _grouped(pool: Sequence[MemberRecord], key: str, suffix: str) -> List[Combination]:
    groups: Dict[str, List[MemberRecord]] = {}
    for member in pool:
        groups.setdefault(getattr(member, key), []).append(member)
    label = (lambda k: k.upper()) if key == "strategy" else (lambda k: k)
    order = _GROUP_ORDER[key]
    ranked = sorted(groups.items(), key=lambda kv: (order.index(kv[0]) if kv[0] in order else len(order), kv[0]))
    return [Combination(f"{label(k)}-{suffix}", tuple(v)) for k, v in ranked]


def member_weights(members: Sequence[MemberRecord]) -> np.ndarray:
    return normalize_weights([m.val_score for m in members])


def ensemble_spec(combination: Combination, strategy: str) -> EnsembleSpec:
    weights = tuple(member_weights(combination.members)) if strategy == "weighted" else None
    return EnsembleSpec(members=combination.member_ids, strategy=strategy, weights=weights, name=combination.name)


def _predict(members: Sequence[MemberRecord], strategy: str, split: str) -> np.ndarray:
    matrices = [m.validation if split == "validation" else m.test for m in members]
    weights = member_weights(members) if strategy == "weighted" else None
    return vote(strategy, matrices, weights)


def _val_accuracy(members: Sequence[MemberRecord], strategy: str, labels: np.ndarray) -> float:
    return float(np.mean(_predict(members, strategy, "validation") == labels))


def best_ens_search(
    pool: Sequence[MemberRecord],
    strategy: str,
    val_labels: np.ndarray,
    min_size: int = 1,
    *,
    exhaustive_limit: int = EXHAUSTIVE_LIMIT,
) -> EnsembleSpec:
    """
    Subset of the pool (size >= min_size) with the highest validation
    accuracy. Ties go to the smaller subset, then to the lexicographically
    first sorted member-id tuple. Pools larger than `exhaustive_limit` use
    greedy forward selection.
    """
    _check_pool(pool)
    if min_size < 1 or min_size > len(pool):
        raise EnsembleError(f"min_size {min_size} must lie in [1, {len(pool)}]")
    labels = np.asarray(val_labels, dtype=np.int64)
    ordered = sorted(pool, key=lambda m: m.member_id)

    if len(ordered) <= exhaustive_limit:
        best, best_score, searched = None, -1.0, 0
        for size in range(min_size, len(ordered) + 1):
            for subset in itertools.combinations(ordered, size):
                searched += 1
                score = _val_accuracy(subset, strategy, labels)
                if score > best_score:
                    best, best_score = subset, score
        log_event(logger, "best_ens_done", level=logging.DEBUG, mode="exhaustive", searched=searched, score=best_score)
    else:
        best, best_score = _greedy(ordered, strategy, labels, min_size)
        log_event(logger, "best_ens_done", level=logging.DEBUG, mode="greedy", score=best_score)
    return ensemble_spec(Combination("Best-Ens", tuple(best)), strategy)


def _greedy(
    ordered: Sequence[MemberRecord], strategy: str, labels: np.ndarray, min_size: int
) -> Tuple[Tuple[MemberRecord, ...], float]:
    chosen: List[MemberRecord] = []
    taken: set = set()
    best: Tuple[MemberRecord, ...] = ()
    best_score = -1.0
    while len(chosen) < len(ordered):
        scored = [
            (_val_accuracy(chosen + [m], strategy, labels), m)
            for m in ordered
            if m.member_id not in taken
        ]
        top_score = max(s for s, _ in scored)
        pick = next(m for s, m in scored if s == top_score)
        chosen.append(pick)
        taken.add(pick.member_id)
        if len(chosen) < min_size:
            continue
        if top_score <= best_score:
            break
        best, best_score = tuple(chosen), top_score
    return tuple(sorted(best, key=lambda m: m.member_id)), best_score


def enumerate_combinations(
    pool: Sequence[MemberRecord],
    mode: str,
    *,
    voting: Optional[str] = None,
    val_labels: Optional[np.ndarray] = None,
    min_size: int = 1,
) -> List[Combination]:
    _check_pool(pool)
    if mode == "all":
        return [Combination("All-Ens", tuple(pool))]
    if mode == "per-strategy":
        return _grouped(pool, "strategy", "Ens")
    if mode == "per-model":
        return _grouped(pool, "family", "Ens")
    if mode == "best":
        if voting is None or val_labels is None:
            raise EnsembleError("best mode needs a voting strategy and validation labels")
        spec = best_ens_search(pool, voting, val_labels, min_size)
        by_id = {m.member_id: m for m in pool}
        return [Combination("Best-Ens", tuple(by_id[i] for i in spec.members))]
    raise EnsembleError(f"unknown combination mode {mode!r}", details={"known": list(MODES)})


def evaluate_combination(
    combination: Combination, strategy: str, test_labels: np.ndarray
) -> MetricsRow:
    predictions = _predict(combination.members, strategy, "test")
    return compute_metrics(predictions, np.asarray(test_labels), combination.members[0].test.c)
