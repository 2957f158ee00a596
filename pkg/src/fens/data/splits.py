"""
Stratified hold-out splits and k-fold assignments.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Any, Dict, List, Tuple

import numpy as np

from fens.core.errors import DatasetError
from fens.core.rng import stream

from .dataset import Dataset


def _per_class(labels: np.ndarray, num_classes: int) -> List[np.ndarray]:
    return [np.flatnonzero(labels == c) for c in range(num_classes)]


def holdout_indices(dataset: Dataset, fraction: float, seed: int) -> Tuple[np.ndarray, np.ndarray]:
    """
    Per class, round(fraction * size) samples go to the first part. Each class
    keeps at least one sample on both sides.
    """
    if not 0.0 < fraction < 1.0:
        raise DatasetError(f"train fraction must lie in (0, 1), got {fraction}")
    rng = stream(seed, "holdout")
    first: List[np.ndarray] = []
    second: List[np.ndarray] = []
    for c, idx in enumerate(_per_class(dataset.labels, dataset.num_classes)):
        if idx.size == 0:
            continue
        if idx.size < 2:
            raise DatasetError(f"class {c} has {idx.size} sample; a split needs at least 2", details={"class": c})
        shuffled = idx[rng.permutation(idx.size)]
        take = int(np.floor(fraction * idx.size + 0.5))
        take = min(max(take, 1), idx.size - 1)
        first.append(shuffled[:take])
        second.append(shuffled[take:])
    return np.sort(np.concatenate(first)), np.sort(np.concatenate(second))


def split_holdout(dataset: Dataset, fraction: float, seed: int) -> Tuple[Dataset, Dataset]:
    train_idx, test_idx = holdout_indices(dataset, fraction, seed)
    return (
        dataset.subset(train_idx, name=f"{dataset.name}-train"),
        dataset.subset(test_idx, name=f"{dataset.name}-test"),
    )


@dataclass(frozen=True)
class FoldAssignment:
    k: int
    folds: np.ndarray
    seed: int

    def val_indices(self, fold: int) -> np.ndarray:
        self._check(fold)
        return np.flatnonzero(self.folds == fold)

    def train_indices(self, fold: int) -> np.ndarray:
        self._check(fold)
        return np.flatnonzero(self.folds != fold)

    def fold_sizes(self) -> List[int]:
        return np.bincount(self.folds, minlength=self.k).tolist()

    def _check(self, fold: int) -> None:
        if not 0 <= fold < self.k:
            raise DatasetError(f"fold {fold} outside [0, {self.k})")

    def to_dict(self) -> Dict[str, Any]:
        return {"k": self.k, "seed": self.seed, "folds": self.folds.tolist()}

    @classmethod
    def from_dict(cls, raw: Dict[str, Any]) -> "FoldAssignment":
        return cls(k=int(raw["k"]), folds=np.asarray(raw["folds"], dtype=np.int64), seed=int(raw["seed"]))


def kfold(dataset: Dataset, k: int = 5, seed: int = 0) -> FoldAssignment:
    """
    Shuffle each class, lay the classes end to end and deal positions round
    robin into k folds. Fold sizes and per-class fold counts differ by at most 1.
    """
    if k < 2:
        raise DatasetError(f"k must be at least 2, got {k}")
    rng = stream(seed, "kfold")
    folds = np.empty(len(dataset), dtype=np.int64)
    position = 0
    for c, idx in enumerate(_per_class(dataset.labels, dataset.num_classes)):
        if idx.size < k:
            raise DatasetError(
                f"class {c} has {idx.size} samples, fewer than k={k}",
                details={"class": c, "samples": int(idx.size), "k": k},
            )
        shuffled = idx[rng.permutation(idx.size)]
        folds[shuffled] = (position + np.arange(idx.size)) % k
        position += idx.size
    return FoldAssignment(k=k, folds=folds, seed=seed)
