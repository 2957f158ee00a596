"""
Accuracy and macro-averaged precision, recall and F1.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass
from typing import Dict

import numpy as np
from sklearn.metrics import accuracy_score, precision_recall_fscore_support

from fens.core.errors import EnsembleError, LabelError


@dataclass(frozen=True)
class MetricsRow:
    accuracy: float
    f1: float
    precision: float
    recall: float

    def to_dict(self) -> Dict[str, float]:
        return asdict(self)


def compute_metrics(predictions: np.ndarray, labels: np.ndarray, num_classes: int) -> MetricsRow:
    """
    Macro averages run over all `num_classes` classes; a class that is never
    present nor predicted contributes 0 to each average.
    """
    preds = np.asarray(predictions, dtype=np.int64)
    truth = np.asarray(labels, dtype=np.int64)
    if preds.shape != truth.shape or preds.ndim != 1:
        raise EnsembleError(
            f"predictions {preds.shape} and labels {truth.shape} must be equal-length vectors",
            details={"predictions": list(preds.shape), "labels": list(truth.shape)},
        )
    if preds.size == 0:
        raise EnsembleError("cannot score an empty prediction set")
    for name, values in (("predictions", preds), ("labels", truth)):
        if values.min() < 0 or values.max() >= num_classes:
            raise LabelError(f"{name} must lie in [0, {num_classes})")

    precision, recall, f1, _ = precision_recall_fscore_support(
        truth, preds, labels=np.arange(num_classes), average=None, zero_division=0
    )
    return MetricsRow(
        accuracy=float(accuracy_score(truth, preds)),
        f1=float(np.mean(f1)),
        precision=float(np.mean(precision)),
        recall=float(np.mean(recall)),
    )
