"""
Training engine: learning strategies, k-fold runs, checkpoints and evaluation.
"""

from .checkpoint import Checkpoint, load_checkpoint, save_checkpoint
from .config import TrainConfig
from .engine import (
    CrossValidation,
    apply_strategy,
    checkpoint_name,
    cross_validate,
    evaluate,
    load_best,
    load_model,
    make_run_id,
    predict_proba,
    run_folds,
    select_best,
    train_run,
)
from .record import EpochRow, RunRecord

__all__ = [
    "Checkpoint",
    "CrossValidation",
    "EpochRow",
    "RunRecord",
    "TrainConfig",
    "apply_strategy",
    "checkpoint_name",
    "cross_validate",
    "evaluate",
    "load_best",
    "load_checkpoint",
    "load_model",
    "make_run_id",
    "predict_proba",
    "run_folds",
    "save_checkpoint",
    "select_best",
    "train_run",
]
