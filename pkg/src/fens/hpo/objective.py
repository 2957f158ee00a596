"""
Binds the training engine to the Hyperband objective protocol.
"""

from __future__ import annotations

import os
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Dict, Optional

from fens.core.digest import json_digest
from fens.data.dataset import Dataset
from fens.data.splits import FoldAssignment
from fens.training.config import TrainConfig
from fens.training.engine import train_run
from fens.zoo.spec import ModelSpec

from .hyperband import ObjectiveResult


@dataclass
class TrainingObjective:
    """
    Scores a config by the best validation accuracy on one fold. A trial
    promoted to a later rung passes its last checkpoint as `resume` and
    training continues up to the new epoch total. Checkpoints are reported
    relative to the parent of `runs_dir`, where the tuning report lives.
    """

    spec: ModelSpec
    dataset: Dataset
    folds: FoldAssignment
    base: TrainConfig
    runs_dir: Path
    fold: int = 0

    @property
    def anchor(self) -> Path:
        return Path(self.runs_dir).parent

    def train_config(self, config: Dict[str, Any], epochs: int) -> TrainConfig:
        return self.base.with_overrides(
            epochs=int(epochs),
            lr=float(config["lr"]),
            batch_size=int(config["batch_size"]),
            optimizer=str(config["optimizer"]),
            weight_decay=float(config.get("weight_decay", 0.0)),
            momentum=float(config.get("momentum", self.base.momentum)),
        )

    def __call__(self, config: Dict[str, Any], epochs: int, resume: Optional[str] = None) -> ObjectiveResult:
        run_id = f"trial-{json_digest(config)[:12]}"
        record = train_run(
            self.spec,
            self.dataset,
            self.folds,
            self.fold,
            self.train_config(config, epochs),
            runs_dir=Path(self.runs_dir),
            run_id=run_id,
            resume_from=self.anchor / resume if resume else None,
        )
        checkpoint = None
        if record.checkpoints:
            checkpoint = Path(os.path.relpath(record.checkpoint_path(-1), self.anchor)).as_posix()
        return ObjectiveResult(
            score=record.best_val_acc,
            checkpoint=checkpoint,
            details={"run_id": run_id, "best_epoch": record.best_epoch},
        )
