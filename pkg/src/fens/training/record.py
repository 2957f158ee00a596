"""
Per-run training history.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional

from fens.core.errors import TrainingFailed


@dataclass(frozen=True)
class EpochRow:
    epoch: int
    train_loss: float
    train_acc: float
    val_loss: float
    val_acc: float
    wall_s: float

    def metrics(self) -> Dict[str, float]:
        """Everything except wall time; equal across replays of the same run."""
        return {k: v for k, v in asdict(self).items() if k != "wall_s"}


@dataclass
class RunRecord:
    run_id: str
    config: Dict[str, Any]
    fold: int = 0
    rows: List[EpochRow] = field(default_factory=list)
    checkpoints: List[str] = field(default_factory=list)
    status: str = "running"
    error: Optional[Dict[str, Any]] = None
    # run directory; checkpoint entries are file names inside it
    root: Optional[Path] = field(default=None, compare=False)

    @property
    def best_epoch(self) -> int:
        """
        1-based epoch with the highest validation accuracy; ties go to the earliest.
        """
        if not self.rows:
            raise TrainingFailed(f"run {self.run_id} has no completed epochs")
        best = max(self.rows, key=lambda row: (row.val_acc, -row.epoch))
        return best.epoch

    @property
    def best_val_acc(self) -> float:
        return self.rows[self.best_epoch - 1].val_acc if self.rows else float("-inf")

    def checkpoint_path(self, index: int) -> Path:
        name = self.checkpoints[index]
        return Path(self.root) / name if self.root is not None else Path(name)

    @property
    def best_checkpoint(self) -> Path:
        return self.checkpoint_path(self.best_epoch - 1)

    @property
    def ok(self) -> bool:
        return self.status == "completed"

    def to_dict(self) -> Dict[str, Any]:
        return {
            "run_id": self.run_id,
            "config": self.config,
            "fold": self.fold,
            "status": self.status,
            "rows": [asdict(row) for row in self.rows],
            "checkpoints": list(self.checkpoints),
            "best_epoch": self.best_epoch if self.rows else None,
            "error": self.error,
        }

    @classmethod
    def from_dict(cls, raw: Dict[str, Any]) -> "RunRecord":
        return cls(
            run_id=raw["run_id"],
            config=dict(raw.get("config", {})),
            fold=int(raw.get("fold", 0)),
            rows=[EpochRow(**row) for row in raw.get("rows", [])],
            checkpoints=list(raw.get("checkpoints", [])),
            status=raw.get("status", "completed"),
            error=raw.get("error"),
        )

    def write(self, path: Path) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        tmp = path.with_suffix(path.suffix + ".tmp")
        tmp.write_text(json.dumps(self.to_dict(), indent=2) + "\n", encoding="utf-8")
        tmp.replace(path)
        return path

    @classmethod
    def read(cls, path: Path) -> "RunRecord":
        record = cls.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))
        record.root = Path(path).parent
        return record
