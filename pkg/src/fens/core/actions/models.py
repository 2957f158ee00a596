"""
Core action models.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional


@dataclass(frozen=True)
class ActionContext:
    """
    Runtime context passed to actions.
    - home: output root (FENS_HOME, --out)
    - jobs: worker-pool width for folds, trials and matrix entries
    - extras: resolved config sections and anything else a command needs
    """
    home: Path
    jobs: int = 1
    extras: Dict[str, Any] = field(default_factory=dict)


@dataclass
class ActionOutput:
    """
    Standard result returned by actions; safe_execute turns it into an envelope.
    """
    status: str = "ok"
    data: Optional[Dict[str, Any]] = None
    error: Optional[Dict[str, Any]] = None
    artifacts: List[str] = field(default_factory=list)
    metrics: Dict[str, Any] = field(default_factory=dict)

    def as_dict(self) -> Dict[str, Any]:
        out: Dict[str, Any] = {"status": self.status}
        if self.data is not None:
            out["data"] = self.data
        if self.error is not None:
            out["error"] = self.error
        if self.artifacts:
            out["artifacts"] = list(self.artifacts)
        if self.metrics:
            out["metrics"] = self.metrics
        return out
