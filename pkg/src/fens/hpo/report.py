"""
Tuning report: the plan, every trial and the winner, as one JSON document.
"""

from __future__ import annotations

import json
import os
import tempfile
from pathlib import Path
from typing import Any, Dict

from fens.core.errors import ConfigError

from .hyperband import HyperbandResult, Trial
from .space import SearchSpace

REPORT_VERSION = 1


def tuning_report(result: HyperbandResult, space: SearchSpace, *, seed: int, run_id: str = "") -> Dict[str, Any]:
    return {
        "version": REPORT_VERSION,
        "run_id": run_id,
        "seed": seed,
        "space": space.to_dict(),
        "plan": result.plan.to_dict(),
        "epochs_executed": result.epochs_executed(),
        "replacement_epochs": result.epochs_executed(include_replacements=True) - result.epochs_executed(),
        "trials": [t.to_dict() for t in result.trials],
        "best": result.best.to_dict() if result.best else None,
    }


def write_tuning_report(path: Path, report: Dict[str, Any]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=".tuning-", suffix=".json")
    with os.fdopen(fd, "w", encoding="utf-8") as fh:
        fh.write(json.dumps(report, indent=2, sort_keys=True) + "\n")
    os.replace(tmp, path)
    return path


def read_tuning_report(path: Path) -> Dict[str, Any]:
    raw = json.loads(Path(path).read_text(encoding="utf-8"))
    if raw.get("version") != REPORT_VERSION:
        raise ConfigError(f"unsupported tuning report version {raw.get('version')!r}", details={"path": str(path)})
    raw["trials"] = [Trial.from_dict(t) for t in raw.get("trials", [])]
    raw["best"] = Trial.from_dict(raw["best"]) if raw.get("best") else None
    return raw
