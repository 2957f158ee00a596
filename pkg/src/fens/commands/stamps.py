"""
Stage stamps: a stage is skipped when its stamp's input digest matches and
every output it recorded still exists.

    <stage dir>/stamp.json = {"stage", "inputs", "outputs": [relative paths], "data"}
"""

from __future__ import annotations

import json
import logging
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, Iterable, Optional

from fens.core.digest import json_digest
from fens.core.logs import log_event

logger = logging.getLogger(__name__)

STAMP = "stamp.json"


@dataclass
class Stage:
    name: str
    directory: Path
    inputs: Dict[str, Any]
    data: Dict[str, Any] = field(default_factory=dict)

    @property
    def digest(self) -> str:
        return json_digest(self.inputs)

    def _read(self) -> Optional[Dict[str, Any]]:
        path = self.directory / STAMP
        if not path.exists():
            return None
        try:
            return json.loads(path.read_text(encoding="utf-8"))
        except json.JSONDecodeError:
            return None

    def fresh(self) -> bool:
        stamp = self._read()
        if not stamp or stamp.get("inputs") != self.digest:
            return False
        if not all((self.directory / rel).exists() for rel in stamp.get("outputs", [])):
            return False
        self.data = dict(stamp.get("data") or {})
        log_event(logger, "stage_skipped", stage=self.name, dir=str(self.directory))
        return True

    def complete(self, outputs: Iterable[Path], data: Optional[Dict[str, Any]] = None) -> Path:
        self.data = dict(data or {})
        relative = sorted(os.path.relpath(Path(p), self.directory) for p in outputs)
        payload = {"stage": self.name, "inputs": self.digest, "outputs": relative, "data": self.data}
        self.directory.mkdir(parents=True, exist_ok=True)
        path = self.directory / STAMP
        tmp = path.with_suffix(".json.tmp")
        tmp.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n", encoding="utf-8")
        tmp.replace(path)
        log_event(logger, "stage_done", stage=self.name, dir=str(self.directory))
        return path

    def invalidate(self) -> None:
        (self.directory / STAMP).unlink(missing_ok=True)
