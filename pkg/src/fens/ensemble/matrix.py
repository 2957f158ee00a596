"""
Probability matrices, ensemble members and their on-disk forms.

Matrix files: a header line "N C" followed by N lines of C space-separated
decimals. Member manifests are JSON lists linking run ids to matrix files.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Dict, List, Sequence, Union

import numpy as np

from fens.core.errors import EnsembleError, ParseError

ROW_SUM_TOLERANCE = 1e-5


@dataclass(frozen=True, eq=False)
class ProbabilityMatrix:
    values: np.ndarray

    def __post_init__(self) -> None:
        values = np.asarray(self.values, dtype=np.float64)
        if values.ndim != 2 or values.shape[0] < 1 or values.shape[1] < 1:
            raise EnsembleError(f"probability matrix must be N x C with N, C > 0, got {values.shape}")
        if not np.isfinite(values).all() or values.min() < 0:
            raise EnsembleError("probability matrix holds negative or non-finite entries")
        worst = float(np.abs(values.sum(axis=1) - 1.0).max())
        if worst > ROW_SUM_TOLERANCE:
            raise EnsembleError(f"probability rows must sum to 1 (worst deviation {worst:.2e})")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)

    @property
    def n(self) -> int:
        return int(self.values.shape[0])

    @property
    def c(self) -> int:
        return int(self.values.shape[1])

    def write(self, path: Path) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        lines = [f"{self.n} {self.c}"]
        lines.extend(" ".join(repr(float(v)) for v in row) for row in self.values)
        path.write_text("\n".join(lines) + "\n", encoding="utf-8")
        return path

    @classmethod
    def read(cls, path: Path) -> "ProbabilityMatrix":
        path = Path(path)
        lines = [line for line in path.read_text(encoding="utf-8").splitlines() if line.strip()]
        if not lines:
            raise ParseError(f"{path}: empty probability matrix file")
        try:
            n, c = (int(v) for v in lines[0].split())
        except ValueError as exc:
            raise ParseError(f"{path}: bad header {lines[0]!r}") from exc
        if len(lines) - 1 != n:
            raise ParseError(f"{path}: header says {n} rows, found {len(lines) - 1}")
        rows = []
        for row_no, line in enumerate(lines[1:], start=2):
            parts = line.split()
            if len(parts) != c:
                raise ParseError(f"{path}: line {row_no} has {len(parts)} values, expected {c}",
                                 details={"line": row_no})
            try:
                rows.append([float(v) for v in parts])
            except ValueError as exc:
                raise ParseError(f"{path}: line {row_no}: {exc}", details={"line": row_no}) from exc
        return cls(np.asarray(rows, dtype=np.float64))


MatrixLike = Union[ProbabilityMatrix, np.ndarray]


def as_array(matrix: MatrixLike) -> np.ndarray:
    return matrix.values if isinstance(matrix, ProbabilityMatrix) else np.asarray(matrix, dtype=np.float64)


def stack_members(members: Sequence[MatrixLike]) -> np.ndarray:
    if not members:
        raise EnsembleError("at least one member matrix is required")
    arrays = [as_array(m) for m in members]
    shape = arrays[0].shape
    for idx, array in enumerate(arrays):
        if array.ndim != 2 or array.shape != shape:
            raise EnsembleError(
                f"member {idx} has shape {array.shape}, expected {shape}",
                details={"member": idx, "shape": list(array.shape), "expected": list(shape)},
            )
    return np.stack(arrays)


@dataclass(frozen=True, eq=False)
class MemberRecord:
    dataset: str
    family: str
    strategy: str
    run_id: str
    test: ProbabilityMatrix
    validation: ProbabilityMatrix
    val_score: float

    def __post_init__(self) -> None:
        if self.test.c != self.validation.c:
            raise EnsembleError(f"member {self.run_id}: test and validation class counts differ")
        if not 0.0 <= self.val_score <= 1.0:
            raise EnsembleError(f"member {self.run_id}: validation score {self.val_score} outside [0, 1]")

    @property
    def member_id(self) -> str:
        return self.run_id

    def describe(self) -> Dict[str, Any]:
        return {
            "run_id": self.run_id,
            "dataset": self.dataset,
            "family": self.family,
            "strategy": self.strategy,
            "val_score": self.val_score,
        }


def write_manifest(path: Path, members: Sequence[MemberRecord], matrix_dir: Path) -> Path:
    path = Path(path)
    matrix_dir = Path(matrix_dir)
    entries: List[Dict[str, Any]] = []
    for member in members:
        test_path = member.test.write(matrix_dir / f"{member.run_id}.test.txt")
        val_path = member.validation.write(matrix_dir / f"{member.run_id}.val.txt")
        entries.append({
            **member.describe(),
            "test_matrix": os.path.relpath(test_path, path.parent),
            "val_matrix": os.path.relpath(val_path, path.parent),
        })
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps({"members": entries}, indent=2) + "\n", encoding="utf-8")
    return path


def read_manifest(path: Path) -> List[MemberRecord]:
    path = Path(path)
    try:
        raw = json.loads(path.read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise ParseError(f"unreadable member manifest {path}: {exc}") from exc
    members = []
    for entry in raw.get("members", []):
        members.append(MemberRecord(
            dataset=entry["dataset"],
            family=entry["family"],
            strategy=entry["strategy"],
            run_id=entry["run_id"],
            test=ProbabilityMatrix.read(path.parent / entry["test_matrix"]),
            validation=ProbabilityMatrix.read(path.parent / entry["val_matrix"]),
            val_score=float(entry["val_score"]),
        ))
    return members
