"""
In-memory labelled image sets.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any, Dict, Optional, Sequence

import numpy as np

from fens.core.digest import array_digest
from fens.core.errors import DatasetError, LabelError


@dataclass(frozen=True)
class Dataset:
    """
    images: float32 N x C x H x W in [0, 1] until normalised.
    metadata carries the class map, label base and source hash that the
    JSON sidecar persists.
    """

    images: np.ndarray
    labels: np.ndarray
    num_classes: int
    name: str = "dataset"
    metadata: Dict[str, Any] = field(default_factory=dict)

    def __post_init__(self) -> None:
        images = np.asarray(self.images, dtype=np.float32)
        labels = np.asarray(self.labels, dtype=np.int64)
        if images.ndim != 4:
            raise DatasetError(f"images must be N x C x H x W, got shape {images.shape}")
        if labels.shape != (images.shape[0],):
            raise DatasetError(
                f"{images.shape[0]} images but {labels.shape[0] if labels.ndim else 0} labels",
                details={"images": int(images.shape[0]), "labels": int(labels.size)},
            )
        if self.num_classes < 1:
            raise DatasetError("class count must be positive")
        if labels.size and (labels.min() < 0 or labels.max() >= self.num_classes):
            raise LabelError(
                f"labels must lie in [0, {self.num_classes})",
                details={"min": int(labels.min()), "max": int(labels.max())},
            )
        images.setflags(write=False)
        labels.setflags(write=False)
        object.__setattr__(self, "images", images)
        object.__setattr__(self, "labels", labels)

    def __len__(self) -> int:
        return int(self.labels.shape[0])

    @property
    def image_shape(self) -> tuple:
        return tuple(int(v) for v in self.images.shape[1:])

    def class_counts(self) -> np.ndarray:
        return np.bincount(self.labels, minlength=self.num_classes)

    def subset(self, indices: Sequence[int], name: Optional[str] = None) -> "Dataset":
        idx = np.asarray(indices, dtype=np.int64)
        return replace(self, images=self.images[idx], labels=self.labels[idx], name=name or self.name)

    def with_images(self, images: np.ndarray, **metadata: Any) -> "Dataset":
        return replace(self, images=images, metadata={**self.metadata, **metadata})

    def digest(self) -> str:
        return array_digest(self.images, self.labels)

    def describe(self) -> Dict[str, Any]:
        counts = self.class_counts()
        return {
            "name": self.name,
            "samples": len(self),
            "classes": self.num_classes,
            "image_shape": list(self.image_shape),
            "class_counts": {"min": int(counts.min()), "max": int(counts.max())},
            "pixel_range": [float(self.images.min()), float(self.images.max())] if len(self) else [],
            "digest": self.digest(),
            "label_base": self.metadata.get("label_base", 0),
        }


def sidecar_path(source: Path) -> Path:
    source = Path(source)
    if source.is_dir():
        return source / "fens-dataset.json"
    return source.with_suffix(source.suffix + ".meta.json")


def write_sidecar(source: Path, dataset: Dataset) -> Path:
    path = sidecar_path(source)
    payload = {
        "name": dataset.name,
        "class_map": dataset.metadata.get("class_map", {}),
        "label_base": dataset.metadata.get("label_base", 0),
        "source_hash": dataset.metadata.get("source_hash", ""),
        "samples": len(dataset),
        "classes": dataset.num_classes,
    }
    path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return path


def read_sidecar(source: Path) -> Optional[Dict[str, Any]]:
    path = sidecar_path(source)
    if not path.exists():
        return None
    try:
        return json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise DatasetError(f"unreadable dataset sidecar {path}: {exc}") from exc
