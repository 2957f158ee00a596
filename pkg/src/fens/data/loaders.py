"""
CSV and image-folder ingestion.

CSV rows are `label,p0,...,p{H*W-1}` with 8-bit row-major pixels, no header.
Image folders hold one subdirectory per class with 8-bit grayscale PGM/PNG
files; class index is the lexicographic rank of the subdirectory name.
"""

from __future__ import annotations

import csv
import logging
from pathlib import Path
from typing import Dict, List, Optional, Tuple

import numpy as np
from PIL import Image, UnidentifiedImageError

from fens.core.digest import file_digest, files_digest
from fens.core.errors import DatasetError, ParseError
from fens.core.logs import log_event

from .dataset import Dataset, read_sidecar, write_sidecar

logger = logging.getLogger(__name__)

IMAGE_SUFFIXES = (".pgm", ".png")


def _detect_label_base(raw_labels: np.ndarray) -> int:
    # 1-based files ({1..C}) are shifted down; anything else is taken as 0-based
    return 1 if raw_labels.size and int(raw_labels.min()) == 1 else 0


def load_csv_dataset(
    path: Path,
    height: int = 32,
    width: int = 32,
    *,
    name: Optional[str] = None,
    label_base: Optional[int] = None,
) -> Dataset:
    path = Path(path)
    if not path.is_file():
        raise DatasetError(f"dataset file not found: {path}")
    expected = 1 + height * width
    labels: List[int] = []
    rows: List[np.ndarray] = []
    with path.open("r", encoding="utf-8", newline="") as handle:
        for row_no, row in enumerate(csv.reader(handle), start=1):
            if not row or (len(row) == 1 and not row[0].strip()):
                continue
            if len(row) != expected:
                raise ParseError(
                    f"row {row_no}: expected {expected} fields, got {len(row)}",
                    details={"row": row_no, "fields": len(row), "expected": expected},
                )
            try:
                values = np.array([int(field) for field in row], dtype=np.int64)
            except ValueError as exc:
                raise ParseError(f"row {row_no}: non-integer field ({exc})", details={"row": row_no}) from exc
            pixels = values[1:]
            if pixels.min() < 0 or pixels.max() > 255:
                raise ParseError(f"row {row_no}: pixel outside [0, 255]", details={"row": row_no})
            if values[0] < 0:
                raise ParseError(f"row {row_no}: negative label {values[0]}", details={"row": row_no})
            labels.append(int(values[0]))
            rows.append(pixels)
    if not rows:
        raise DatasetError(f"no samples in {path}")

    raw = np.asarray(labels, dtype=np.int64)
    base = _detect_label_base(raw) if label_base is None else int(label_base)
    shifted = raw - base
    if shifted.min() < 0:
        raise ParseError(f"label {int(raw.min())} is below label base {base}")
    present, contiguous = np.unique(shifted, return_inverse=True)
    if int(present[-1]) + 1 != present.size:
        log_event(logger, "labels_remapped", path=str(path), present=int(present.size),
                  span=int(present[-1]) + 1)
    images = np.stack(rows).astype(np.float32).reshape(-1, 1, height, width) / 255.0
    # original file label -> contiguous class index
    class_map = {str(int(value) + base): index for index, value in enumerate(present)}
    return Dataset(
        images=images,
        labels=contiguous.astype(np.int64),
        num_classes=int(present.size),
        name=name or path.stem,
        metadata={
            "format": "csv",
            "label_base": base,
            "class_map": class_map,
            "source_hash": file_digest(path),
        },
    )


def write_csv_dataset(dataset: Dataset, path: Path, *, sidecar: bool = True) -> Path:
    """
    Inverse of load_csv_dataset for single-channel sets; pixels are rounded to 8 bits.
    """
    if dataset.image_shape[0] != 1:
        raise DatasetError("CSV export needs single-channel images")
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    pixels = np.clip(np.rint(dataset.images.reshape(len(dataset), -1) * 255.0), 0, 255).astype(np.int64)
    with path.open("w", encoding="utf-8", newline="") as handle:
        writer = csv.writer(handle, lineterminator="\n")
        for label, row in zip(dataset.labels.tolist(), pixels):
            writer.writerow([label, *row.tolist()])
    if sidecar:
        meta = {**dataset.metadata, "source_hash": file_digest(path), "label_base": 0}
        write_sidecar(path, Dataset(dataset.images, dataset.labels, dataset.num_classes, dataset.name, meta))
    return path


def _read_gray(path: Path) -> np.ndarray:
    try:
        with Image.open(path) as img:
            gray = img if img.mode == "L" else img.convert("L")
            return np.asarray(gray, dtype=np.float32) / 255.0
    except (UnidentifiedImageError, OSError) as exc:
        raise DatasetError(f"unreadable image {path}: {exc}", details={"path": str(path)}) from exc


def load_image_folder(path: Path, *, name: Optional[str] = None) -> Dataset:
    root = Path(path)
    if not root.is_dir():
        raise DatasetError(f"dataset folder not found: {root}")
    class_dirs = sorted(p for p in root.iterdir() if p.is_dir())
    if not class_dirs:
        raise DatasetError(f"no class folders under {root}")

    images: List[np.ndarray] = []
    labels: List[int] = []
    sources: List[Path] = []
    shape: Optional[Tuple[int, int]] = None
    for index, class_dir in enumerate(class_dirs):
        found = 0
        for entry in sorted(class_dir.rglob("*")):
            if entry.is_dir():
                continue
            if entry.suffix.lower() not in IMAGE_SUFFIXES:
                log_event(logger, "file_skipped", level=logging.WARNING, path=str(entry), reason="not an image")
                continue
            pixels = _read_gray(entry)
            if shape is None:
                shape = pixels.shape
            elif pixels.shape != shape:
                raise DatasetError(
                    f"image {entry} is {pixels.shape[1]}x{pixels.shape[0]}, expected {shape[1]}x{shape[0]}",
                    details={"path": str(entry)},
                )
            images.append(pixels)
            labels.append(index)
            sources.append(entry)
            found += 1
        if not found:
            raise DatasetError(f"class folder {class_dir.name!r} has no images", details={"class": class_dir.name})

    class_map: Dict[str, int] = {d.name: i for i, d in enumerate(class_dirs)}
    sidecar = read_sidecar(root) or {}
    return Dataset(
        images=np.stack(images)[:, None, :, :],
        labels=np.asarray(labels, dtype=np.int64),
        num_classes=len(class_dirs),
        name=name or sidecar.get("name") or root.name,
        metadata={
            "format": "image-folder",
            "label_base": 0,
            "class_map": class_map,
            "source_hash": files_digest(sources),
        },
    )


def load_dataset(source: Path, height: int = 32, width: int = 32, *, name: Optional[str] = None) -> Dataset:
    source = Path(source)
    if source.is_dir():
        return load_image_folder(source, name=name)
    sidecar = read_sidecar(source) or {}
    return load_csv_dataset(source, height, width, name=name or sidecar.get("name"),
                            label_base=sidecar.get("label_base"))
