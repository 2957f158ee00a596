"""
Resize, polarity flip, channel replication and normalisation.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass
from typing import Any, Dict, Mapping, Optional, Tuple

import numpy as np

from fens.core.errors import ConfigError

from .dataset import Dataset


@dataclass(frozen=True)
class PreprocessSpec:
    height: int = 32
    width: int = 32
    mean: Tuple[float, ...] = (0.0,)
    std: Tuple[float, ...] = (1.0,)
    invert: bool = False
    channels: Optional[int] = None  # None keeps the source channel count
    keep_aspect: bool = False

    def validate(self) -> "PreprocessSpec":
        if self.height < 1 or self.width < 1:
            raise ConfigError(f"preprocess target must be positive, got {self.height}x{self.width}")
        if not self.std or any(s <= 0 for s in self.std):
            raise ConfigError("preprocess std must be > 0")
        if len(self.mean) != len(self.std):
            raise ConfigError("preprocess mean and std need the same length")
        if self.channels not in (None, 1, 3):
            raise ConfigError(f"preprocess channels must be 1 or 3, got {self.channels}")
        return self

    def to_dict(self) -> Dict[str, Any]:
        data = asdict(self)
        data["mean"], data["std"] = list(self.mean), list(self.std)
        return data

    @classmethod
    def from_dict(cls, raw: Mapping[str, Any]) -> "PreprocessSpec":
        data = dict(raw)
        for key in ("mean", "std"):
            if key in data:
                value = data[key]
                data[key] = tuple(float(v) for v in (value if isinstance(value, (list, tuple)) else [value]))
        return cls(**data).validate()


def bilinear_weights(size_in: int, size_out: int) -> np.ndarray:
    """
    (size_out, size_in) interpolation matrix with half-pixel centres.
    """
    scale = size_in / size_out
    src = (np.arange(size_out) + 0.5) * scale - 0.5
    src = np.clip(src, 0.0, size_in - 1)
    lo = np.floor(src).astype(np.int64)
    hi = np.minimum(lo + 1, size_in - 1)
    frac = src - lo
    weights = np.zeros((size_out, size_in), dtype=np.float64)
    rows = np.arange(size_out)
    np.add.at(weights, (rows, lo), 1.0 - frac)
    np.add.at(weights, (rows, hi), frac)
    return weights


def resize_bilinear(images: np.ndarray, height: int, width: int) -> np.ndarray:
    _, _, h, w = images.shape
    if (h, w) == (height, width):
        return images.copy()
    wy = bilinear_weights(h, height)
    wx = bilinear_weights(w, width)
    out = np.einsum("oh,nchw,pw->ncop", wy, images.astype(np.float64), wx, optimize=True)
    return out.astype(np.float32)


def _fit_with_padding(images: np.ndarray, height: int, width: int) -> np.ndarray:
    _, _, h, w = images.shape
    scale = min(height / h, width / w)
    new_h = max(1, int(round(h * scale)))
    new_w = max(1, int(round(w * scale)))
    resized = resize_bilinear(images, new_h, new_w)
    out = np.zeros(images.shape[:2] + (height, width), dtype=np.float32)
    top, left = (height - new_h) // 2, (width - new_w) // 2
    out[:, :, top:top + new_h, left:left + new_w] = resized
    return out


def preprocess(dataset: Dataset, spec: PreprocessSpec) -> Dataset:
    spec.validate()
    images = np.asarray(dataset.images, dtype=np.float32)
    if spec.keep_aspect:
        images = _fit_with_padding(images, spec.height, spec.width)
    else:
        images = resize_bilinear(images, spec.height, spec.width)
    if spec.invert:
        images = 1.0 - images
    if spec.channels is not None and spec.channels != images.shape[1]:
        if images.shape[1] != 1:
            raise ConfigError(f"cannot map {images.shape[1]} channels to {spec.channels}")
        images = np.repeat(images, spec.channels, axis=1)

    c = images.shape[1]
    mean = np.asarray(spec.mean if len(spec.mean) == c else spec.mean * c, dtype=np.float32)[:c]
    std = np.asarray(spec.std if len(spec.std) == c else spec.std * c, dtype=np.float32)[:c]
    images = (images - mean[None, :, None, None]) / std[None, :, None, None]
    return dataset.with_images(images.astype(np.float32), preprocess=spec.to_dict())
