"""
Deterministic synthetic glyph sets for desk-scale runs and tests.

Each class gets a stroke template of 3-6 line or arc segments. Samples are the
template under a small random rotation and shift plus Gaussian pixel noise.
"""

from __future__ import annotations

from typing import Tuple

import numpy as np
from PIL import Image, ImageDraw

from fens.core.errors import DatasetError
from fens.core.rng import stream

from .dataset import Dataset

SUPERSAMPLE = 4
MAX_SHIFT_PX = 2
MAX_ROTATION_DEG = 10.0
NOISE_SIGMA = 0.05


def _template(class_index: int, height: int, width: int, seed: int) -> Image.Image:
    rng = stream(seed, "synth-template", class_index)
    h, w = height * SUPERSAMPLE, width * SUPERSAMPLE
    canvas = Image.new("L", (w, h), 0)
    draw = ImageDraw.Draw(canvas)
    stroke = max(SUPERSAMPLE, int(round(0.08 * min(h, w))))

    def point() -> Tuple[float, float]:
        return float(rng.uniform(0.18, 0.82) * w), float(rng.uniform(0.18, 0.82) * h)

    for _ in range(int(rng.integers(3, 7))):
        if rng.random() < 0.5:
            draw.line([point(), point()], fill=255, width=stroke)
        else:
            (x0, y0), (x1, y1) = point(), point()
            box = [min(x0, x1), min(y0, y1), max(x0, x1) + stroke, max(y0, y1) + stroke]
            start = float(rng.uniform(0, 360))
            sweep = float(rng.uniform(90, 300))
            draw.arc(box, start, start + sweep, fill=255, width=stroke)
    return canvas


def _render(template: Image.Image, rng: np.random.Generator, height: int, width: int) -> np.ndarray:
    angle = float(rng.uniform(-MAX_ROTATION_DEG, MAX_ROTATION_DEG))
    dx, dy = (int(v) for v in rng.integers(-MAX_SHIFT_PX, MAX_SHIFT_PX + 1, size=2))
    moved = template.rotate(
        angle,
        resample=Image.Resampling.BILINEAR,
        translate=(dx * SUPERSAMPLE, dy * SUPERSAMPLE),
        fillcolor=0,
    )
    small = moved.resize((width, height), resample=Image.Resampling.BOX)
    pixels = np.asarray(small, dtype=np.float32) / 255.0
    pixels = pixels + rng.normal(0.0, NOISE_SIGMA, size=pixels.shape).astype(np.float32)
    return np.clip(pixels, 0.0, 1.0)


def synth_glyphs(
    class_count: int,
    per_class: int,
    height: int = 32,
    width: int = 32,
    seed: int = 0,
    *,
    name: str = "synth",
) -> Dataset:
    if class_count < 2:
        raise DatasetError(f"synthetic sets need at least 2 classes, got {class_count}")
    if per_class < 1 or height < 4 or width < 4:
        raise DatasetError("per-class count must be positive and images at least 4x4")

    images = np.empty((class_count * per_class, 1, height, width), dtype=np.float32)
    labels = np.repeat(np.arange(class_count, dtype=np.int64), per_class)
    for c in range(class_count):
        template = _template(c, height, width, seed)
        for i in range(per_class):
            images[c * per_class + i, 0] = _render(template, stream(seed, "synth-sample", c, i), height, width)
    return Dataset(
        images=images,
        labels=labels,
        num_classes=class_count,
        name=name,
        metadata={
            "format": "synth",
            "label_base": 0,
            "class_map": {str(c): c for c in range(class_count)},
            "source_hash": f"synth:{class_count}:{per_class}:{height}x{width}:{seed}",
        },
    )
