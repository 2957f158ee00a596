"""
Hyperparameter search space and seeded sampling.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Any, Dict, Mapping, Optional, Tuple

import numpy as np

from fens.core.coerce import to_float_pair, to_list
from fens.core.errors import ConfigError
from fens.tensor.optim import OPTIMIZERS


@dataclass(frozen=True)
class SearchSpace:
    lr: Tuple[float, float] = (1e-4, 1e-1)
    batch_sizes: Tuple[int, ...] = (16, 32, 64)
    optimizers: Tuple[str, ...] = OPTIMIZERS
    weight_decay: Optional[Tuple[float, float]] = (1e-6, 1e-3)
    momentum: Tuple[float, float] = (0.8, 0.95)

    def validate(self) -> "SearchSpace":
        _check_range("lr", self.lr, positive=True)
        if self.weight_decay is not None:
            _check_range("weight_decay", self.weight_decay, positive=True)
        _check_range("momentum", self.momentum, positive=False)
        if self.momentum[0] < 0.0 or self.momentum[1] >= 1.0:
            raise ConfigError("momentum must lie in [0, 1)", details={"key": "momentum"})
        if not self.batch_sizes or any(b < 1 for b in self.batch_sizes):
            raise ConfigError("batch_sizes must be a non-empty list of positive integers", details={"key": "batch_sizes"})
        if not self.optimizers or any(o not in OPTIMIZERS for o in self.optimizers):
            raise ConfigError(f"optimizers must be drawn from {OPTIMIZERS}", details={"key": "optimizers"})
        return self

    def to_dict(self) -> Dict[str, Any]:
        return {
            "lr": list(self.lr),
            "batch_sizes": list(self.batch_sizes),
            "optimizers": list(self.optimizers),
            "weight_decay": list(self.weight_decay) if self.weight_decay is not None else None,
            "momentum": list(self.momentum),
        }

    @classmethod
    def from_dict(cls, raw: Mapping[str, Any]) -> "SearchSpace":
        defaults = cls()
        wd = raw.get("weight_decay", defaults.weight_decay)
        return cls(
            lr=tuple(to_float_pair(raw.get("lr", defaults.lr), "lr")),
            batch_sizes=tuple(int(b) for b in to_list(raw.get("batch_sizes", defaults.batch_sizes), "batch_sizes")),
            optimizers=tuple(to_list(raw.get("optimizers", defaults.optimizers), "optimizers")),
            weight_decay=None if wd is None else tuple(to_float_pair(wd, "weight_decay")),
            momentum=tuple(to_float_pair(raw.get("momentum", defaults.momentum), "momentum")),
        ).validate()


def _check_range(key: str, pair: Tuple[float, float], *, positive: bool) -> None:
    lo, hi = pair
    if lo > hi or (positive and lo <= 0):
        raise ConfigError(f"{key}: invalid range [{lo}, {hi}]", details={"key": key})


def log_uniform(rng: np.random.Generator, lo: float, hi: float) -> float:
    if lo == hi:
        return float(lo)
    return float(math.exp(rng.uniform(math.log(lo), math.log(hi))))


def uniform(rng: np.random.Generator, lo: float, hi: float) -> float:
    return float(lo) if lo == hi else float(rng.uniform(lo, hi))


def sample_config(space: SearchSpace, rng: np.random.Generator) -> Dict[str, Any]:
    """
    Draws in a fixed field order so a seeded generator yields a fixed sequence.
    """
    return {
        "lr": log_uniform(rng, *space.lr),
        "batch_size": int(space.batch_sizes[int(rng.integers(len(space.batch_sizes)))]),
        "optimizer": str(space.optimizers[int(rng.integers(len(space.optimizers)))]),
        "weight_decay": 0.0 if space.weight_decay is None else log_uniform(rng, *space.weight_decay),
        "momentum": uniform(rng, *space.momentum),
    }
