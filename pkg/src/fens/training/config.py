"""
Training configuration.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, fields, replace
from typing import Any, Dict, Mapping, Optional

from fens.core.coerce import to_choice, to_float, to_int
from fens.core.errors import ConfigError
from fens.tensor.optim import OPTIMIZERS, OptimizerState
from fens.zoo.model import STRATEGIES


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 10
    batch_size: int = 32
    optimizer: str = "adam"
    lr: float = 1e-3
    momentum: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    weight_decay: float = 0.0
    strategy: str = "tfs"
    seed: int = 0
    source_checkpoint: Optional[str] = None

    def validate(self) -> "TrainConfig":
        if self.epochs < 1:
            raise ConfigError(f"epochs must be >= 1, got {self.epochs}", details={"key": "epochs"})
        if self.batch_size < 1:
            raise ConfigError(f"batch_size must be >= 1, got {self.batch_size}", details={"key": "batch_size"})
        if self.optimizer not in OPTIMIZERS:
            raise ConfigError(f"unknown optimizer {self.optimizer!r}", details={"key": "optimizer"})
        if self.strategy not in STRATEGIES:
            raise ConfigError(f"unknown strategy {self.strategy!r}", details={"key": "strategy"})
        if not self.lr > 0:
            raise ConfigError("lr must be > 0", details={"key": "lr"})
        if not 0.0 <= self.momentum < 1.0 or not 0.0 <= self.beta2 < 1.0:
            raise ConfigError("momentum and beta2 must lie in [0, 1)", details={"key": "momentum"})
        if self.weight_decay < 0 or self.eps <= 0:
            raise ConfigError("weight_decay must be >= 0 and eps > 0", details={"key": "weight_decay"})
        if self.strategy == "tfs" and self.source_checkpoint:
            raise ConfigError("tfs trains from scratch and takes no source checkpoint",
                              details={"key": "source_checkpoint"})
        if self.strategy in ("hft", "fft") and not self.source_checkpoint:
            raise ConfigError(f"{self.strategy} needs a source checkpoint", details={"key": "source_checkpoint"})
        return self

    def optimizer_state(self) -> OptimizerState:
        return OptimizerState(
            kind=self.optimizer,
            lr=self.lr,
            momentum=self.momentum,
            beta2=self.beta2,
            eps=self.eps,
            weight_decay=self.weight_decay,
        )

    def with_overrides(self, **changes: Any) -> "TrainConfig":
        return replace(self, **changes)

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)

    @classmethod
    def from_dict(cls, raw: Mapping[str, Any]) -> "TrainConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(raw) - known
        if unknown:
            raise ConfigError(f"unknown training keys {sorted(unknown)}", details={"keys": sorted(unknown)})
        data: Dict[str, Any] = {}
        for key, value in raw.items():
            if key in ("epochs", "batch_size", "seed"):
                data[key] = to_int(value, key)
            elif key in ("lr", "momentum", "beta2", "eps", "weight_decay"):
                data[key] = to_float(value, key)
            elif key == "optimizer":
                data[key] = to_choice(value, OPTIMIZERS, key)
            elif key == "strategy":
                data[key] = to_choice(value, STRATEGIES, key)
            else:
                data[key] = None if value in (None, "") else str(value)
        return cls(**data)
