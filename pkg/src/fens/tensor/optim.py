"""
SGD-with-momentum and Adam over named parameter sets.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Dict, Mapping

import numpy as np

from .params import ParamTensor

OPTIMIZERS = ("sgd-momentum", "adam")


@dataclass
class OptimizerState:
    kind: str = "adam"
    lr: float = 1e-3
    momentum: float = 0.9  # sgd momentum or adam beta1
    beta2: float = 0.999
    eps: float = 1e-8
    weight_decay: float = 0.0
    step_count: int = 0
    buffers: Dict[str, Dict[str, np.ndarray]] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if self.kind not in OPTIMIZERS:
            raise ValueError(f"unknown optimizer {self.kind!r}; expected one of {OPTIMIZERS}")

    def hyperparameters(self) -> Dict[str, float]:
        return {
            "lr": self.lr,
            "momentum": self.momentum,
            "beta2": self.beta2,
            "eps": self.eps,
            "weight_decay": self.weight_decay,
        }

    def named_buffers(self) -> Dict[str, np.ndarray]:
        """
        Flat `optim.<param>.<slot>` view used by checkpoints.
        """
        return {
            f"optim.{name}.{slot}": array
            for name, slots in sorted(self.buffers.items())
            for slot, array in sorted(slots.items())
        }

    def load_buffers(self, flat: Mapping[str, np.ndarray]) -> None:
        self.buffers = {}
        for key, array in flat.items():
            _, rest = key.split(".", 1)
            name, slot = rest.rsplit(".", 1)
            self.buffers.setdefault(name, {})[slot] = np.array(array, copy=True)


def optimizer_step(state: OptimizerState, params: Mapping[str, ParamTensor]) -> None:
    """
    One update over every trainable parameter that has a gradient.
    sgd-momentum: v <- m*v + g; p <- p - lr*v.
    adam: bias-corrected first/second moments.
    Weight decay is added to the gradient (L2).
    """
    state.step_count += 1
    t = state.step_count
    for name, param in params.items():
        if not param.trainable or param.grad is None:
            continue
        grad = param.grad
        if state.weight_decay:
            grad = grad + state.weight_decay * param.data
        slots = state.buffers.setdefault(name, {})
        if state.kind == "sgd-momentum":
            v = slots.get("v")
            v = grad.copy() if v is None else state.momentum * v + grad
            slots["v"] = v
            update = state.lr * v
        else:
            m = slots.get("m", np.zeros_like(param.data))
            v = slots.get("v", np.zeros_like(param.data))
            m = state.momentum * m + (1.0 - state.momentum) * grad
            v = state.beta2 * v + (1.0 - state.beta2) * grad * grad
            slots["m"], slots["v"] = m, v
            m_hat = m / (1.0 - state.momentum ** t)
            v_hat = v / (1.0 - state.beta2 ** t)
            update = state.lr * m_hat / (np.sqrt(v_hat) + state.eps)
        param.data -= update.astype(param.data.dtype, copy=False)
