"""
Learned parameters and their initialisation.
"""

from __future__ import annotations

import math
from typing import Optional, Sequence

import numpy as np

from .tensor import Tensor, get_default_dtype


class ParamTensor(Tensor):
    """
    A leaf tensor owned by a module. `trainable == False` freezes it: no
    gradient is recorded through it and optimizer steps leave it untouched.
    """

    __slots__ = ()

    def __init__(self, data: np.ndarray, *, trainable: bool = True, name: Optional[str] = None) -> None:
        super().__init__(np.array(data, dtype=get_default_dtype()), requires_grad=trainable, name=name)

    @property
    def trainable(self) -> bool:
        return self.requires_grad

    @trainable.setter
    def trainable(self, value: bool) -> None:
        self.requires_grad = bool(value)
        if not value:
            self.grad = None

    @property
    def gradient(self) -> Tensor:
        grad = self.grad if self.grad is not None else np.zeros_like(self.data)
        return Tensor(grad)

    def zero_grad(self) -> None:
        self.grad = None


def kaiming_uniform(shape: Sequence[int], fan_in: int, rng: np.random.Generator) -> np.ndarray:
    """
    He/Kaiming uniform for ReLU-family nets: U(-b, b), b = sqrt(6 / fan_in).
    """
    bound = math.sqrt(6.0 / max(1, fan_in))
    return rng.uniform(-bound, bound, size=tuple(shape)).astype(get_default_dtype())
