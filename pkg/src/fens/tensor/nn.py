"""
Module containers: named parameters, running-stat buffers and train/eval mode.
"""

from __future__ import annotations

from typing import Dict, Iterator, List, Optional, Tuple

import numpy as np

from . import functional as F
from .params import ParamTensor, kaiming_uniform
from .tensor import Tensor, get_default_dtype


class Module:
    def __init__(self) -> None:
        self._params: Dict[str, ParamTensor] = {}
        self._buffers: Dict[str, np.ndarray] = {}
        self._children: Dict[str, "Module"] = {}
        self.training = True

    # registration -------------------------------------------------------

    def add_param(self, name: str, data: np.ndarray) -> ParamTensor:
        param = ParamTensor(data, name=name)
        self._params[name] = param
        return param

    def add_buffer(self, name: str, data: np.ndarray) -> np.ndarray:
        buf = np.array(data, dtype=get_default_dtype())
        self._buffers[name] = buf
        return buf

    def add_child(self, name: str, module: "Module") -> "Module":
        self._children[name] = module
        return module

    # traversal ----------------------------------------------------------

    def named_parameters(self, prefix: str = "") -> Iterator[Tuple[str, ParamTensor]]:
        for name, param in self._params.items():
            yield prefix + name, param
        for child_name, child in self._children.items():
            yield from child.named_parameters(f"{prefix}{child_name}.")

    def named_buffers(self, prefix: str = "") -> Iterator[Tuple[str, np.ndarray]]:
        for name, buf in self._buffers.items():
            yield prefix + name, buf
        for child_name, child in self._children.items():
            yield from child.named_buffers(f"{prefix}{child_name}.")

    def modules(self) -> Iterator["Module"]:
        yield self
        for child in self._children.values():
            yield from child.modules()

    def parameters(self) -> List[ParamTensor]:
        return [p for _, p in self.named_parameters()]

    def train(self, mode: bool = True) -> "Module":
        for module in self.modules():
            module.training = mode
        return self

    def eval(self) -> "Module":
        return self.train(False)

    def zero_grad(self) -> None:
        for param in self.parameters():
            param.zero_grad()

    def forward(self, x: Tensor) -> Tensor:
        raise NotImplementedError

    def __call__(self, x: Tensor) -> Tensor:
        return self.forward(x)


class Conv2d(Module):
    def __init__(
        self,
        in_channels: int,
        out_channels: int,
        kernel: int,
        rng: np.random.Generator,
        *,
        stride: int = 1,
        padding: Optional[int] = None,
        groups: int = 1,
        bias: bool = False,
    ) -> None:
        super().__init__()
        self.stride = stride
        self.padding = kernel // 2 if padding is None else padding
        self.groups = groups
        fan_in = (in_channels // groups) * kernel * kernel
        self.weight = self.add_param(
            "weight", kaiming_uniform((out_channels, in_channels // groups, kernel, kernel), fan_in, rng)
        )
        self.bias = self.add_param("bias", np.zeros(out_channels)) if bias else None

    def forward(self, x: Tensor) -> Tensor:
        return F.conv2d(x, self.weight, self.bias, stride=self.stride, padding=self.padding, groups=self.groups)


class Linear(Module):
    def __init__(self, in_features: int, out_features: int, rng: np.random.Generator) -> None:
        super().__init__()
        self.weight = self.add_param("weight", kaiming_uniform((out_features, in_features), in_features, rng))
        self.bias = self.add_param("bias", np.zeros(out_features))

    def forward(self, x: Tensor) -> Tensor:
        return F.linear(x, self.weight, self.bias)


class BatchNorm2d(Module):
    def __init__(self, channels: int, momentum: float = 0.1, eps: float = 1e-5) -> None:
        super().__init__()
        self.momentum = momentum
        self.eps = eps
        self.weight = self.add_param("weight", np.ones(channels))
        self.bias = self.add_param("bias", np.zeros(channels))
        self.running_mean = self.add_buffer("running_mean", np.zeros(channels))
        self.running_var = self.add_buffer("running_var", np.ones(channels))

    def forward(self, x: Tensor) -> Tensor:
        # frozen layers keep their running statistics
        use_batch = self.training and self.weight.trainable
        return F.batchnorm2d(
            x,
            self.weight,
            self.bias,
            self.running_mean,
            self.running_var,
            training=use_batch,
            momentum=self.momentum,
            eps=self.eps,
        )


class Activation(Module):
    def __init__(self, kind: str) -> None:
        super().__init__()
        self.kind = kind

    def forward(self, x: Tensor) -> Tensor:
        return F.activation(x, self.kind)


class Sequential(Module):
    def __init__(self, *layers: Module) -> None:
        super().__init__()
        self.layers: List[Module] = []
        for idx, layer in enumerate(layers):
            self.append(layer, str(idx))

    def append(self, layer: Module, name: Optional[str] = None) -> None:
        self.add_child(name or str(len(self.layers)), layer)
        self.layers.append(layer)

    def forward(self, x: Tensor) -> Tensor:
        for layer in self.layers:
            x = layer(x)
        return x


def conv_bn_act(
    in_channels: int,
    out_channels: int,
    kernel: int,
    rng: np.random.Generator,
    *,
    stride: int = 1,
    padding: Optional[int] = None,
    groups: int = 1,
    activation: Optional[str] = "relu",
    batchnorm: bool = True,
    bias: Optional[bool] = None,
) -> Sequential:
    bias = (not batchnorm) if bias is None else bias
    layers: List[Module] = [
        Conv2d(in_channels, out_channels, kernel, rng, stride=stride, padding=padding, groups=groups, bias=bias)
    ]
    if batchnorm:
        layers.append(BatchNorm2d(out_channels))
    if activation and activation != "identity":
        layers.append(Activation(activation))
    seq = Sequential()
    names = ["conv", "bn", "act"] if batchnorm else ["conv", "act"]
    for name, layer in zip(names, layers):
        seq.append(layer, name)
    return seq
