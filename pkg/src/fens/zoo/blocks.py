"""
Runtime modules for each BlockSpec kind.
"""

from __future__ import annotations

import numpy as np

from fens.core.errors import SpecError
from fens.tensor import functional as F
from fens.tensor.nn import Conv2d, Module, conv_bn_act
from fens.tensor.tensor import Tensor

from .spec import BlockSpec, make_divisible


class PlainConv(Module):
    def __init__(self, spec: BlockSpec, rng: np.random.Generator) -> None:
        super().__init__()
        self.body = self.add_child("body", conv_bn_act(
            spec.in_channels, spec.out_channels, spec.kernel, rng,
            stride=spec.stride, padding=spec.pad, activation=spec.activation,
            batchnorm=spec.batchnorm, bias=spec.bias,
        ))

    def forward(self, x: Tensor) -> Tensor:
        return self.body(x)


class MaxPool(Module):
    def __init__(self, spec: BlockSpec, rng: np.random.Generator) -> None:
        super().__init__()
        self.kernel, self.stride, self.padding = spec.kernel, spec.stride, spec.pad

    def forward(self, x: Tensor) -> Tensor:
        return F.pool2d(x, "max", self.kernel, self.stride, self.padding)


class DepthwiseSeparable(Module):
    def __init__(self, spec: BlockSpec, rng: np.random.Generator) -> None:
        super().__init__()
        c = spec.in_channels
        self.depthwise = self.add_child("depthwise", conv_bn_act(
            c, c, spec.kernel, rng, stride=spec.stride, padding=spec.pad, groups=c,
            activation=spec.activation, batchnorm=spec.batchnorm, bias=spec.bias,
        ))
        self.pointwise = self.add_child("pointwise", conv_bn_act(
            c, spec.out_channels, 1, rng, padding=0,
            activation=None if spec.linear_output else spec.activation,
            batchnorm=spec.batchnorm, bias=spec.bias,
        ))

    def forward(self, x: Tensor) -> Tensor:
        return self.pointwise(self.depthwise(x))


class SqueezeExcite(Module):
    """Channel gate: global pool, reduce, relu, expand, hard-sigmoid, rescale."""

    def __init__(self, channels: int, squeeze: int, rng: np.random.Generator) -> None:
        super().__init__()
        self.reduce = self.add_child("reduce", Conv2d(channels, squeeze, 1, rng, padding=0, bias=True))
        self.expand = self.add_child("expand", Conv2d(squeeze, channels, 1, rng, padding=0, bias=True))

    def forward(self, x: Tensor) -> Tensor:
        scale = F.pool2d(x, "global-avg")
        scale = F.activation(self.reduce(scale), "relu")
        scale = F.activation(self.expand(scale), "hard-sigmoid")
        return F.mul(x, scale)


class InvertedResidual(Module):
    def __init__(self, spec: BlockSpec, rng: np.random.Generator, divisor: int) -> None:
        super().__init__()
        mid = spec.mid_channels
        self.residual = spec.residual
        self.expand = None
        if mid != spec.in_channels:
            self.expand = self.add_child("expand", conv_bn_act(
                spec.in_channels, mid, 1, rng, padding=0, activation=spec.activation))
        self.depthwise = self.add_child("depthwise", conv_bn_act(
            mid, mid, spec.kernel, rng, stride=spec.stride, padding=spec.pad, groups=mid,
            activation=spec.activation))
        self.se = None
        if spec.se:
            squeeze = make_divisible(mid / spec.se_reduction, divisor)
            self.se = self.add_child("se", SqueezeExcite(mid, squeeze, rng))
        self.project = self.add_child("project", conv_bn_act(
            mid, spec.out_channels, 1, rng, padding=0, activation=None))

    def forward(self, x: Tensor) -> Tensor:
        out = self.expand(x) if self.expand is not None else x
        out = self.depthwise(out)
        if self.se is not None:
            out = self.se(out)
        out = self.project(out)
        return F.add(x, out) if self.residual else out


class ShuffleUnit(Module):
    """
    Stride 1: split channels in half, transform one half, concatenate, shuffle.
    Stride 2: both branches see the full input and each emits half the output.
    """

    def __init__(self, spec: BlockSpec, rng: np.random.Generator) -> None:
        super().__init__()
        branch = spec.out_channels // 2
        self.stride = spec.stride
        self.branch = branch
        self.shortcut = None
        main_in = branch
        if spec.stride == 2:
            c = spec.in_channels
            self.shortcut = self.add_child("shortcut", conv_bn_act(
                c, c, spec.kernel, rng, stride=2, padding=spec.pad, groups=c, activation=None))
            self.shortcut.append(conv_bn_act(c, branch, 1, rng, padding=0, activation=spec.activation), "pw")
            main_in = c
        self.main = self.add_child("main", conv_bn_act(
            main_in, branch, 1, rng, padding=0, activation=spec.activation))
        self.main.append(conv_bn_act(
            branch, branch, spec.kernel, rng, stride=spec.stride, padding=spec.pad, groups=branch,
            activation=None), "dw")
        self.main.append(conv_bn_act(branch, branch, 1, rng, padding=0, activation=spec.activation), "pw")

    def forward(self, x: Tensor) -> Tensor:
        if self.stride == 1:
            keep, work = F.split_channels(x, self.branch)
            out = F.concat([keep, self.main(work)])
        else:
            out = F.concat([self.shortcut(x), self.main(x)])
        return F.channel_shuffle(out, 2)


class Fire(Module):
    def __init__(self, spec: BlockSpec, rng: np.random.Generator) -> None:
        super().__init__()
        opts = dict(activation=spec.activation, batchnorm=spec.batchnorm, bias=spec.bias)
        self.squeeze = self.add_child("squeeze", conv_bn_act(
            spec.in_channels, spec.squeeze, 1, rng, padding=0, **opts))
        self.expand1x1 = self.add_child("expand1x1", conv_bn_act(
            spec.squeeze, spec.expand1x1, 1, rng, padding=0, **opts))
        self.expand3x3 = self.add_child("expand3x3", conv_bn_act(
            spec.squeeze, spec.expand3x3, 3, rng, padding=1, **opts))

    def forward(self, x: Tensor) -> Tensor:
        s = self.squeeze(x)
        return F.concat([self.expand1x1(s), self.expand3x3(s)])


def build_block(spec: BlockSpec, rng: np.random.Generator, divisor: int) -> Module:
    if spec.kind == "plain-conv":
        return PlainConv(spec, rng)
    if spec.kind == "max-pool":
        return MaxPool(spec, rng)
    if spec.kind == "depthwise-separable":
        return DepthwiseSeparable(spec, rng)
    if spec.kind == "inverted-residual":
        return InvertedResidual(spec, rng, divisor)
    if spec.kind == "shuffle-unit":
        return ShuffleUnit(spec, rng)
    if spec.kind == "fire":
        return Fire(spec, rng)
    raise SpecError(f"unknown block kind {spec.kind!r}")
