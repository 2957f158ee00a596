"""
Static parameter and MAC accounting, computed from a spec alone.

Counting convention: convolutions cost K*K*(Cin/groups)*Cout MACs per output
pixel, linear layers F*O; batchnorm, activations, pooling, channel shuffles
and elementwise gates count zero. FLOPs are reported as 2*MACs.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterator, List, Optional, Tuple

from fens.core.errors import GeometryError
from fens.tensor.functional import output_size

from .spec import BlockSpec, CostReport, ModelSpec, make_divisible


@dataclass(frozen=True)
class Atom:
    """One weight-bearing layer with the spatial size it runs at."""

    layer: int
    kind: str  # conv | linear | bn
    params: int
    macs: int
    running: int = 0


def _conv(layer: int, cin: int, cout: int, k: int, groups: int, bias: bool, h: int, w: int) -> Atom:
    weights = k * k * (cin // groups) * cout
    return Atom(layer, "conv", weights + (cout if bias else 0), weights * h * w)


def _bn(layer: int, channels: int) -> Atom:
    return Atom(layer, "bn", 2 * channels, 0, running=2 * channels)


def _conv_unit(
    layer: int,
    cin: int,
    cout: int,
    k: int,
    hw: Tuple[int, int],
    *,
    stride: int = 1,
    padding: Optional[int] = None,
    groups: int = 1,
    batchnorm: bool = True,
    bias: Optional[bool] = None,
) -> Tuple[List[Atom], Tuple[int, int]]:
    pad = k // 2 if padding is None else padding
    h = output_size(hw[0], k, stride, pad)
    w = output_size(hw[1], k, stride, pad)
    use_bias = (not batchnorm) if bias is None else bias
    atoms = [_conv(layer, cin, cout, k, groups, use_bias, h, w)]
    if batchnorm:
        atoms.append(_bn(layer, cout))
    return atoms, (h, w)


def block_atoms(idx: int, block: BlockSpec, hw: Tuple[int, int], divisor: int) -> Tuple[List[Atom], Tuple[int, int]]:
    b = block
    atoms: List[Atom] = []
    if b.kind == "plain-conv":
        return _conv_unit(idx, b.in_channels, b.out_channels, b.kernel, hw, stride=b.stride,
                          padding=b.padding, batchnorm=b.batchnorm, bias=b.bias)
    if b.kind == "max-pool":
        size = (output_size(hw[0], b.kernel, b.stride, b.pad), output_size(hw[1], b.kernel, b.stride, b.pad))
        return [], size
    if b.kind == "depthwise-separable":
        dw, out_hw = _conv_unit(idx, b.in_channels, b.in_channels, b.kernel, hw, stride=b.stride,
                                padding=b.padding, groups=b.in_channels, batchnorm=b.batchnorm, bias=b.bias)
        pw, out_hw = _conv_unit(idx, b.in_channels, b.out_channels, 1, out_hw, padding=0,
                                batchnorm=b.batchnorm, bias=b.bias)
        return dw + pw, out_hw
    if b.kind == "inverted-residual":
        mid = b.mid_channels
        cur = hw
        if mid != b.in_channels:
            part, cur = _conv_unit(idx, b.in_channels, mid, 1, cur, padding=0)
            atoms += part
        part, cur = _conv_unit(idx, mid, mid, b.kernel, cur, stride=b.stride, padding=b.padding, groups=mid)
        atoms += part
        if b.se:
            squeeze = make_divisible(mid / b.se_reduction, divisor)
            atoms.append(_conv(idx, mid, squeeze, 1, 1, True, 1, 1))
            atoms.append(_conv(idx, squeeze, mid, 1, 1, True, 1, 1))
        part, cur = _conv_unit(idx, mid, b.out_channels, 1, cur, padding=0)
        return atoms + part, cur
    if b.kind == "shuffle-unit":
        branch = b.out_channels // 2
        cur = hw
        if b.stride == 2:
            part, _ = _conv_unit(idx, b.in_channels, b.in_channels, b.kernel, hw, stride=2,
                                 padding=b.padding, groups=b.in_channels)
            atoms += part
            part, _ = _conv_unit(idx, b.in_channels, branch, 1, _after(hw, b), padding=0)
            atoms += part
            main_in = b.in_channels
        else:
            main_in = branch
        part, cur = _conv_unit(idx, main_in, branch, 1, cur, padding=0)
        atoms += part
        part, cur = _conv_unit(idx, branch, branch, b.kernel, cur, stride=b.stride,
                               padding=b.padding, groups=branch)
        atoms += part
        part, cur = _conv_unit(idx, branch, branch, 1, cur, padding=0)
        return atoms + part, cur
    if b.kind == "fire":
        part, cur = _conv_unit(idx, b.in_channels, b.squeeze, 1, hw, padding=0,
                               batchnorm=b.batchnorm, bias=b.bias)
        atoms += part
        part, _ = _conv_unit(idx, b.squeeze, b.expand1x1, 1, cur, padding=0,
                             batchnorm=b.batchnorm, bias=b.bias)
        atoms += part
        part, _ = _conv_unit(idx, b.squeeze, b.expand3x3, 3, cur, padding=1,
                             batchnorm=b.batchnorm, bias=b.bias)
        return atoms + part, cur
    raise GeometryError(f"cannot account for block kind {b.kind!r}")


def _after(hw: Tuple[int, int], b: BlockSpec) -> Tuple[int, int]:
    return output_size(hw[0], b.kernel, b.stride, b.pad), output_size(hw[1], b.kernel, b.stride, b.pad)


def iter_atoms(spec: ModelSpec, input_shape: Optional[Tuple[int, int, int]] = None) -> Iterator[Atom]:
    """
    Yield every weight-bearing layer in forward order. Raises GeometryError
    when the stride chain underflows the input.
    """
    _, h, w = input_shape or spec.input_shape
    hw = (h, w)
    for idx, block in enumerate(spec.blocks):
        try:
            atoms, hw = block_atoms(idx, block, hw, spec.channel_divisor)
        except GeometryError as exc:
            raise GeometryError(
                f"input too small for the stride chain at block {idx} ({block.kind})",
                details={"block": idx, "spatial": list(hw), **exc.details},
            ) from exc
        yield from atoms
    layer = len(spec.blocks)
    features = spec.feature_channels
    if spec.head.kind == "conv":
        yield _conv(layer, features, spec.num_classes, 1, 1, True, hw[0], hw[1])
        return
    for hidden in spec.head.hidden:
        yield Atom(layer, "linear", features * hidden + hidden, features * hidden)
        features = hidden
        layer += 1
    yield Atom(layer, "linear", features * spec.num_classes + spec.num_classes, features * spec.num_classes)


def count_params(spec: ModelSpec) -> CostReport:
    params = running = 0
    for atom in iter_atoms(spec):
        params += atom.params
        running += atom.running
    return CostReport(params=params, running_stats=running)


def count_flops(spec: ModelSpec, input_shape: Optional[Tuple[int, int, int]] = None) -> CostReport:
    params = running = macs = 0
    for atom in iter_atoms(spec, input_shape):
        params += atom.params
        running += atom.running
        macs += atom.macs
    return CostReport(params=params, macs=macs, running_stats=running)


def head_params(spec: ModelSpec) -> int:
    """
    Learned parameters at or after the feature/classifier boundary.
    """
    return sum(atom.params for atom in iter_atoms(spec) if atom.layer >= (spec.boundary or 0))
