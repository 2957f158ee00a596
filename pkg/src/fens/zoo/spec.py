"""
Declarative architecture descriptions.

A `ModelSpec` is an ordered chain of `BlockSpec`s followed by a classifier
head. Specs are plain frozen dataclasses so they can be shared between
threads, hashed into stage stamps and round-tripped through the shipped JSON
preset files (see docs/CONTRACT.md for the schema).
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, replace
from importlib import resources
from typing import Any, Dict, List, Mapping, Optional, Tuple

from fens.core.digest import json_digest
from fens.core.errors import SpecError
from fens.tensor.functional import ACTIVATIONS

FAMILIES = ("mobile", "mnas", "shuffle", "squeeze")
PRESETS = ("full", "micro")
BLOCK_KINDS = (
    "plain-conv",
    "depthwise-separable",
    "inverted-residual",
    "shuffle-unit",
    "fire",
    "max-pool",
)
HEAD_KINDS = ("linear", "conv")
FLOPS_CONVENTION = "flops=2*macs"


def make_divisible(value: float, divisor: int) -> int:
    """
    Round a scaled channel count to a multiple of `divisor`, never dropping
    more than 10% below the requested value.
    """
    divisor = max(1, int(divisor))
    rounded = max(divisor, int(value + divisor / 2) // divisor * divisor)
    if rounded < 0.9 * value:
        rounded += divisor
    return rounded


@dataclass(frozen=True)
class BlockSpec:
    kind: str
    in_channels: int
    out_channels: int
    stride: int = 1
    kernel: int = 3
    expansion: float = 1.0
    se: bool = False
    se_reduction: int = 4
    activation: str = "relu"
    squeeze: int = 0
    expand1x1: int = 0
    expand3x3: int = 0
    padding: Optional[int] = None
    batchnorm: bool = True
    bias: Optional[bool] = None
    linear_output: bool = False

    @property
    def pad(self) -> int:
        return self.kernel // 2 if self.padding is None else self.padding

    @property
    def use_bias(self) -> bool:
        return (not self.batchnorm) if self.bias is None else self.bias

    @property
    def mid_channels(self) -> int:
        return int(round(self.in_channels * self.expansion))

    @property
    def residual(self) -> bool:
        return self.kind == "inverted-residual" and self.stride == 1 and self.in_channels == self.out_channels

    def validate(self, where: str = "block") -> None:
        def fail(message: str) -> None:
            raise SpecError(f"{where}: {message}", details={"kind": self.kind})

        if self.kind not in BLOCK_KINDS:
            fail(f"unknown block kind {self.kind!r}")
        if self.stride not in (1, 2):
            fail(f"stride must be 1 or 2, got {self.stride}")
        if self.in_channels < 1 or self.out_channels < 1 or self.kernel < 1:
            fail("channel counts and kernel must be positive")
        if self.activation not in ACTIVATIONS:
            fail(f"unknown activation {self.activation!r}")
        if self.kind == "fire":
            if self.squeeze < 1 or self.expand1x1 < 1 or self.expand3x3 < 1:
                fail("fire needs positive squeeze/expand channels")
            if self.expand1x1 + self.expand3x3 != self.out_channels:
                fail(
                    f"expand1x1 + expand3x3 = {self.expand1x1 + self.expand3x3} "
                    f"!= out_channels {self.out_channels}"
                )
        elif self.kind == "shuffle-unit":
            if self.out_channels % 2:
                fail(f"shuffle-unit output channels must be even, got {self.out_channels}")
            if self.stride == 1 and self.in_channels != self.out_channels:
                fail("stride-1 shuffle-unit keeps its channel count")
        elif self.kind == "max-pool" and self.in_channels != self.out_channels:
            fail("max-pool keeps its channel count")
        elif self.kind == "inverted-residual":
            if self.expansion <= 0:
                fail("expansion ratio must be positive")
            if self.se and self.se_reduction < 1:
                fail("squeeze-excite reduction must be >= 1")

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)


@dataclass(frozen=True)
class HeadSpec:
    kind: str = "linear"
    hidden: Tuple[int, ...] = ()
    activation: str = "relu"

    def validate(self) -> None:
        if self.kind not in HEAD_KINDS:
            raise SpecError(f"unknown head kind {self.kind!r}")
        if self.activation not in ACTIVATIONS:
            raise SpecError(f"unknown head activation {self.activation!r}")
        if self.kind == "conv" and self.hidden:
            raise SpecError("conv head takes no hidden layers")
        if any(h < 1 for h in self.hidden):
            raise SpecError("hidden layer sizes must be positive")


@dataclass(frozen=True)
class ModelSpec:
    family: str
    preset: str
    width: float
    input_shape: Tuple[int, int, int]
    num_classes: int
    blocks: Tuple[BlockSpec, ...]
    head: HeadSpec
    channel_divisor: int = 8
    boundary: Optional[int] = None
    reference: Mapping[str, Any] = field(default_factory=dict)

    @property
    def layer_count(self) -> int:
        """
        Blocks, hidden head layers and the final class projection.
        """
        return len(self.blocks) + len(self.head.hidden) + 1

    @property
    def feature_channels(self) -> int:
        return self.blocks[-1].out_channels

    def validate(self) -> "ModelSpec":
        if self.family not in FAMILIES:
            raise SpecError(f"unknown family {self.family!r}", details={"known": list(FAMILIES)})
        if self.preset not in PRESETS:
            raise SpecError(f"unknown preset {self.preset!r}", details={"known": list(PRESETS)})
        if not self.width > 0:
            raise SpecError(f"width multiplier must be > 0, got {self.width}")
        if len(self.input_shape) != 3 or min(self.input_shape) < 1:
            raise SpecError(f"input shape must be (C, H, W), got {self.input_shape}")
        if self.num_classes < 1:
            raise SpecError("class count must be positive")
        if not self.blocks:
            raise SpecError("model needs at least one block")
        if self.blocks[0].in_channels != self.input_shape[0]:
            raise SpecError(
                f"first block expects {self.blocks[0].in_channels} channels, input has {self.input_shape[0]}"
            )
        for idx, block in enumerate(self.blocks):
            block.validate(f"block {idx}")
            if idx and block.in_channels != self.blocks[idx - 1].out_channels:
                raise SpecError(
                    f"block {idx} expects {block.in_channels} channels, "
                    f"block {idx - 1} produces {self.blocks[idx - 1].out_channels}",
                    details={"block": idx},
                )
        self.head.validate()
        if self.boundary is None:
            raise SpecError("missing feature/classifier boundary marker")
        if not 0 < self.boundary < self.layer_count:
            raise SpecError(
                f"boundary {self.boundary} must split {self.layer_count} layers into two non-empty parts"
            )
        return self

    def to_dict(self) -> Dict[str, Any]:
        return {
            "family": self.family,
            "preset": self.preset,
            "width": self.width,
            "input_shape": list(self.input_shape),
            "num_classes": self.num_classes,
            "channel_divisor": self.channel_divisor,
            "boundary": self.boundary,
            "blocks": [b.to_dict() for b in self.blocks],
            "head": {"kind": self.head.kind, "hidden": list(self.head.hidden), "activation": self.head.activation},
            "reference": dict(self.reference),
        }

    @classmethod
    def from_dict(cls, raw: Mapping[str, Any]) -> "ModelSpec":
        return spec_from_dict(raw)


@dataclass(frozen=True)
class CostReport:
    params: int = 0
    macs: int = 0
    running_stats: int = 0
    convention: str = FLOPS_CONVENTION

    @property
    def flops(self) -> int:
        return 2 * self.macs

    @property
    def gflops(self) -> float:
        return self.flops / 1e9

    def to_dict(self) -> Dict[str, Any]:
        return {
            "params": self.params,
            "running_stats": self.running_stats,
            "macs": self.macs,
            "flops": self.flops,
            "convention": self.convention,
        }


# ---------------------------
# Loading and scaling
# ---------------------------

_BLOCK_FIELDS = set(BlockSpec.__dataclass_fields__)


def block_from_dict(raw: Mapping[str, Any], where: str = "block") -> BlockSpec:
    unknown = set(raw) - _BLOCK_FIELDS
    if unknown:
        raise SpecError(f"{where}: unknown fields {sorted(unknown)}")
    try:
        return BlockSpec(**dict(raw))
    except TypeError as exc:
        raise SpecError(f"{where}: {exc}") from exc


def spec_from_dict(raw: Mapping[str, Any]) -> ModelSpec:
    try:
        blocks = tuple(block_from_dict(b, f"block {i}") for i, b in enumerate(raw["blocks"]))
        head_raw = raw.get("head") or {}
        head = HeadSpec(
            kind=head_raw.get("kind", "linear"),
            hidden=tuple(int(h) for h in head_raw.get("hidden", ())),
            activation=head_raw.get("activation", "relu"),
        )
        boundary = raw.get("boundary")
        if boundary is None:
            boundary = len(blocks) + len(head.hidden)
        return ModelSpec(
            family=str(raw["family"]),
            preset=str(raw["preset"]),
            width=float(raw.get("width", 1.0)),
            input_shape=tuple(int(v) for v in raw["input_shape"]),
            num_classes=int(raw["num_classes"]),
            blocks=blocks,
            head=head,
            channel_divisor=int(raw.get("channel_divisor", 8)),
            boundary=int(boundary),
            reference=dict(raw.get("reference", {})),
        )
    except KeyError as exc:
        raise SpecError(f"preset is missing field {exc.args[0]!r}") from exc


def load_preset(family: str, preset: str) -> ModelSpec:
    if family not in FAMILIES:
        raise SpecError(f"unknown family {family!r}", details={"known": list(FAMILIES)})
    if preset not in PRESETS:
        raise SpecError(f"unknown preset {preset!r}", details={"known": list(PRESETS)})
    text = resources.files("fens.zoo").joinpath("presets", f"{family}-{preset}.json").read_text("utf-8")
    return spec_from_dict(json.loads(text))


def scale_width(spec: ModelSpec, width: float) -> ModelSpec:
    """
    Apply a width multiplier along the chain. Each block takes its input
    channels from its predecessor so the chain stays consistent after
    rounding; image channels and the class count are never scaled.
    """
    if not width > 0:
        raise SpecError(f"width multiplier must be > 0, got {width}")
    if width == 1.0:
        return replace(spec, width=1.0)

    def scaled(c: int) -> int:
        return make_divisible(c * width, spec.channel_divisor)

    blocks: List[BlockSpec] = []
    carried = spec.input_shape[0]
    for block in spec.blocks:
        if block.kind == "fire":
            e1, e3 = scaled(block.expand1x1), scaled(block.expand3x3)
            new = replace(block, in_channels=carried, squeeze=scaled(block.squeeze),
                          expand1x1=e1, expand3x3=e3, out_channels=e1 + e3)
        elif block.kind == "max-pool" or (block.kind == "shuffle-unit" and block.stride == 1):
            new = replace(block, in_channels=carried, out_channels=carried)
        else:
            new = replace(block, in_channels=carried, out_channels=scaled(block.out_channels))
        blocks.append(new)
        carried = new.out_channels
    head = replace(spec.head, hidden=tuple(scaled(h) for h in spec.head.hidden))
    return replace(spec, width=float(width), blocks=tuple(blocks), head=head)


def resolve_spec(
    family: str,
    preset: str,
    width: float = 1.0,
    input_shape: Optional[Tuple[int, int, int]] = None,
    num_classes: Optional[int] = None,
) -> ModelSpec:
    spec = scale_width(load_preset(family, preset), width)
    if input_shape is not None:
        input_shape = tuple(int(v) for v in input_shape)
        if input_shape[0] != spec.input_shape[0]:
            raise SpecError(
                f"{family}-{preset} expects {spec.input_shape[0]} input channels, got {input_shape[0]}"
            )
        spec = replace(spec, input_shape=input_shape)
    if num_classes is not None:
        spec = replace(spec, num_classes=int(num_classes))
    return spec.validate()


def list_presets() -> List[Tuple[str, str]]:
    return [(family, preset) for family in FAMILIES for preset in PRESETS]


def spec_digest(spec: ModelSpec) -> str:
    return json_digest(spec.to_dict())
