"""
Model assembly and the operations the rest of fens calls on a model.
"""

from __future__ import annotations

import logging
from typing import Dict, List, Optional, Tuple

import numpy as np

from fens.core.errors import DimensionError, SpecError
from fens.core.logs import log_event
from fens.core.rng import stream
from fens.tensor import functional as F
from fens.tensor.nn import Activation, Conv2d, Linear, Module, Sequential
from fens.tensor.params import ParamTensor
from fens.tensor.tensor import Tensor

from .blocks import build_block
from .cost import count_flops, iter_atoms
from .spec import ModelSpec, resolve_spec

logger = logging.getLogger(__name__)

STRATEGIES = ("tfs", "hft", "fft")


class Model(Module):
    """
    Feature layers (`features.<i>`) followed by the final class projection
    (`classifier`). Layer i of the spec maps to `features.<i>` for
    i < boundary; the boundary layer is the classifier.
    """

    def __init__(self, spec: ModelSpec, rng: np.random.Generator) -> None:
        super().__init__()
        self.spec = spec
        self.features: List[Module] = []
        for idx, block in enumerate(spec.blocks):
            self.features.append(self.add_child(f"features.{idx}", build_block(block, rng, spec.channel_divisor)))

        width = spec.feature_channels
        for offset, hidden in enumerate(spec.head.hidden):
            layer = Sequential()
            layer.append(Linear(width, hidden, rng), "fc")
            layer.append(Activation(spec.head.activation), "act")
            self.features.append(self.add_child(f"features.{len(spec.blocks) + offset}", layer))
            width = hidden

        if spec.head.kind == "conv":
            self.classifier: Module = self.add_child(
                "classifier", Conv2d(width, spec.num_classes, 1, rng, padding=0, bias=True)
            )
        else:
            self.classifier = self.add_child("classifier", Linear(width, spec.num_classes, rng))

    def forward(self, x: Tensor) -> Tensor:
        n_blocks = len(self.spec.blocks)
        for layer in self.features[:n_blocks]:
            x = layer(x)
        if self.spec.head.kind == "conv":
            x = F.activation(self.classifier(x), self.spec.head.activation)
            return F.flatten(F.pool2d(x, "global-avg"))
        x = F.flatten(F.pool2d(x, "global-avg"))
        for layer in self.features[n_blocks:]:
            x = layer(x)
        return self.classifier(x)

    def state_arrays(self) -> Dict[str, np.ndarray]:
        arrays = {name: p.data for name, p in self.named_parameters()}
        arrays.update(self.named_buffers())
        return arrays

    def param_count(self, trainable_only: bool = False) -> int:
        return sum(p.size for p in self.parameters() if p.trainable or not trainable_only)


def build_model(
    family: str,
    preset: str = "micro",
    width: float = 1.0,
    input_shape: Optional[Tuple[int, int, int]] = None,
    num_classes: Optional[int] = None,
    *,
    seed: int = 0,
    rng: Optional[np.random.Generator] = None,
) -> Model:
    spec = resolve_spec(family, preset, width, input_shape, num_classes)
    return build_from_spec(spec, rng if rng is not None else stream(seed, "init"))


def build_from_spec(spec: ModelSpec, rng: np.random.Generator) -> Model:
    spec.validate()
    # geometry underflow surfaces here, before any weights are drawn
    cost = count_flops(spec)
    model = Model(spec, rng)
    log_event(
        logger,
        "model_built",
        level=logging.DEBUG,
        family=spec.family,
        preset=spec.preset,
        width=spec.width,
        params=cost.params,
        macs=cost.macs,
    )
    return model


def forward_logits(model: Model, batch: Tensor) -> Tensor:
    if not isinstance(batch, Tensor):
        batch = Tensor(batch)
    expected = tuple(model.spec.input_shape)
    if batch.ndim != 4 or tuple(batch.shape[1:]) != expected:
        raise DimensionError(
            f"batch shape {batch.shape} does not match model input (N, {expected[0]}, {expected[1]}, {expected[2]})",
            details={"got": list(batch.shape), "expected": list(expected)},
        )
    if batch.shape[0] == 0:
        return Tensor(np.zeros((0, model.spec.num_classes), dtype=batch.dtype))
    return model(batch)


def classifier_parameters(model: Model) -> List[str]:
    boundary = model.spec.boundary
    if boundary is None:
        raise SpecError("missing feature/classifier boundary marker")
    names = []
    for name, _ in model.named_parameters():
        head, _, rest = name.partition(".")
        if head == "classifier" or (head == "features" and int(rest.split(".", 1)[0]) >= boundary):
            names.append(name)
    return names


def trainable_mask(model: Model, strategy: str) -> Dict[str, bool]:
    """
    tfs and fft train everything; hft trains only layers at or after the boundary.
    """
    if strategy not in STRATEGIES:
        raise SpecError(f"unknown strategy {strategy!r}", details={"known": list(STRATEGIES)})
    if strategy != "hft":
        return {name: True for name, _ in model.named_parameters()}
    head = set(classifier_parameters(model))
    return {name: name in head for name, _ in model.named_parameters()}


def apply_mask(model: Model, mask: Dict[str, bool]) -> None:
    params: Dict[str, ParamTensor] = dict(model.named_parameters())
    for name, flag in mask.items():
        params[name].trainable = flag


def cost_of(model: Model) -> Dict[str, int]:
    report = count_flops(model.spec)
    return {**report.to_dict(), "atoms": sum(1 for _ in iter_atoms(model.spec))}
