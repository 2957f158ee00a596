"""
Architecture presets for the four embedded families and their cost counters.
"""

from .cost import count_flops, count_params, head_params
from .model import (
    STRATEGIES,
    Model,
    apply_mask,
    build_from_spec,
    build_model,
    forward_logits,
    trainable_mask,
)
from .spec import (
    FAMILIES,
    PRESETS,
    BlockSpec,
    CostReport,
    HeadSpec,
    ModelSpec,
    list_presets,
    load_preset,
    make_divisible,
    resolve_spec,
    scale_width,
    spec_digest,
)

__all__ = [
    "FAMILIES",
    "PRESETS",
    "STRATEGIES",
    "BlockSpec",
    "CostReport",
    "HeadSpec",
    "Model",
    "ModelSpec",
    "apply_mask",
    "build_from_spec",
    "build_model",
    "count_flops",
    "count_params",
    "forward_logits",
    "head_params",
    "list_presets",
    "load_preset",
    "make_divisible",
    "resolve_spec",
    "scale_width",
    "spec_digest",
    "trainable_mask",
]
