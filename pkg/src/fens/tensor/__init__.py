"""
Minimal dense-tensor compute with reverse-mode gradients.
"""

from .functional import (
    activation,
    add,
    batchnorm2d,
    channel_shuffle,
    concat,
    conv2d,
    flatten,
    linear,
    mul,
    pool2d,
    softmax,
    softmax_cross_entropy,
    split_channels,
)
from .optim import OptimizerState, optimizer_step
from .params import ParamTensor
from .tensor import (
    Function,
    Tensor,
    backward,
    get_default_dtype,
    no_grad,
    precision,
    set_default_dtype,
)

__all__ = [
    "Function",
    "OptimizerState",
    "ParamTensor",
    "Tensor",
    "activation",
    "add",
    "backward",
    "batchnorm2d",
    "channel_shuffle",
    "concat",
    "conv2d",
    "flatten",
    "get_default_dtype",
    "linear",
    "mul",
    "no_grad",
    "optimizer_step",
    "pool2d",
    "precision",
    "set_default_dtype",
    "softmax",
    "softmax_cross_entropy",
    "split_channels",
]
