"""
Dense tensors with a per-operation tape for reverse-mode gradients.

Every differentiable op is a `Function`. `Function.apply` runs the numpy
forward, checks the result is finite and, when gradients are enabled and an
input requires them, records the node with a monotonically increasing tape
sequence number. `backward(loss)` replays the recorded nodes reachable from
the loss in reverse sequence order.
"""

from __future__ import annotations

import itertools
import threading
from contextlib import contextmanager
from typing import Any, Dict, Iterator, List, Optional, Sequence, Tuple, Union

import numpy as np

from fens.core.errors import NumericError, StateError

ArrayLike = Union[np.ndarray, float, int, Sequence[Any]]

_DTYPES = {"float32": np.float32, "float64": np.float64}
_tape_counter = itertools.count()
_local = threading.local()


def _get(name: str, default: Any) -> Any:
    return getattr(_local, name, default)


def get_default_dtype() -> np.dtype:
    return np.dtype(_get("dtype", np.float32))


def set_default_dtype(name: str) -> None:
    if name not in _DTYPES:
        raise ValueError(f"unsupported dtype {name!r}; expected one of {sorted(_DTYPES)}")
    _local.dtype = _DTYPES[name]


@contextmanager
def precision(name: str) -> Iterator[None]:
    """
    Switch the default compute dtype for the current thread, e.g. float64 for gradient checks.
    """
    previous = _get("dtype", np.float32)
    set_default_dtype(name)
    try:
        yield
    finally:
        _local.dtype = previous


def is_grad_enabled() -> bool:
    return _get("grad_enabled", True)


@contextmanager
def no_grad() -> Iterator[None]:
    previous = is_grad_enabled()
    _local.grad_enabled = False
    try:
        yield
    finally:
        _local.grad_enabled = previous


def check_finite(array: np.ndarray, where: str) -> None:
    if array.size and not np.isfinite(array).all():
        bad = int(np.size(array) - np.count_nonzero(np.isfinite(array)))
        raise NumericError(f"non-finite values after {where}", details={"op": where, "count": bad})


class Tensor:
    """
    A dense array plus the gradient bookkeeping needed by the tape.
    """

    __slots__ = ("data", "requires_grad", "grad", "creator", "name", "__weakref__")

    def __init__(
        self,
        data: ArrayLike,
        *,
        requires_grad: bool = False,
        creator: Optional["Function"] = None,
        name: Optional[str] = None,
        dtype: Optional[Any] = None,
    ) -> None:
        if isinstance(data, np.ndarray) and dtype is None and data.dtype in (np.float32, np.float64):
            array = data
        else:
            array = np.asarray(data, dtype=dtype or get_default_dtype())
        self.data = array
        self.requires_grad = bool(requires_grad)
        self.grad: Optional[np.ndarray] = None
        self.creator = creator
        self.name = name

    @property
    def shape(self) -> Tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def dtype(self) -> np.dtype:
        return self.data.dtype

    @property
    def size(self) -> int:
        return int(self.data.size)

    def numpy(self) -> np.ndarray:
        return self.data

    def detach(self) -> "Tensor":
        return Tensor(self.data)

    def backward(self) -> None:
        backward(self)

    def __add__(self, other: "Tensor") -> "Tensor":
        from .functional import add

        return add(self, other)

    def __mul__(self, other: "Tensor") -> "Tensor":
        from .functional import mul

        return mul(self, other)

    def __repr__(self) -> str:
        label = f" name={self.name}" if self.name else ""
        return f"Tensor(shape={self.shape}, dtype={self.dtype}{label}, requires_grad={self.requires_grad})"


class Function:
    """
    Base class for differentiable operations.

    Subclasses implement `forward(*arrays, **kwargs) -> ndarray` and
    `backward(grad) -> tuple` with one entry (ndarray or None) per input.
    """

    def __init__(self, *inputs: Tensor) -> None:
        self.inputs: Tuple[Tensor, ...] = inputs
        self.seq = -1
        self.consumed = False

    def forward(self, *arrays: np.ndarray, **kwargs: Any) -> np.ndarray:
        raise NotImplementedError

    def backward(self, grad: np.ndarray) -> Tuple[Optional[np.ndarray], ...]:
        raise NotImplementedError

    @classmethod
    def apply(cls, *inputs: Tensor, **kwargs: Any) -> Tensor:
        func = cls(*inputs)
        out = func.forward(*(t.data for t in inputs), **kwargs)
        check_finite(out, cls.__name__)
        requires_grad = is_grad_enabled() and any(t.requires_grad for t in inputs)
        if not requires_grad:
            func.inputs = ()
            return Tensor(out)
        func.seq = next(_tape_counter)
        return Tensor(out, requires_grad=True, creator=func)


def _collect(loss: Tensor) -> List[Function]:
    nodes: Dict[int, Function] = {}
    stack = [loss.creator]
    while stack:
        fn = stack.pop()
        if fn is None or id(fn) in nodes:
            continue
        if fn.consumed:
            raise StateError("backward called twice over the same recorded forward pass")
        nodes[id(fn)] = fn
        stack.extend(t.creator for t in fn.inputs if t.creator is not None)
    return sorted(nodes.values(), key=lambda f: f.seq, reverse=True)


def backward(loss: Tensor, grad: Optional[np.ndarray] = None) -> None:
    """
    Populate `.grad` on every leaf tensor that requires gradients.
    """
    if loss.creator is None:
        raise StateError("backward called before a recorded forward pass")
    if grad is None:
        grad = np.ones_like(loss.data)

    grads: Dict[int, np.ndarray] = {id(loss.creator): grad}
    for fn in _collect(loss):
        out_grad = grads.pop(id(fn), None)
        fn.consumed = True
        if out_grad is None:
            fn.inputs = ()
            continue
        in_grads = fn.backward(out_grad)
        for tensor, g in zip(fn.inputs, in_grads):
            if g is None or not tensor.requires_grad:
                continue
            check_finite(g, f"{type(fn).__name__}.backward")
            if tensor.creator is not None:
                key = id(tensor.creator)
                grads[key] = g if key not in grads else grads[key] + g
            elif tensor.grad is None:
                tensor.grad = np.array(g, dtype=tensor.data.dtype, copy=True)
            else:
                tensor.grad += g
        fn.inputs = ()
