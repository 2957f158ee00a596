"""
Differentiable operations over `Tensor`.

Convolution is cross-correlation with zero padding and no dilation. Each
kernel offset (i, j) contributes one strided slice of the padded input, so
forward and backward are K*K small matmuls (BLAS for groups == 1, elementwise
products for depthwise) instead of one large im2col buffer.
"""

from __future__ import annotations

from typing import Optional, Sequence, Tuple

import numpy as np

from fens.core.errors import (
    DimensionError,
    DivisibilityError,
    GeometryError,
    LabelError,
    StatisticsError,
)

from .tensor import Function, Tensor

ACTIVATIONS = ("identity", "relu", "relu6", "sigmoid", "hard-sigmoid", "hard-swish")


# ---------------------------
# Geometry helpers
# ---------------------------

def output_size(size: int, kernel: int, stride: int, padding: int) -> int:
    """
    floor((size + 2*padding - kernel) / stride) + 1; trailing rows a stride skips are dropped.
    """
    span = size + 2 * padding - kernel
    if stride < 1 or kernel < 1 or padding < 0 or span < 0:
        raise GeometryError(
            f"window does not fit: size={size} kernel={kernel} stride={stride} padding={padding}",
            details={"size": size, "kernel": kernel, "stride": stride, "padding": padding},
        )
    return span // stride + 1


def _pad(x: np.ndarray, padding: int, value: float = 0.0) -> np.ndarray:
    if padding == 0:
        return x
    return np.pad(x, ((0, 0), (0, 0), (padding, padding), (padding, padding)), constant_values=value)


def _window(i: int, j: int, stride: int, h_out: int, w_out: int) -> Tuple[slice, slice, slice, slice]:
    return (
        slice(None),
        slice(None),
        slice(i, i + stride * (h_out - 1) + 1, stride),
        slice(j, j + stride * (w_out - 1) + 1, stride),
    )


def _unbroadcast(grad: np.ndarray, shape: Tuple[int, ...]) -> np.ndarray:
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


# ---------------------------
# Convolution
# ---------------------------

def _group_mix(w: np.ndarray, x: np.ndarray) -> np.ndarray:
    """
    w: (G, Og, Cg), x: (N, G, Cg, H, W) -> (N, G, Og, H, W)
    """
    groups, og, cg = w.shape
    if groups == 1:
        out = np.tensordot(w[0], x[:, 0], axes=([1], [1]))  # (Og, N, H, W)
        return out.transpose(1, 0, 2, 3)[:, None]
    if og == 1 and cg == 1:
        return x * w[None, :, :, :, None]
    return np.einsum("goc,ngchw->ngohw", w, x, optimize=True)


def _group_mix_grad_w(grad: np.ndarray, x: np.ndarray) -> np.ndarray:
    """
    grad: (N, G, Og, H, W), x: (N, G, Cg, H, W) -> (G, Og, Cg)
    """
    if grad.shape[1] == 1:
        return np.tensordot(grad[:, 0], x[:, 0], axes=([0, 2, 3], [0, 2, 3]))[None]
    if grad.shape[2] == 1 and x.shape[2] == 1:
        return (grad * x).sum(axis=(0, 3, 4))[:, :, None]
    return np.einsum("ngohw,ngchw->goc", grad, x, optimize=True)


def _group_mix_grad_x(w: np.ndarray, grad: np.ndarray) -> np.ndarray:
    """
    w: (G, Og, Cg), grad: (N, G, Og, H, W) -> (N, G, Cg, H, W)
    """
    groups, og, cg = w.shape
    if groups == 1:
        out = np.tensordot(w[0], grad[:, 0], axes=([0], [1]))  # (Cg, N, H, W)
        return out.transpose(1, 0, 2, 3)[:, None]
    if og == 1 and cg == 1:
        return grad * w[None, :, :, :, None]
    return np.einsum("goc,ngohw->ngchw", w, grad, optimize=True)


class Conv2d(Function):
    def forward(self, x, w, b=None, *, stride=1, padding=0, groups=1):
        if x.ndim != 4 or w.ndim != 4:
            raise DimensionError(f"conv2d expects 4-D input and weight, got {x.shape} and {w.shape}")
        n, c_in, h, wd = x.shape
        c_out, cg, k, k2 = w.shape
        if k != k2:
            raise DimensionError(f"conv2d expects square kernels, got {k}x{k2}")
        if groups < 1 or c_in % groups or c_out % groups:
            raise DimensionError(
                f"channels not divisible by groups: in={c_in} out={c_out} groups={groups}",
                details={"in": c_in, "out": c_out, "groups": groups},
            )
        if cg != c_in // groups:
            raise DimensionError(f"weight expects {cg * groups} input channels, input has {c_in}")
        if b is not None and b.shape != (c_out,):
            raise DimensionError(f"bias shape {b.shape} does not match {c_out} output channels")
        h_out = output_size(h, k, stride, padding)
        w_out = output_size(wd, k, stride, padding)

        self.meta = (n, c_in, h, wd, c_out, k, stride, padding, groups, h_out, w_out)
        xp = _pad(x, padding).reshape(n, groups, cg, h + 2 * padding, wd + 2 * padding)
        wg = w.reshape(groups, c_out // groups, cg, k, k)
        out = np.zeros((n, groups, c_out // groups, h_out, w_out), dtype=x.dtype)
        for i in range(k):
            for j in range(k):
                sl = (slice(None),) + _window(i, j, stride, h_out, w_out)
                out += _group_mix(wg[..., i, j], xp[sl])
        out = out.reshape(n, c_out, h_out, w_out)
        if b is not None:
            out += b[None, :, None, None]
        self.xp = xp
        self.wg = wg
        self.has_bias = b is not None
        return out

    def backward(self, grad):
        n, c_in, h, wd, c_out, k, stride, padding, groups, h_out, w_out = self.meta
        g = grad.reshape(n, groups, c_out // groups, h_out, w_out)
        dxp = np.zeros_like(self.xp)
        dwg = np.zeros_like(self.wg)
        for i in range(k):
            for j in range(k):
                sl = (slice(None),) + _window(i, j, stride, h_out, w_out)
                dwg[..., i, j] = _group_mix_grad_w(g, self.xp[sl])
                dxp[sl] += _group_mix_grad_x(self.wg[..., i, j], g)
        dxp = dxp.reshape(n, c_in, h + 2 * padding, wd + 2 * padding)
        dx = dxp[:, :, padding:padding + h, padding:padding + wd] if padding else dxp
        dw = dwg.reshape(c_out, c_in // groups, k, k)
        db = grad.sum(axis=(0, 2, 3)) if self.has_bias else None
        return (dx, dw, db) if self.has_bias else (dx, dw)


def conv2d(
    x: Tensor,
    weight: Tensor,
    bias: Optional[Tensor] = None,
    stride: int = 1,
    padding: int = 0,
    groups: int = 1,
) -> Tensor:
    inputs = (x, weight) if bias is None else (x, weight, bias)
    return Conv2d.apply(*inputs, stride=stride, padding=padding, groups=groups)


# ---------------------------
# Linear
# ---------------------------

class Linear(Function):
    def forward(self, x, w, b):
        if x.ndim != 2 or w.ndim != 2 or x.shape[1] != w.shape[1]:
            raise DimensionError(f"linear: input {x.shape} incompatible with weight {w.shape}")
        if b.shape != (w.shape[0],):
            raise DimensionError(f"linear: bias {b.shape} does not match {w.shape[0]} outputs")
        self.x, self.w = x, w
        return x @ w.T + b

    def backward(self, grad):
        return grad @ self.w, grad.T @ self.x, grad.sum(axis=0)


def linear(x: Tensor, weight: Tensor, bias: Tensor) -> Tensor:
    return Linear.apply(x, weight, bias)


# ---------------------------
# Batch normalization
# ---------------------------

class BatchNorm2d(Function):
    def forward(self, x, gamma, beta, *, mean, var, eps):
        self.m = x.shape[0] * x.shape[2] * x.shape[3]
        self.inv_std = (1.0 / np.sqrt(var + eps)).astype(x.dtype)
        self.xhat = (x - mean[None, :, None, None]) * self.inv_std[None, :, None, None]
        self.gamma = gamma
        self.batch_stats = False
        return self.xhat * gamma[None, :, None, None] + beta[None, :, None, None]

    def backward(self, grad):
        dgamma = (grad * self.xhat).sum(axis=(0, 2, 3))
        dbeta = grad.sum(axis=(0, 2, 3))
        dxhat = grad * self.gamma[None, :, None, None]
        inv_std = self.inv_std[None, :, None, None]
        if not self.batch_stats:
            return dxhat * inv_std, dgamma, dbeta
        sum_dxhat = dxhat.sum(axis=(0, 2, 3), keepdims=True)
        sum_dxhat_xhat = (dxhat * self.xhat).sum(axis=(0, 2, 3), keepdims=True)
        dx = inv_std / self.m * (self.m * dxhat - sum_dxhat - self.xhat * sum_dxhat_xhat)
        return dx, dgamma, dbeta


class _BatchNormTrain(BatchNorm2d):
    def forward(self, x, gamma, beta, *, mean, var, eps):
        out = super().forward(x, gamma, beta, mean=mean, var=var, eps=eps)
        self.batch_stats = True
        return out


def batchnorm2d(
    x: Tensor,
    gamma: Tensor,
    beta: Tensor,
    running_mean: np.ndarray,
    running_var: np.ndarray,
    *,
    training: bool,
    momentum: float = 0.1,
    eps: float = 1e-5,
) -> Tensor:
    """
    Train mode normalizes by (biased) batch statistics and updates the running
    stats in place by EMA (the running variance uses the unbiased estimate).
    Eval mode uses the running stats only.
    """
    if x.ndim != 4 or x.shape[1] != gamma.shape[0]:
        raise DimensionError(f"batchnorm2d: input {x.shape} does not match {gamma.shape[0]} channels")
    if not training:
        return BatchNorm2d.apply(x, gamma, beta, mean=running_mean, var=running_var, eps=eps)

    m = x.shape[0] * x.shape[2] * x.shape[3]
    if m < 2:
        raise StatisticsError(
            "batchnorm2d in train mode needs at least 2 values per channel",
            details={"shape": list(x.shape)},
        )
    mean = x.data.mean(axis=(0, 2, 3))
    var = x.data.var(axis=(0, 2, 3))
    out = _BatchNormTrain.apply(x, gamma, beta, mean=mean, var=var, eps=eps)
    running_mean *= 1.0 - momentum
    running_mean += momentum * mean
    running_var *= 1.0 - momentum
    running_var += momentum * var * (m / (m - 1))
    return out


# ---------------------------
# Activations
# ---------------------------

class Activation(Function):
    def forward(self, x, *, kind):
        self.kind = kind
        self.x = x
        if kind == "identity":
            return x.copy()
        if kind == "relu":
            return np.maximum(x, 0)
        if kind == "relu6":
            return np.clip(x, 0, 6)
        if kind == "sigmoid":
            self.y = 1.0 / (1.0 + np.exp(-x))
            return self.y
        if kind == "hard-sigmoid":
            return np.clip(x + 3, 0, 6) / 6
        if kind == "hard-swish":
            return x * np.clip(x + 3, 0, 6) / 6
        raise ValueError(f"unknown activation {kind!r}")

    def backward(self, grad):
        x, kind = self.x, self.kind
        if kind == "identity":
            return (grad,)
        if kind == "relu":
            return (grad * (x > 0),)
        if kind == "relu6":
            return (grad * ((x > 0) & (x < 6)),)
        if kind == "sigmoid":
            return (grad * self.y * (1 - self.y),)
        if kind == "hard-sigmoid":
            return (grad * ((x > -3) & (x < 3)) / 6,)
        inner = (x > -3) & (x < 3)
        local = np.where(x >= 3, 1.0, np.where(inner, (2 * x + 3) / 6, 0.0)).astype(x.dtype)
        return (grad * local,)


def activation(x: Tensor, kind: str) -> Tensor:
    if kind not in ACTIVATIONS:
        raise ValueError(f"unknown activation {kind!r}; expected one of {ACTIVATIONS}")
    return Activation.apply(x, kind=kind)


# ---------------------------
# Pooling
# ---------------------------

class MaxPool2d(Function):
    def forward(self, x, *, kernel, stride, padding):
        n, c, h, w = x.shape
        h_out = output_size(h, kernel, stride, padding)
        w_out = output_size(w, kernel, stride, padding)
        xp = _pad(x, padding, value=-np.inf)
        windows = np.stack(
            [xp[_window(i, j, stride, h_out, w_out)] for i in range(kernel) for j in range(kernel)]
        )
        self.arg = windows.argmax(axis=0)
        self.meta = (x.shape, kernel, stride, padding, h_out, w_out)
        return np.take_along_axis(windows, self.arg[None], axis=0)[0]

    def backward(self, grad):
        shape, kernel, stride, padding, h_out, w_out = self.meta
        n, c, h, w = shape
        dxp = np.zeros((n, c, h + 2 * padding, w + 2 * padding), dtype=grad.dtype)
        for idx in range(kernel * kernel):
            i, j = divmod(idx, kernel)
            dxp[_window(i, j, stride, h_out, w_out)] += grad * (self.arg == idx)
        return (dxp[:, :, padding:padding + h, padding:padding + w] if padding else dxp,)


class AvgPool2d(Function):
    def forward(self, x, *, kernel, stride):
        n, c, h, w = x.shape
        h_out = output_size(h, kernel, stride, 0)
        w_out = output_size(w, kernel, stride, 0)
        out = np.zeros((n, c, h_out, w_out), dtype=x.dtype)
        for i in range(kernel):
            for j in range(kernel):
                out += x[_window(i, j, stride, h_out, w_out)]
        self.meta = (x.shape, kernel, stride, h_out, w_out)
        return out / (kernel * kernel)

    def backward(self, grad):
        shape, kernel, stride, h_out, w_out = self.meta
        dx = np.zeros(shape, dtype=grad.dtype)
        share = grad / (kernel * kernel)
        for i in range(kernel):
            for j in range(kernel):
                dx[_window(i, j, stride, h_out, w_out)] += share
        return (dx,)


class GlobalAvgPool2d(Function):
    def forward(self, x):
        self.shape = x.shape
        return x.mean(axis=(2, 3), keepdims=True)

    def backward(self, grad):
        n, c, h, w = self.shape
        return (np.broadcast_to(grad / (h * w), self.shape).copy(),)


def pool2d(x: Tensor, kind: str, kernel: int = 2, stride: Optional[int] = None, padding: int = 0) -> Tensor:
    if x.ndim != 4:
        raise DimensionError(f"pool2d expects a 4-D input, got {x.shape}")
    if kind == "global-avg":
        return GlobalAvgPool2d.apply(x)
    stride = kernel if stride is None else stride
    if kind == "max":
        return MaxPool2d.apply(x, kernel=kernel, stride=stride, padding=padding)
    if kind == "avg":
        if padding:
            raise GeometryError("avg pooling does not take padding")
        return AvgPool2d.apply(x, kernel=kernel, stride=stride)
    raise ValueError(f"unknown pool kind {kind!r}")


# ---------------------------
# Channel ops
# ---------------------------

def shuffle_permutation(channels: int, groups: int) -> np.ndarray:
    if groups < 1 or channels % groups:
        raise DivisibilityError(
            f"channel_shuffle: {channels} channels not divisible by {groups} groups",
            details={"channels": channels, "groups": groups},
        )
    j = np.arange(channels)
    return (j % groups) * (channels // groups) + (j // groups)


class ChannelShuffle(Function):
    def forward(self, x, *, groups):
        self.perm = shuffle_permutation(x.shape[1], groups)
        return x[:, self.perm]

    def backward(self, grad):
        dx = np.empty_like(grad)
        dx[:, self.perm] = grad
        return (dx,)


def channel_shuffle(x: Tensor, groups: int) -> Tensor:
    if x.ndim != 4:
        raise DimensionError(f"channel_shuffle expects a 4-D input, got {x.shape}")
    return ChannelShuffle.apply(x, groups=groups)


class Concat(Function):
    def forward(self, *arrays, axis):
        self.axis = axis
        self.sizes = [a.shape[axis] for a in arrays]
        return np.concatenate(arrays, axis=axis)

    def backward(self, grad):
        bounds = np.cumsum(self.sizes)[:-1]
        return tuple(np.split(grad, bounds, axis=self.axis))


def concat(tensors: Sequence[Tensor], axis: int = 1) -> Tensor:
    return Concat.apply(*tensors, axis=axis)


class ChannelSlice(Function):
    def forward(self, x, *, start, stop):
        self.shape, self.start, self.stop = x.shape, start, stop
        return x[:, start:stop].copy()

    def backward(self, grad):
        dx = np.zeros(self.shape, dtype=grad.dtype)
        dx[:, self.start:self.stop] = grad
        return (dx,)


def split_channels(x: Tensor, at: int) -> Tuple[Tensor, Tensor]:
    channels = x.shape[1]
    if not 0 < at < channels:
        raise DimensionError(f"cannot split {channels} channels at {at}")
    return ChannelSlice.apply(x, start=0, stop=at), ChannelSlice.apply(x, start=at, stop=channels)


# ---------------------------
# Elementwise / shape
# ---------------------------

class Add(Function):
    def forward(self, a, b):
        self.shapes = (a.shape, b.shape)
        return a + b

    def backward(self, grad):
        return _unbroadcast(grad, self.shapes[0]), _unbroadcast(grad, self.shapes[1])


def add(a: Tensor, b: Tensor) -> Tensor:
    return Add.apply(a, b)


class Mul(Function):
    def forward(self, a, b):
        self.a, self.b = a, b
        return a * b

    def backward(self, grad):
        return _unbroadcast(grad * self.b, self.a.shape), _unbroadcast(grad * self.a, self.b.shape)


def mul(a: Tensor, b: Tensor) -> Tensor:
    return Mul.apply(a, b)


class Flatten(Function):
    def forward(self, x):
        self.shape = x.shape
        return x.reshape(x.shape[0], -1)

    def backward(self, grad):
        return (grad.reshape(self.shape),)


def flatten(x: Tensor) -> Tensor:
    return Flatten.apply(x)


# ---------------------------
# Loss
# ---------------------------

def softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=1, keepdims=True)
    exp = np.exp(shifted)
    return exp / exp.sum(axis=1, keepdims=True)


class SoftmaxCrossEntropy(Function):
    def forward(self, logits, *, labels):
        n = logits.shape[0]
        shifted = logits - logits.max(axis=1, keepdims=True)
        log_norm = np.log(np.exp(shifted).sum(axis=1, keepdims=True))
        log_probs = shifted - log_norm
        self.probs = np.exp(log_probs)
        self.labels = labels
        return np.asarray(-log_probs[np.arange(n), labels].mean(), dtype=logits.dtype)

    def backward(self, grad):
        n = self.probs.shape[0]
        dlogits = self.probs.copy()
        dlogits[np.arange(n), self.labels] -= 1.0
        return (dlogits * (grad / n),)


def softmax_cross_entropy(logits: Tensor, labels: np.ndarray) -> Tuple[Tensor, np.ndarray]:
    """
    Mean negative log-softmax at the true label, plus the row probabilities.
    """
    if logits.ndim != 2:
        raise DimensionError(f"softmax_cross_entropy expects (N, C) logits, got {logits.shape}")
    labels = np.asarray(labels, dtype=np.int64)
    n, c = logits.shape
    if labels.shape != (n,):
        raise DimensionError(f"labels shape {labels.shape} does not match {n} rows")
    if n == 0:
        raise DimensionError("softmax_cross_entropy needs at least one row")
    if labels.size and (labels.min() < 0 or labels.max() >= c):
        raise LabelError(f"labels must lie in [0, {c})", details={"min": int(labels.min()), "max": int(labels.max())})
    func_out = SoftmaxCrossEntropy.apply(logits, labels=labels)
    probs = softmax(logits.data)
    return func_out, probs
