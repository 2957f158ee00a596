from __future__ import annotations

from typing import Callable, List

import numpy as np
import pytest

from fens.core.errors import DivisibilityError, GeometryError, NumericError, StateError, StatisticsError
from fens.tensor import (
    OptimizerState,
    ParamTensor,
    Tensor,
    activation,
    add,
    backward,
    batchnorm2d,
    channel_shuffle,
    concat,
    conv2d,
    flatten,
    linear,
    mul,
    no_grad,
    optimizer_step,
    pool2d,
    precision,
    softmax_cross_entropy,
    split_channels,
)
from fens.tensor.functional import ACTIVATIONS, output_size, shuffle_permutation

EPS = 1e-6
TOLERANCE = 1e-4
CHECKS = pytest.mark.parametrize("seed", range(12))


def gradcheck(fn: Callable[..., Tensor], *arrays: np.ndarray, seed: int = 0) -> None:
    """
    Compare tape gradients with central differences of sum(fn(*inputs) * R).
    """
    with precision("float64"):
        inputs = [Tensor(np.array(a, dtype=np.float64), requires_grad=True) for a in arrays]
        out = fn(*inputs)
        weights = np.random.default_rng(seed).standard_normal(out.shape)
        backward(out, weights)
        analytic: List[np.ndarray] = [t.grad if t.grad is not None else np.zeros_like(t.data) for t in inputs]

        for k, base in enumerate(arrays):
            base = np.array(base, dtype=np.float64)
            numeric = np.zeros_like(base)
            flat = numeric.reshape(-1)
            for i in range(base.size):
                shifted = []
                for delta in (EPS, -EPS):
                    probe = base.copy().reshape(-1)
                    probe[i] += delta
                    args = [Tensor(a if j != k else probe.reshape(base.shape)) for j, a in enumerate(arrays)]
                    with no_grad():
                        shifted.append(float((fn(*args).data * weights).sum()))
                flat[i] = (shifted[0] - shifted[1]) / (2 * EPS)
            a, n = analytic[k], numeric
            denom = max(np.linalg.norm(a) + np.linalg.norm(n), 1e-12)
            assert np.linalg.norm(a - n) / denom < TOLERANCE, f"input {k}"


def _normal(rng: np.random.Generator, *shape: int) -> np.ndarray:
    return rng.standard_normal(shape)


# ---------------------------
# Gradient checks
# ---------------------------

@CHECKS
def test_conv2d_gradients(seed):
    rng = np.random.default_rng(seed)
    groups, per_group, out_per_group = int(rng.choice([1, 2])), int(rng.integers(1, 3)), int(rng.integers(1, 3))
    size, kernel = int(rng.integers(3, 7)), int(rng.choice([1, 3]))
    stride, padding = int(rng.integers(1, 3)), int(rng.integers(0, 2))
    c_in, c_out = groups * per_group, groups * out_per_group
    x = _normal(rng, int(rng.integers(1, 3)), c_in, size, size)
    w = _normal(rng, c_out, per_group, kernel, kernel)
    if seed % 2:
        b = _normal(rng, c_out)
        gradcheck(lambda x, w, b: conv2d(x, w, b, stride=stride, padding=padding, groups=groups), x, w, b)
    else:
        gradcheck(lambda x, w: conv2d(x, w, stride=stride, padding=padding, groups=groups), x, w)


@CHECKS
def test_depthwise_conv_gradients(seed):
    rng = np.random.default_rng(seed)
    channels, size, stride = int(rng.integers(1, 5)), int(rng.integers(3, 6)), int(rng.integers(1, 3))
    x = _normal(rng, 2, channels, size, size)
    w = _normal(rng, channels, 1, 3, 3)
    gradcheck(lambda x, w: conv2d(x, w, stride=stride, padding=1, groups=channels), x, w)


@CHECKS
def test_linear_gradients(seed):
    rng = np.random.default_rng(seed)
    n, fan_in, fan_out = (int(v) for v in rng.integers(1, 6, size=3))
    gradcheck(linear, _normal(rng, n, fan_in), _normal(rng, fan_out, fan_in), _normal(rng, fan_out))


@CHECKS
def test_batchnorm_train_gradients(seed):
    rng = np.random.default_rng(seed)
    n, channels, size = int(rng.integers(2, 4)), int(rng.integers(1, 4)), int(rng.integers(2, 4))

    def fn(x, gamma, beta):
        return batchnorm2d(x, gamma, beta, np.zeros(channels), np.ones(channels), training=True)

    gradcheck(fn, _normal(rng, n, channels, size, size), _normal(rng, channels), _normal(rng, channels))


@pytest.mark.parametrize("kind", ACTIVATIONS)
@pytest.mark.parametrize("seed", range(4))
def test_activation_gradients(kind, seed):
    rng = np.random.default_rng(seed)
    x = rng.uniform(-8, 8, size=(int(rng.integers(1, 5)), int(rng.integers(1, 6))))
    # keep probes off the kinks at 0, +-3 and 6
    for kink in (0.0, 3.0, -3.0, 6.0):
        x = np.where(np.abs(x - kink) < 1e-3, x + 0.01, x)
    gradcheck(lambda x: activation(x, kind), x)


@pytest.mark.parametrize("kind", ["max", "avg", "global-avg"])
@pytest.mark.parametrize("seed", range(6))
def test_pool_gradients(kind, seed):
    rng = np.random.default_rng(seed)
    size, kernel, padding = int(rng.integers(2, 7)), int(rng.integers(2, 4)), int(rng.integers(0, 2))
    if kernel > size + 2 * padding or (kind == "avg" and padding):
        padding = 0
    if kernel > size:
        kernel = size
    x = rng.permutation(2 * 2 * size * size).reshape(2, 2, size, size) / 7.0
    gradcheck(lambda x: pool2d(x, kind, kernel=kernel, stride=kernel if kind == "avg" else 1, padding=padding), x)


@CHECKS
def test_channel_ops_gradients(seed):
    rng = np.random.default_rng(seed)
    groups, per_group = int(rng.integers(1, 5)), int(rng.integers(1, 4))
    channels = groups * per_group
    x = _normal(rng, 2, channels, 2, 2)
    gradcheck(lambda x: channel_shuffle(x, groups), x)
    if channels > 1:
        gradcheck(lambda x: concat(split_channels(x, 1)[::-1]), x)
    gradcheck(lambda x: flatten(x), x)


@CHECKS
def test_broadcast_add_mul_gradients(seed):
    rng = np.random.default_rng(seed)
    channels = int(rng.integers(1, 5))
    x, gate = _normal(rng, 2, channels, 3, 3), _normal(rng, 2, channels, 1, 1)
    gradcheck(mul, x, gate)
    gradcheck(add, x, _normal(rng, 2, channels, 3, 3))


@CHECKS
def test_softmax_cross_entropy_gradients(seed):
    rng = np.random.default_rng(seed)
    n, classes = int(rng.integers(1, 6)), int(rng.integers(2, 7))
    labels = rng.integers(0, classes, size=n)
    gradcheck(lambda logits: softmax_cross_entropy(logits, labels)[0], _normal(rng, n, classes))


# ---------------------------
# Contracts
# ---------------------------

def test_output_size_floors_and_rejects_negative_span():
    assert output_size(32, 3, 2, 0) == 15
    assert output_size(32, 3, 2, 1) == 16
    assert output_size(7, 2, 2, 0) == 3
    with pytest.raises(GeometryError):
        output_size(2, 3, 1, 0)
    with pytest.raises(GeometryError):
        output_size(8, 3, 0, 1)


@pytest.mark.parametrize("groups, per_group", [(g, p) for g in range(1, 9) for p in range(1, 9)])
def test_shuffle_by_groups_then_by_group_size_is_identity(groups, per_group):
    channels = groups * per_group
    x = Tensor(np.arange(channels * 2, dtype=np.float32).reshape(1, channels, 1, 2))
    restored = channel_shuffle(channel_shuffle(x, groups), per_group)
    np.testing.assert_array_equal(restored.data, x.data)


def test_shuffle_rejects_indivisible_channels():
    with pytest.raises(DivisibilityError):
        shuffle_permutation(6, 4)


def test_backward_twice_is_a_state_error():
    x = Tensor(np.ones((2, 3)), requires_grad=True)
    out = activation(x, "relu")
    backward(out)
    with pytest.raises(StateError):
        backward(out)


def test_backward_without_forward_is_a_state_error():
    with pytest.raises(StateError):
        backward(Tensor(np.ones(3)))


def test_non_finite_output_raises_numeric_error():
    with pytest.raises(NumericError):
        activation(Tensor(np.array([[np.inf, 1.0]])), "relu")


def test_batchnorm_train_needs_two_values_per_channel():
    x = Tensor(np.ones((1, 2, 1, 1)))
    with pytest.raises(StatisticsError):
        batchnorm2d(x, Tensor(np.ones(2)), Tensor(np.zeros(2)), np.zeros(2), np.ones(2), training=True)


def test_no_grad_records_nothing():
    x = Tensor(np.ones((2, 2)), requires_grad=True)
    with no_grad():
        out = activation(x, "relu6")
    assert not out.requires_grad
    assert out.creator is None


def test_precision_context_restores_dtype():
    with precision("float64"):
        assert Tensor([1.0]).dtype == np.float64
    assert Tensor([1.0]).dtype == np.float32


def test_max_pool_padding_never_wins():
    x = Tensor(-np.ones((1, 1, 2, 2)))
    out = pool2d(x, "max", kernel=3, stride=1, padding=1)
    assert out.shape == (1, 1, 2, 2)
    assert (out.data == -1).all()


# ---------------------------
# Optimizers
# ---------------------------

def _params_with_grad(grad):
    live = ParamTensor(np.array([1.0, -2.0]), name="w")
    frozen = ParamTensor(np.array([3.0]), trainable=False, name="frozen")
    idle = ParamTensor(np.array([4.0]), name="idle")
    live.grad = np.array(grad)
    return {"w": live, "frozen": frozen, "idle": idle}


def test_sgd_momentum_steps():
    with precision("float64"):
        params = _params_with_grad([0.5, 1.0])
        state = OptimizerState(kind="sgd-momentum", lr=0.1, momentum=0.9)
        optimizer_step(state, params)
        np.testing.assert_allclose(params["w"].data, [0.95, -2.1])
        optimizer_step(state, params)
        np.testing.assert_allclose(params["w"].data, [0.855, -2.29])
    assert state.step_count == 2
    assert params["frozen"].data.tolist() == [3.0]
    assert params["idle"].data.tolist() == [4.0]
    assert set(state.named_buffers()) == {"optim.w.v"}


def test_adam_first_step_moves_by_lr_times_sign():
    with precision("float64"):
        params = _params_with_grad([0.5, -3.0])
        state = OptimizerState(kind="adam", lr=0.01)
        optimizer_step(state, params)
        np.testing.assert_allclose(params["w"].data, [0.99, -1.99], rtol=1e-6)
    assert set(state.named_buffers()) == {"optim.w.m", "optim.w.v"}


def test_weight_decay_adds_to_the_gradient():
    with precision("float64"):
        params = _params_with_grad([0.0, 0.0])
        state = OptimizerState(kind="sgd-momentum", lr=0.1, weight_decay=0.5)
        optimizer_step(state, params)
        np.testing.assert_allclose(params["w"].data, [0.95, -1.9])
