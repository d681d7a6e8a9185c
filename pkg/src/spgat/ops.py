"""Differentiable primitives.

Each function computes its forward value with numpy (or a kernel from
:mod:`spgat.kernels`) and records a closure for the backward pass. Backward
closures never mutate the incoming gradient.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .errors import DegenerateBatchError, LabelError, ShapeError
from .tensor import Tensor, as_tensor, make_output


def _unbroadcast(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    if g.shape == shape:
        return g
    lead = g.ndim - len(shape)
    if lead:
        g = g.sum(axis=tuple(range(lead)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g


# ---------------------------------------------------------------- elementwise

def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)

    def bw(g):
        return _unbroadcast(g, a.shape), _unbroadcast(g, b.shape)

    return make_output(a.data + b.data, (a, b), bw, "add")


def sub(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)

    def bw(g):
        return _unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)

    return make_output(a.data - b.data, (a, b), bw, "sub")


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)

    def bw(g):
        ga = _unbroadcast(g * b.data, a.shape) if a.requires_grad else None
        gb = _unbroadcast(g * a.data, b.shape) if b.requires_grad else None
        return ga, gb

    return make_output(a.data * b.data, (a, b), bw, "mul")


def leaky_relu(x: Tensor, slope: float = 0.2) -> Tensor:
    if not 0.0 <= slope < 1.0:
        raise ValueError(f"slope must lie in [0, 1), got {slope}")
    xd = np.ascontiguousarray(x.data)

    def bw(g):
        return (kernels.leaky_relu_bwd(xd, np.ascontiguousarray(g), slope),)

    return make_output(kernels.leaky_relu_fwd(xd, slope), (x,), bw, "leaky_relu")


def relu(x: Tensor) -> Tensor:
    return leaky_relu(x, 0.0)


def sigmoid(x: Tensor) -> Tensor:
    # split by sign so exp never overflows
    d = x.data
    e = np.exp(-np.abs(d))
    y = np.where(d >= 0, 1.0 / (1.0 + e), e / (1.0 + e))

    def bw(g):
        return (g * y * (1.0 - y),)

    return make_output(y, (x,), bw, "sigmoid")


def absolute(x: Tensor) -> Tensor:
    def bw(g):
        return (g * np.sign(x.data),)

    return make_output(np.abs(x.data), (x,), bw, "abs")


# ------------------------------------------------------------------ reshaping

def reshape(x: Tensor, shape) -> Tensor:
    def bw(g):
        return (g.reshape(x.shape),)

    return make_output(x.data.reshape(shape), (x,), bw, "reshape")


def transpose(x: Tensor, axes) -> Tensor:
    axes = tuple(axes)
    inv = tuple(np.argsort(axes))

    def bw(g):
        return (g.transpose(inv),)

    return make_output(np.ascontiguousarray(x.data.transpose(axes)), (x,), bw, "transpose")


def take(x: Tensor, index: int, axis: int) -> Tensor:
    """Select a single position along ``axis`` (the axis is dropped)."""
    axis = axis % x.ndim

    def bw(g):
        full = np.zeros_like(x.data)
        sl = [slice(None)] * x.ndim
        sl[axis] = index
        full[tuple(sl)] = g
        return (full,)

    return make_output(np.take(x.data, index, axis=axis), (x,), bw, "take")


def concat(xs, axis: int) -> Tensor:
    xs = [as_tensor(t) for t in xs]
    sizes = [t.shape[axis] for t in xs]
    cuts = np.cumsum(sizes)[:-1]

    def bw(g):
        return tuple(np.split(g, cuts, axis=axis))

    return make_output(np.concatenate([t.data for t in xs], axis=axis), xs, bw, "concat")


# ----------------------------------------------------------------- reductions

def sum(x: Tensor, axis=None, keepdims: bool = False) -> Tensor:  # noqa: A001
    def bw(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, x.shape).copy(),)

    return make_output(np.asarray(x.data.sum(axis=axis, keepdims=keepdims)), (x,), bw, "sum")


def mean(x: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    if axis is None:
        n = x.size
    else:
        ax = (axis,) if np.isscalar(axis) else tuple(axis)
        n = int(np.prod([x.shape[a] for a in ax]))

    def bw(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g / n, x.shape).copy(),)

    return make_output(np.asarray(x.data.mean(axis=axis, keepdims=keepdims)), (x,), bw, "mean")


# ------------------------------------------------------------- linear algebra

def matmul(a: Tensor, b: Tensor) -> Tensor:
    """Batched matrix product over the last two axes; batch axes must agree."""
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim < 2 or b.ndim < 2 or a.shape[-1] != b.shape[-2]:
        raise ShapeError(f"matmul: incompatible shapes {a.shape} and {b.shape}")

    def bw(g):
        ga = gb = None
        if a.requires_grad:
            ga = _unbroadcast(np.matmul(g, np.swapaxes(b.data, -1, -2)), a.shape)
        if b.requires_grad:
            gb = _unbroadcast(np.matmul(np.swapaxes(a.data, -1, -2), g), b.shape)
        return ga, gb

    return make_output(np.matmul(a.data, b.data), (a, b), bw, "matmul")


def linear(x: Tensor, weight: Tensor, bias: Tensor | None = None) -> Tensor:
    """Affine map over the last axis: ``x @ weight.T + bias``."""
    din = weight.shape[1]
    if x.shape[-1] != din:
        raise ShapeError(f"linear: input width {x.shape[-1]} != weight in-width {din}")
    if bias is not None and bias.shape != (weight.shape[0],):
        raise ShapeError(f"linear: bias shape {bias.shape} != ({weight.shape[0]},)")
    x2 = x.data.reshape(-1, din)
    y2 = x2 @ weight.data.T
    if bias is not None:
        y2 += bias.data
    out_shape = x.shape[:-1] + (weight.shape[0],)
    inputs = (x, weight) if bias is None else (x, weight, bias)

    def bw(g):
        g2 = g.reshape(-1, weight.shape[0])
        gx = (g2 @ weight.data).reshape(x.shape) if x.requires_grad else None
        gw = g2.T @ x2 if weight.requires_grad else None
        if bias is None:
            return gx, gw
        return gx, gw, g2.sum(axis=0)

    return make_output(y2.reshape(out_shape), inputs, bw, "linear")


# -------------------------------------------------------- spectral-volume ops
# Volumes are laid out [B, C, S, H, W]; internally viewed as [B, C, S*H*W].

def _as_volume(x: Tensor, what: str) -> tuple[int, int, int, int, int]:
    if x.ndim != 5:
        raise ShapeError(f"{what}: expected [B,C,S,H,W], got shape {x.shape}")
    return x.shape


def conv_pointwise(x: Tensor, weight: Tensor, bias: Tensor) -> Tensor:
    """Per-location linear map across channels (a 1x1x1 convolution)."""
    B, Cin, S, H, W = _as_volume(x, "conv_pointwise")
    if weight.ndim != 2 or weight.shape[1] != Cin or bias.shape != (weight.shape[0],):
        raise ShapeError(f"conv_pointwise: weight {weight.shape} / bias {bias.shape} "
                         f"do not fit {Cin} input channels")
    Cout = weight.shape[0]
    x3 = np.ascontiguousarray(x.data).reshape(B, Cin, -1)
    y3 = np.matmul(weight.data, x3)
    finite = kernels.add_bias_(y3, bias.data)

    def bw(g):
        g3 = np.ascontiguousarray(g).reshape(B, Cout, -1)
        gx = np.matmul(weight.data.T, g3).reshape(x.shape) if x.requires_grad else None
        gw = np.matmul(g3, x3.transpose(0, 2, 1)).sum(axis=0) if weight.requires_grad else None
        gb = kernels.channel_sum(g3)
        return gx, gw, gb

    return make_output(y3.reshape(B, Cout, S, H, W), (x, weight, bias), bw, "conv_pointwise",
                       finite=finite)


def atrous_offsets(kernel: int, rate: int) -> np.ndarray:
    """Spectral tap offsets relative to the output position, centred by padding."""
    pad = rate * (kernel - 1) // 2
    return np.arange(kernel, dtype=np.int64) * rate - pad


def atrous_conv_spectral(x: Tensor, weight: Tensor, bias: Tensor, rate: int,
                         padding: str = "zeros") -> Tensor:
    """Dilated convolution along the spectral axis with a K x 1 x 1 kernel.

    ``y[b,o,s,i,j] = bias[o] + sum_c sum_k x[b,c,s + rate*k - pad,i,j] * w[o,c,k]``
    with ``pad = rate*(K-1)/2``, so the spectral length is preserved. Taps that
    fall outside the spectrum read zero, or wrap around when
    ``padding="circular"``.
    """
    B, Cin, S, H, W = _as_volume(x, "atrous_conv_spectral")
    if weight.ndim != 3 or weight.shape[1] != Cin:
        raise ShapeError(f"atrous_conv_spectral: weight {weight.shape} does not fit "
                         f"{Cin} input channels")
    Cout, _, K = weight.shape
    if K % 2 == 0:
        raise ShapeError(f"atrous_conv_spectral: kernel length must be odd, got {K}")
    if bias.shape != (Cout,):
        raise ShapeError(f"atrous_conv_spectral: bias shape {bias.shape} != ({Cout},)")
    if int(rate) != rate or rate < 1:
        raise ValueError(f"dilation rate must be a positive integer, got {rate}")
    if padding not in ("zeros", "circular"):
        raise ValueError(f"unknown padding mode {padding!r}")
    circular = padding == "circular"
    HW = H * W
    offsets = atrous_offsets(K, int(rate))
    x3 = np.ascontiguousarray(x.data).reshape(B, Cin, -1)
    # rows of w_stack are (tap, out-channel) pairs
    w_stack = np.ascontiguousarray(weight.data.transpose(2, 0, 1)).reshape(K * Cout, Cin)
    z = np.matmul(w_stack, x3).reshape(B, K, Cout, -1)
    y3 = kernels.shift_sum(z, bias.data, offsets, S, HW, circular)
    del z

    def bw(g):
        g3 = np.ascontiguousarray(g).reshape(B, Cout, -1)
        dz = kernels.shift_stack(g3, offsets, S, HW, circular).reshape(B, K * Cout, -1)
        gx = np.matmul(w_stack.T, dz).reshape(x.shape) if x.requires_grad else None
        gw = None
        if weight.requires_grad:
            gws = np.matmul(dz, x3.transpose(0, 2, 1)).sum(axis=0)
            gw = np.ascontiguousarray(gws.reshape(K, Cout, Cin).transpose(1, 2, 0))
        gb = kernels.channel_sum(g3)
        return gx, gw, gb

    return make_output(y3.reshape(B, Cout, S, H, W), (x, weight, bias), bw,
                       "atrous_conv_spectral")


@dataclass
class BatchNormState:
    """Running statistics of one batch-norm layer (mutated in train mode)."""

    running_mean: np.ndarray
    running_var: np.ndarray

    @classmethod
    def fresh(cls, channels: int) -> "BatchNormState":
        return cls(np.zeros(channels), np.ones(channels))

    def copy(self) -> "BatchNormState":
        return BatchNormState(self.running_mean.copy(), self.running_var.copy())


def batch_norm(x: Tensor, gamma: Tensor, beta: Tensor, state: BatchNormState,
               training: bool, eps: float = 1e-5, momentum: float = 0.1) -> Tensor:
    """Per-channel normalisation over every non-channel axis.

    Train mode uses batch statistics (biased variance) and folds them into
    ``state`` by exponential moving average; eval mode reads ``state`` only.
    """
    if x.ndim < 2:
        raise ShapeError(f"batch_norm: need [B,C,...], got shape {x.shape}")
    B, C = x.shape[:2]
    if gamma.shape != (C,) or beta.shape != (C,):
        raise ShapeError(f"batch_norm: gamma/beta must have shape ({C},)")
    x3 = np.ascontiguousarray(x.data).reshape(B, C, -1)
    n = B * x3.shape[2]
    if training:
        if n < 2:
            raise DegenerateBatchError(
                "batch_norm in train mode needs at least 2 values per channel")
        mu, var = kernels.bn_stats(x3)
        state.running_mean = (1.0 - momentum) * state.running_mean + momentum * mu
        state.running_var = (1.0 - momentum) * state.running_var + momentum * var
    else:
        mu, var = state.running_mean, state.running_var
    invstd = 1.0 / np.sqrt(var + eps)
    y3 = kernels.bn_forward(x3, mu, invstd, gamma.data, beta.data)

    def bw(g):
        g3 = np.ascontiguousarray(g).reshape(B, C, -1)
        if training:
            dx, dgamma, dbeta = kernels.bn_backward(x3, g3, mu, invstd, gamma.data)
        else:
            # statistics are constants in eval mode
            dx = g3 * (gamma.data * invstd)[None, :, None]
            xhat = (x3 - mu[None, :, None]) * invstd[None, :, None]
            dgamma = (g3 * xhat).sum(axis=(0, 2))
            dbeta = g3.sum(axis=(0, 2))
        return dx.reshape(x.shape), dgamma, dbeta

    return make_output(y3.reshape(x.shape), (x, gamma, beta), bw, "batch_norm")


def adaptive_avg_pool_spectral(x: Tensor) -> Tensor:
    """Mean over the spectral axis; spatial axes are kept."""
    _as_volume(x, "adaptive_avg_pool_spectral")
    S = x.shape[2]

    def bw(g):
        return (np.broadcast_to(g / S, x.shape).copy(),)

    return make_output(x.data.mean(axis=2, keepdims=True), (x,), bw,
                       "adaptive_avg_pool_spectral")


def repeat_spectral(x: Tensor, length: int) -> Tensor:
    """Broadcast a single spectral slice ``[B,C,1,H,W]`` to ``length`` slices."""
    B, C, S, H, W = _as_volume(x, "repeat_spectral")
    if S != 1:
        raise ShapeError(f"repeat_spectral: expected spectral extent 1, got {S}")

    def bw(g):
        return (g.sum(axis=2, keepdims=True),)

    data = np.ascontiguousarray(np.broadcast_to(x.data, (B, C, length, H, W)))
    return make_output(data, (x,), bw, "repeat_spectral")


# ------------------------------------------------------ probabilities & loss

def softmax(x: Tensor) -> Tensor:
    """Softmax along the last axis, shifted by the row max for stability."""
    z = x.data - x.data.max(axis=-1, keepdims=True)
    e = np.exp(z)
    y = e / e.sum(axis=-1, keepdims=True)

    def bw(g):
        return (y * (g - (g * y).sum(axis=-1, keepdims=True)),)

    return make_output(y, (x,), bw, "softmax")


def cross_entropy(logits: Tensor, labels) -> Tensor:
    """Mean negative log-likelihood of integer ``labels`` under ``softmax(logits)``."""
    if logits.ndim != 2:
        raise ShapeError(f"cross_entropy: logits must be [B,C], got {logits.shape}")
    B, C = logits.shape
    labels = np.asarray(labels)
    if labels.shape != (B,):
        raise ShapeError(f"cross_entropy: expected {B} labels, got shape {labels.shape}")
    if labels.size and (labels.min() < 0 or labels.max() >= C):
        raise LabelError(f"cross_entropy: labels must lie in [0, {C}), "
                         f"got range [{labels.min()}, {labels.max()}]")
    labels = labels.astype(np.int64)
    m = logits.data.max(axis=1, keepdims=True)
    z = logits.data - m
    lse = np.log(np.exp(z).sum(axis=1))
    rows = np.arange(B)
    loss = (lse - z[rows, labels]).mean()

    def bw(g):
        p = np.exp(z - lse[:, None])
        p[rows, labels] -= 1.0
        return (p * (g / B),)

    return make_output(np.asarray(loss), (logits,), bw, "cross_entropy")
