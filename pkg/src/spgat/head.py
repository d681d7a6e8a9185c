"""Merging the per-stream node features and classifying the centre pixel.

The attention merge folds levels pairwise from coarsest to finest. At each
step a sigmoid gate, computed from the node-averaged features of the two
levels, decides per channel how much of the finer level to take::

    g = sigmoid(W [mean_N(f_fine); mean_N(m)] + b)
    m = g * f_fine + (1 - g) * m
"""

from __future__ import annotations

import numpy as np

from . import ops
from .errors import ConfigError, ShapeError
from .pyramid import uniform_init
from .tensor import Tensor

MERGES = ("attention", "average")


def init_head(rng, levels: int, d: int, classes: int, params: dict) -> None:
    for i in range(levels - 1):
        params[f"head.gate{i}.w"] = uniform_init(rng, (d, 2 * d), 2 * d)
        params[f"head.gate{i}.b"] = Tensor(np.zeros(d), requires_grad=True)
    params["head.cls.w"] = uniform_init(rng, (classes, d), d)
    params["head.cls.b"] = Tensor(np.zeros(classes), requires_grad=True)


def _check_stack(stack):
    if not stack:
        raise ShapeError("stream stack is empty")
    shape = stack[0].shape
    for i, f in enumerate(stack):
        if f.ndim != 3 or f.shape != shape:
            raise ShapeError(f"stream {i} has shape {f.shape}, expected {shape}")


def gate(fine: Tensor, merged: Tensor, params: dict, index: int) -> Tensor:
    """Per-channel coefficients in (0, 1), shape [B, 1, d]."""
    ctx = ops.concat([ops.mean(fine, axis=1), ops.mean(merged, axis=1)], axis=1)  # [B, 2d]
    g = ops.sigmoid(ops.linear(ctx, params[f"head.gate{index}.w"], params[f"head.gate{index}.b"]))
    B, d = g.shape
    return ops.reshape(g, (B, 1, d))


def spectral_attention_merge(stack: list[Tensor], params: dict) -> Tensor:
    """Gated fold of ``stack`` (finest first) starting from the coarsest level."""
    _check_stack(stack)
    m = stack[-1]
    for i in range(len(stack) - 2, -1, -1):
        fine = stack[i]
        g = gate(fine, m, params, i)
        m = ops.add(ops.mul(g, fine), ops.mul(ops.sub(1.0, g), m))
    return m


def average_merge(stack: list[Tensor]) -> Tensor:
    _check_stack(stack)
    if len(stack) == 1:
        return stack[0]
    total = stack[0]
    for f in stack[1:]:
        total = ops.add(total, f)
    return ops.mul(total, 1.0 / len(stack))


def merge(stack, params, kind: str) -> Tensor:
    if kind == "attention":
        return spectral_attention_merge(stack, params)
    if kind == "average":
        return average_merge(stack)
    raise ConfigError(f"merge must be one of {MERGES}, got {kind!r}")


def center_index(nodes: int) -> int:
    side = int(round(np.sqrt(nodes)))
    if side * side != nodes or side % 2 == 0:
        raise ConfigError(f"{nodes} nodes do not form an odd square patch")
    return (nodes - 1) // 2


def classify_center(merged: Tensor, params: dict) -> Tensor:
    """Logits [B, C] from the centre node of each patch."""
    if merged.ndim != 3:
        raise ShapeError(f"merged features must be [B,N,d], got {merged.shape}")
    c = center_index(merged.shape[1])
    return ops.linear(ops.take(merged, c, axis=1), params["head.cls.w"], params["head.cls.b"])
