"""Adam with bias-corrected moment estimates."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import NumericError, ShapeError
from .tensor import Tensor


@dataclass
class AdamState:
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)


def adam_step(params: dict[str, Tensor], grads: dict[str, np.ndarray], state: AdamState) -> None:
    """Apply one Adam update in place to every parameter named in ``params``.

    Moment buffers are created lazily (as zeros) the first time a name is seen.
    A parameter without an entry in ``grads`` is treated as having zero gradient.
    Raises NumericError if a moment or an updated parameter is not finite.
    """
    for name, p in params.items():
        g = grads.get(name)
        if g is not None and g.shape != p.shape:
            raise ShapeError(f"adam_step: gradient for {name!r} has shape {g.shape}, "
                             f"parameter has {p.shape}")
    state.step += 1
    t = state.step
    b1, b2 = state.beta1, state.beta2
    c1 = 1.0 - b1 ** t
    c2 = 1.0 - b2 ** t
    for name, p in params.items():
        g = grads.get(name)
        if g is None:
            g = np.zeros_like(p.data)
        m = state.m.get(name)
        if m is None:
            m = np.zeros_like(p.data)
            state.v[name] = np.zeros_like(p.data)
        with np.errstate(over="ignore", invalid="ignore"):
            m = b1 * m + (1.0 - b1) * g
            v = b2 * state.v[name] + (1.0 - b2) * (g * g)
            new = p.data - state.lr * (m / c1) / (np.sqrt(v / c2) + state.eps)
        if not (np.isfinite(v).all() and np.isfinite(new).all()):
            raise NumericError(f"adam_step: non-finite update for {name!r}")
        state.m[name] = m
        state.v[name] = v
        p.data = new
