"""Finite-difference gradient checks of every primitive and of the full model.

Each case builds a scalar ``sum(op(...) * R)`` with a fixed random ``R`` so
that every output entry contributes with a different weight.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from . import ops
from .gradcheck import GradReport, check_gradients
from .model import ModelConfig, forward, init_model
from .pyramid import PyramidConfig
from .tensor import Tensor

TOLERANCE = 1e-4


@dataclass
class CaseResult:
    name: str
    reports: list[GradReport]

    @property
    def worst(self) -> float:
        return max(r.rel_error for r in self.reports)

    def passed(self, tol: float = TOLERANCE) -> bool:
        return all(r.passed(tol) for r in self.reports)


def _away_from_zero(rng, shape, margin=0.1):
    # keeps kinked primitives (leaky_relu, abs) off their kink under a 1e-5 probe
    x = rng.uniform(margin, 1.0, size=shape)
    return x * rng.choice([-1.0, 1.0], size=shape)


def _weighted(out: Tensor, r: np.ndarray) -> Tensor:
    return ops.sum(ops.mul(out, Tensor(r, _checked=True)))


def primitive_cases(rng: np.random.Generator) -> list[tuple[str, Callable, dict]]:
    """``(name, loss_fn, tensors)`` triples, one per primitive configuration."""
    cases = []

    def add_case(name, fn, out_shape, **tensors):
        ts = {k: Tensor(v, name=k) for k, v in tensors.items()}
        r = rng.normal(size=out_shape)
        cases.append((name, lambda: _weighted(fn(**ts), r), ts))

    n = rng.normal
    # extents are drawn per call so repeated seeds cover different shapes
    a, b, c = (int(v) for v in rng.integers(2, 5, size=3))
    S = int(rng.integers(7, 12))
    add_case("add", lambda x, y: ops.add(x, y), (a, b), x=n(size=(a, b)), y=n(size=(1, b)))
    add_case("sub", lambda x, y: ops.sub(x, y), (a, b), x=n(size=(a, b)), y=n(size=(a, 1)))
    add_case("mul", lambda x, y: ops.mul(x, y), (a, b, c), x=n(size=(a, b, c)), y=n(size=(c,)))
    add_case("leaky_relu", lambda x: ops.leaky_relu(x, 0.2), (a, b),
             x=_away_from_zero(rng, (a, b)))
    add_case("relu", lambda x: ops.relu(x), (a, b), x=_away_from_zero(rng, (a, b)))
    add_case("sigmoid", lambda x: ops.sigmoid(x), (a, b), x=3 * n(size=(a, b)))
    add_case("abs", lambda x: ops.absolute(x), (a, b), x=_away_from_zero(rng, (a, b)))
    add_case("reshape", lambda x: ops.reshape(x, (a * b, c)), (a * b, c), x=n(size=(a, b, c)))
    add_case("transpose", lambda x: ops.transpose(x, (2, 0, 1)), (c, a, b), x=n(size=(a, b, c)))
    add_case("take", lambda x: ops.take(x, 1, axis=1), (a, c), x=n(size=(a, b, c)))
    add_case("concat", lambda x, y: ops.concat([x, y], axis=1), (a, b + c),
             x=n(size=(a, b)), y=n(size=(a, c)))
    add_case("sum", lambda x: ops.sum(x, axis=1), (a, c), x=n(size=(a, b, c)))
    add_case("mean", lambda x: ops.mean(x, axis=(0, 2), keepdims=True), (1, b, 1),
             x=n(size=(a, b, c)))
    add_case("matmul", lambda x, y: ops.matmul(x, y), (a, b, 5),
             x=n(size=(a, b, c)), y=n(size=(a, c, 5)))
    add_case("linear", lambda x, w, bias: ops.linear(x, w, bias), (a, b, 5),
             x=n(size=(a, b, c)), w=n(size=(5, c)), bias=n(size=(5,)))
    add_case("conv_pointwise", lambda x, w, bias: ops.conv_pointwise(x, w, bias),
             (a, 4, S, 2, b), x=n(size=(a, c, S, 2, b)), w=n(size=(4, c)), bias=n(size=(4,)))
    for rate in (1, 2, 3):
        for padding in ("zeros", "circular"):
            add_case(f"atrous_conv_spectral[rate={rate},{padding}]",
                     lambda x, w, bias, rate=rate, padding=padding:
                         ops.atrous_conv_spectral(x, w, bias, rate, padding),
                     (a, 3, S, 2, 2),
                     x=n(size=(a, 2, S, 2, 2)), w=n(size=(3, 2, 3)), bias=n(size=(3,)))
    for training in (True, False):
        state = ops.BatchNormState(n(size=b), rng.uniform(0.5, 2.0, size=b))
        add_case(f"batch_norm[{'train' if training else 'eval'}]",
                 lambda x, g, beta, training=training, state=state:
                     ops.batch_norm(x, g, beta, state.copy(), training),
                 (a, b, 4, 2, 2),
                 x=n(size=(a, b, 4, 2, 2)), g=rng.uniform(0.5, 1.5, size=b), beta=n(size=b))
    add_case("adaptive_avg_pool_spectral", lambda x: ops.adaptive_avg_pool_spectral(x),
             (a, b, 1, 2, 2), x=n(size=(a, b, S, 2, 2)))
    add_case("repeat_spectral", lambda x: ops.repeat_spectral(x, S), (a, b, S, 2, 2),
             x=n(size=(a, b, 1, 2, 2)))
    add_case("softmax", lambda x: ops.softmax(x), (a, 6), x=2 * n(size=(a, 6)))

    labels = np.array([0, 2, 1, 2])
    ce_logits = {"logits": Tensor(n(size=(4, 3)), name="logits")}
    cases.append(("cross_entropy",
                  lambda: ops.cross_entropy(ce_logits["logits"], labels), ce_logits))
    return cases


def model_case(seed: int = 0):
    """Full SPGAT (toy widths, C=3) on a single [1,1,16,3,3] patch in train mode."""
    rng = np.random.default_rng(seed)
    cfg = ModelConfig(classes=3, patch=3, pyramid=PyramidConfig(dilation_rates=(1, 2, 4, 6)))
    model = init_model(cfg, seed)
    x = Tensor(rng.normal(size=(1, 1, 16, 3, 3)), name="input")
    label = np.array([1])
    tensors = {"input": x, **model.params}

    def loss_fn():
        return ops.cross_entropy(forward(model, x, training=True), label)

    return "spgat_end_to_end", loss_fn, tensors


def gradient_suite(seed: int = 0, max_entries: int = 6) -> list[CaseResult]:
    """Run every primitive case, then the end-to-end model case."""
    rng = np.random.default_rng(seed)
    results = []
    for name, fn, tensors in primitive_cases(rng):
        results.append(CaseResult(name, check_gradients(fn, tensors)))
    name, fn, tensors = model_case(seed)
    results.append(CaseResult(name, check_gradients(fn, tensors, max_entries=max_entries,
                                                    rng=rng)))
    return results
