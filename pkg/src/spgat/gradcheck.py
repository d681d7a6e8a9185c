"""Central finite-difference checks of tape gradients."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .tensor import Tape, Tensor, backward


@dataclass
class GradReport:
    name: str
    rel_error: float
    checked: int

    def passed(self, tol: float) -> bool:
        return self.rel_error < tol


def relative_error(analytic: np.ndarray, numeric: np.ndarray, floor: float = 1e-5) -> float:
    """``||a - n|| / max(||a||, ||n||, floor)`` over the checked entries.

    The floor keeps gradients that are exactly zero from being judged on
    rounding noise alone: at ``h = 1e-5`` a loss of order one resolves
    derivatives only to about ``1e-10``. :func:`check_gradients` scales it
    by the loss magnitude, since the rounding noise scales the same way.
    """
    diff = np.linalg.norm(analytic - numeric)
    scale = max(np.linalg.norm(analytic), np.linalg.norm(numeric), floor)
    return float(diff / scale)


def check_gradients(loss_fn: Callable[[], Tensor], tensors: dict[str, Tensor],
                    h: float = 1e-5, max_entries: int | None = None,
                    rng: np.random.Generator | None = None,
                    kink_tol: float = 1e-6, refinements: int = 2) -> list[GradReport]:
    """Compare tape gradients of ``loss_fn()`` against central differences.

    ``loss_fn`` must rebuild the scalar loss from the current ``.data`` of the
    given tensors. With ``max_entries`` set, each tensor is probed at that many
    randomly chosen positions instead of all of them.

    A piecewise-linear activation whose input lies within ``h`` of its kink
    biases the central difference by about ``|f(x+h) - 2 f(x) + f(x-h)| / 2h``.
    Where that exceeds ``kink_tol`` the entry switches to a second-order
    one-sided difference on whichever side is smooth. If neither side is,
    the step shrinks tenfold, at most ``refinements`` times.
    """
    for t in tensors.values():
        t.data = np.ascontiguousarray(t.data)
        t.requires_grad = True
        t.zero_grad()
    with Tape() as tape:
        loss = loss_fn()
    backward(tape, loss)
    analytic = {k: t.grad.copy() for k, t in tensors.items()}
    f0 = loss.item()
    del tape, loss

    rng = rng if rng is not None else np.random.default_rng(0)
    reports = []
    for name, t in tensors.items():
        flat = t.data.reshape(-1)
        n = flat.size
        if max_entries is not None and n > max_entries:
            idx = np.sort(rng.choice(n, size=max_entries, replace=False))
        else:
            idx = np.arange(n)
        numeric = np.array([_derivative(loss_fn, t, i, f0, h, kink_tol, refinements)
                            for i in idx])
        a = analytic[name].reshape(-1)[idx]
        floor = 1e-5 * max(1.0, abs(f0))
        reports.append(GradReport(name, relative_error(a, numeric, floor), len(idx)))
    return reports


def _derivative(loss_fn, t: Tensor, i: int, f0: float, h: float, kink_tol: float,
                refinements: int) -> float:
    for _ in range(refinements + 1):
        fp = _probe(loss_fn, t, i, h)
        fm = _probe(loss_fn, t, i, -h)
        central = (fp - fm) / (2.0 * h)
        if abs(fp - 2.0 * f0 + fm) / (2.0 * h) <= kink_tol:
            return central
        fpp = _probe(loss_fn, t, i, 2.0 * h)
        fmm = _probe(loss_fn, t, i, -2.0 * h)
        bend_p = abs(fpp - 2.0 * fp + f0) / (2.0 * h)
        bend_m = abs(f0 - 2.0 * fm + fmm) / (2.0 * h)
        if bend_p <= bend_m:
            one_sided = (-3.0 * f0 + 4.0 * fp - fpp) / (2.0 * h)
        else:
            one_sided = (3.0 * f0 - 4.0 * fm + fmm) / (2.0 * h)
        if min(bend_p, bend_m) <= kink_tol:
            return one_sided
        h /= 10.0
    return one_sided


def _probe(loss_fn, t: Tensor, i: int, step: float) -> float:
    # loss_fn may rebind t.data, so write through a fresh view each time
    orig = t.data.reshape(-1)[i]
    t.data.reshape(-1)[i] = orig + step
    value = loss_fn().item()
    t.data.reshape(-1)[i] = orig
    return value
