"""Reference kernels in plain numpy.

Every kernel here has a twin in ``_numba`` with the same signature. Inputs are
C-contiguous float64 arrays; outputs are freshly allocated.
"""

import numpy as np


def leaky_relu_fwd(x, slope):
    if slope == 0.0:
        return np.maximum(x, 0.0)
    return np.maximum(x, slope * x)


def leaky_relu_bwd(x, g, slope):
    return g * np.where(x >= 0.0, 1.0, slope)


def _valid_range(offset, S):
    """Output spectral rows ``[lo, hi)`` whose tap ``s + offset`` lands inside ``[0, S)``."""
    lo = max(0, -offset)
    hi = min(S, S - offset)
    return lo, hi


def shift_sum(z, bias, offsets, S, HW, circular):
    """y[b,c,s] = bias[c] + sum_k z[b,k,c,s+offsets[k]] with zero (or wrapped) padding.

    ``z`` has shape (B, K, C, S*HW); spectral rows are blocks of ``HW`` pixels.
    """
    B, K, C, L = z.shape
    y = np.empty((B, C, L))
    y[...] = bias[None, :, None]
    for k in range(K):
        o = int(offsets[k])
        if circular:
            y += np.roll(z[:, k], -o * HW, axis=-1)
            continue
        lo, hi = _valid_range(o, S)
        if lo >= hi:
            continue
        y[:, :, lo * HW:hi * HW] += z[:, k, :, (lo + o) * HW:(hi + o) * HW]
    return y


def shift_stack(g, offsets, S, HW, circular):
    """Adjoint of :func:`shift_sum` with respect to ``z``."""
    B, C, L = g.shape
    K = len(offsets)
    dz = np.zeros((B, K, C, L))
    for k in range(K):
        o = int(offsets[k])
        if circular:
            dz[:, k] = np.roll(g, o * HW, axis=-1)
            continue
        lo, hi = _valid_range(o, S)
        if lo >= hi:
            continue
        dz[:, k, :, (lo + o) * HW:(hi + o) * HW] = g[:, :, lo * HW:hi * HW]
    return dz


def add_bias_(y, bias):
    """Add a per-channel bias to a (B, C, L) array in place; report finiteness."""
    y += bias[None, :, None]
    return bool(np.isfinite(y.sum()))


def channel_sum(g):
    """Sum of a (B, C, L) array over every axis but the channel axis."""
    return g.sum(axis=2).sum(axis=0)


def bn_stats(x):
    """Per-channel mean and biased variance of a (B, C, L) array."""
    mean = x.mean(axis=(0, 2))
    var = ((x - mean[None, :, None]) ** 2).mean(axis=(0, 2))
    return mean, var


def bn_forward(x, mean, invstd, gamma, beta):
    scale = (gamma * invstd)[None, :, None]
    shift = (beta - gamma * invstd * mean)[None, :, None]
    return x * scale + shift


def bn_backward(x, g, mean, invstd, gamma):
    B, C, L = x.shape
    n = B * L
    xhat = (x - mean[None, :, None]) * invstd[None, :, None]
    dbeta = g.sum(axis=(0, 2))
    dgamma = (g * xhat).sum(axis=(0, 2))
    coef = (gamma * invstd / n)[None, :, None]
    dx = coef * (n * g - dbeta[None, :, None] - xhat * dgamma[None, :, None])
    return dx, dgamma, dbeta
