"""Numba-compiled twins of the kernels in ``_numpy``.

Loops run in a fixed order so results are reproducible bit for bit; they may
differ from the numpy twins in the last few ulps because summation order differs.
"""

import numpy as np
from numba import njit


@njit(cache=True)
def leaky_relu_fwd(x, slope):
    out = np.empty_like(x)
    xf = x.ravel()
    of = out.ravel()
    for i in range(xf.size):
        v = xf[i]
        of[i] = v if v >= 0.0 else slope * v
    return out


@njit(cache=True)
def leaky_relu_bwd(x, g, slope):
    out = np.empty_like(g)
    xf = x.ravel()
    gf = g.ravel()
    of = out.ravel()
    for i in range(xf.size):
        of[i] = gf[i] if xf[i] >= 0.0 else slope * gf[i]
    return out


@njit(cache=True)
def shift_sum(z, bias, offsets, S, HW, circular):
    B, K, C, L = z.shape
    y = np.empty((B, C, L))
    for b in range(B):
        for c in range(C):
            row = y[b, c]
            bc = bias[c]
            for i in range(L):
                row[i] = bc
            for k in range(K):
                o = offsets[k]
                src = z[b, k, c]
                for s in range(S):
                    t = s + o
                    if circular:
                        t = t % S
                    elif t < 0 or t >= S:
                        continue
                    d0 = s * HW
                    s0 = t * HW
                    for p in range(HW):
                        row[d0 + p] += src[s0 + p]
    return y


@njit(cache=True)
def shift_stack(g, offsets, S, HW, circular):
    B, C, L = g.shape
    K = offsets.shape[0]
    dz = np.empty((B, K, C, L))
    for b in range(B):
        for k in range(K):
            o = offsets[k]
            for c in range(C):
                src = g[b, c]
                dst = dz[b, k, c]
                # dz[t] = g[t - o]; rows with no source are zero
                for t in range(S):
                    s = t - o
                    d0 = t * HW
                    if circular:
                        s = s % S
                    elif s < 0 or s >= S:
                        for p in range(HW):
                            dst[d0 + p] = 0.0
                        continue
                    s0 = s * HW
                    for p in range(HW):
                        dst[d0 + p] = src[s0 + p]
    return dz


@njit(cache=True)
def add_bias_(y, bias):
    # in place; returns False if any result is non-finite
    B, C, L = y.shape
    ok = True
    for b in range(B):
        for c in range(C):
            bc = bias[c]
            for i in range(L):
                v = y[b, c, i] + bc
                y[b, c, i] = v
                ok &= (v - v) == 0.0
    return ok


@njit(cache=True)
def channel_sum(g):
    B, C, L = g.shape
    out = np.zeros(C)
    for c in range(C):
        acc = 0.0
        for b in range(B):
            for i in range(L):
                acc += g[b, c, i]
        out[c] = acc
    return out


@njit(cache=True)
def bn_stats(x):
    B, C, L = x.shape
    n = B * L
    mean = np.zeros(C)
    var = np.zeros(C)
    for c in range(C):
        acc = 0.0
        for b in range(B):
            for i in range(L):
                acc += x[b, c, i]
        m = acc / n
        acc = 0.0
        for b in range(B):
            for i in range(L):
                d = x[b, c, i] - m
                acc += d * d
        mean[c] = m
        var[c] = acc / n
    return mean, var


@njit(cache=True)
def bn_forward(x, mean, invstd, gamma, beta):
    B, C, L = x.shape
    y = np.empty_like(x)
    for b in range(B):
        for c in range(C):
            sc = gamma[c] * invstd[c]
            sh = beta[c] - sc * mean[c]
            for i in range(L):
                y[b, c, i] = x[b, c, i] * sc + sh
    return y


@njit(cache=True)
def bn_backward(x, g, mean, invstd, gamma):
    B, C, L = x.shape
    n = B * L
    dx = np.empty_like(x)
    dgamma = np.zeros(C)
    dbeta = np.zeros(C)
    for c in range(C):
        sg = 0.0
        sgx = 0.0
        m = mean[c]
        istd = invstd[c]
        for b in range(B):
            for i in range(L):
                gv = g[b, c, i]
                sg += gv
                sgx += gv * (x[b, c, i] - m) * istd
        dbeta[c] = sg
        dgamma[c] = sgx
        coef = gamma[c] * istd / n
        for b in range(B):
            for i in range(L):
                xhat = (x[b, c, i] - m) * istd
                dx[b, c, i] = coef * (n * g[b, c, i] - sg - xhat * sgx)
    return dx, dgamma, dbeta
