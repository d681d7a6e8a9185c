"""Graph reasoning over the pixels of a patch.

Every pixel of a P x P patch is a node. The attention layer builds a dense,
data-dependent graph; the GCN layer uses the fixed 8-neighbour lattice and
serves as the ablation baseline.
"""

from __future__ import annotations

from functools import lru_cache

import numpy as np

from . import ops
from .errors import ConfigError, ShapeError
from .pyramid import uniform_init
from .tensor import Tensor

SCORE_FUNCTIONS = ("dot", "feature-difference")


def init_gat_layer(rng, prefix: str, d: int, de: int, d_out: int, params: dict) -> None:
    params[f"{prefix}.theta.w"] = uniform_init(rng, (de, d), d)
    params[f"{prefix}.theta.b"] = Tensor(np.zeros(de), requires_grad=True)
    params[f"{prefix}.phi.w"] = uniform_init(rng, (de, d), d)
    params[f"{prefix}.phi.b"] = Tensor(np.zeros(de), requires_grad=True)
    params[f"{prefix}.psi.w"] = uniform_init(rng, (de,), de)
    params[f"{prefix}.xi.w"] = uniform_init(rng, (d_out, d), d)
    params[f"{prefix}.xi.b"] = Tensor(np.zeros(d_out), requires_grad=True)


def init_gcn_layer(rng, prefix: str, d: int, d_out: int, params: dict) -> None:
    params[f"{prefix}.w"] = uniform_init(rng, (d, d_out), d)


def _check_nodes(h: Tensor):
    if h.ndim != 3:
        raise ShapeError(f"node features must be [B,N,d], got {h.shape}")


def gat_scores(h: Tensor, params: dict, prefix: str, slope: float = 0.2,
               score: str = "dot") -> Tensor:
    """Row-stochastic attention ``alpha[b,i,j]`` of node j for node i.

    ``dot``: ``e_ij = LeakyReLU(sum_k psi_k * theta(h_i)_k * phi(h_j)_k)``.
    ``feature-difference``: ``e_ij = sum_k psi_k * |theta(h_i)_k - phi(h_j)_k|``.
    """
    _check_nodes(h)
    th = ops.linear(h, params[f"{prefix}.theta.w"], params[f"{prefix}.theta.b"])
    ph = ops.linear(h, params[f"{prefix}.phi.w"], params[f"{prefix}.phi.b"])
    psi = params[f"{prefix}.psi.w"]
    if score == "dot":
        e = ops.matmul(ops.mul(th, psi), ops.transpose(ph, (0, 2, 1)))
        e = ops.leaky_relu(e, slope)
    elif score == "feature-difference":
        B, N, de = th.shape
        diff = ops.sub(ops.reshape(th, (B, N, 1, de)), ops.reshape(ph, (B, 1, N, de)))
        e = ops.linear(ops.absolute(diff), ops.reshape(psi, (1, de)))
        e = ops.reshape(e, (B, N, N))
    else:
        raise ConfigError(f"score function must be one of {SCORE_FUNCTIONS}, got {score!r}")
    return ops.softmax(e)


def gat_aggregate(h: Tensor, alpha: Tensor, params: dict, prefix: str,
                  slope: float = 0.2) -> Tensor:
    """``h'_i = LeakyReLU(sum_j alpha_ij * xi(h_j))``."""
    _check_nodes(h)
    msg = ops.linear(h, params[f"{prefix}.xi.w"], params[f"{prefix}.xi.b"])
    return ops.leaky_relu(ops.matmul(alpha, msg), slope)


def gat_layer(h, params, prefix, slope=0.2, score="dot"):
    return gat_aggregate(h, gat_scores(h, params, prefix, slope, score), params, prefix, slope)


def gat_block(h: Tensor, params: dict, prefix: str, slope: float = 0.2,
              score: str = "dot") -> Tensor:
    """Two attention layers with independent parameters (``{prefix}.l1``, ``{prefix}.l2``)."""
    h = gat_layer(h, params, f"{prefix}.l1", slope, score)
    return gat_layer(h, params, f"{prefix}.l2", slope, score)


@lru_cache(maxsize=None)
def lattice_adjacency(patch: int) -> np.ndarray:
    """8-neighbour adjacency of a ``patch x patch`` grid, nodes numbered row-major."""
    n = patch * patch
    a = np.zeros((n, n))
    for r in range(patch):
        for c in range(patch):
            for dr in (-1, 0, 1):
                for dc in (-1, 0, 1):
                    rr, cc = r + dr, c + dc
                    if (dr or dc) and 0 <= rr < patch and 0 <= cc < patch:
                        a[r * patch + c, rr * patch + cc] = 1.0
    a.setflags(write=False)
    return a


@lru_cache(maxsize=None)
def gcn_operator(patch: int) -> np.ndarray:
    """``D^-1/2 (A + I) D^-1/2`` for the lattice graph."""
    a = lattice_adjacency(patch) + np.eye(patch * patch)
    dinv = 1.0 / np.sqrt(a.sum(axis=1))
    op = dinv[:, None] * a * dinv[None, :]
    op.setflags(write=False)
    return op


def gcn_layer(h: Tensor, patch: int, weight: Tensor, slope: float = 0.2) -> Tensor:
    _check_nodes(h)
    if h.shape[1] != patch * patch:
        raise ShapeError(f"gcn_layer: {h.shape[1]} nodes do not form a {patch}x{patch} patch")
    prop = ops.matmul(Tensor(gcn_operator(patch)), h)
    return ops.leaky_relu(ops.matmul(prop, weight), slope)


def gcn_block(h: Tensor, params: dict, prefix: str, patch: int, slope: float = 0.2) -> Tensor:
    h = gcn_layer(h, patch, params[f"{prefix}.l1.w"], slope)
    return gcn_layer(h, patch, params[f"{prefix}.l2.w"], slope)


def collapse_spectrum(stream: Tensor) -> Tensor:
    """[B,C,S,P,P] -> [B,P*P,C]: mean over the spectrum, node r*P+c for pixel (r,c)."""
    if stream.ndim != 5:
        raise ShapeError(f"collapse_spectrum expects [B,C,S,H,W], got {stream.shape}")
    B, C, S, H, W = stream.shape
    m = ops.mean(stream, axis=2)  # [B,C,H,W]
    return ops.transpose(ops.reshape(m, (B, C, H * W)), (0, 2, 1))
