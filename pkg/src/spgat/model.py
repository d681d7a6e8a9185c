"""The full network: pyramid -> per-stream graph reasoning -> merge -> classifier."""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field

import numpy as np

from . import graph, head
from .data import HsiCube, mirror_index
from .errors import ConfigError
from .pyramid import PyramidConfig, init_pyramid, pyramid_forward
from .tensor import Tensor

VARIANTS = ("spgat", "spgat-1", "spgcn", "spgat-avg")


@dataclass(frozen=True)
class ModelConfig:
    classes: int
    patch: int = 7
    pyramid: PyramidConfig = field(default_factory=PyramidConfig)
    graph: str = "gat"  # or "gcn"
    score: str = "dot"
    merge: str = "attention"
    embed_width: int | None = None  # defaults to the stream width

    def __post_init__(self):
        if self.classes < 2:
            raise ConfigError(f"classes must be at least 2, got {self.classes}")
        if self.patch < 1 or self.patch % 2 == 0:
            raise ConfigError(f"patch must be a positive odd integer, got {self.patch}")
        if self.graph not in ("gat", "gcn"):
            raise ConfigError(f"graph must be 'gat' or 'gcn', got {self.graph!r}")
        if self.score not in graph.SCORE_FUNCTIONS:
            raise ConfigError(f"score must be one of {graph.SCORE_FUNCTIONS}, got {self.score!r}")
        if self.merge not in head.MERGES:
            raise ConfigError(f"merge must be one of {head.MERGES}, got {self.merge!r}")

    @property
    def width(self) -> int:
        return self.pyramid.out_channels

    @property
    def slope(self) -> float:
        return self.pyramid.leaky_slope


def variant_config(base: ModelConfig, variant: str) -> ModelConfig:
    """Apply an ablation switch on top of ``base``."""
    if variant == "spgat":
        return base
    if variant == "spgat-1":
        pyr = dataclasses.replace(base.pyramid, dilation_rates=(1,), pooling=False)
        return dataclasses.replace(base, pyramid=pyr)
    if variant == "spgcn":
        return dataclasses.replace(base, graph="gcn")
    if variant == "spgat-avg":
        return dataclasses.replace(base, merge="average")
    raise ConfigError(f"variant must be one of {VARIANTS}, got {variant!r}")


@dataclass
class Model:
    config: ModelConfig
    params: dict[str, Tensor]
    state: dict

    def copy(self) -> "Model":
        params = {k: Tensor(v.data.copy(), requires_grad=v.requires_grad, _checked=True)
                  for k, v in self.params.items()}
        return Model(self.config, params, {k: s.copy() for k, s in self.state.items()})


def init_model(config: ModelConfig, seed: int) -> Model:
    rng = np.random.default_rng(seed)
    params, state = init_pyramid(config.pyramid, rng)
    d = config.width
    de = config.embed_width or d
    for name in config.pyramid.stream_names():
        for layer in ("l1", "l2"):
            prefix = f"graph.{name}.{layer}"
            if config.graph == "gat":
                graph.init_gat_layer(rng, prefix, d, de, d, params)
            else:
                graph.init_gcn_layer(rng, prefix, d, d, params)
    head.init_head(rng, config.pyramid.num_streams, d, config.classes, params)
    return Model(config, params, state)


def reason_and_classify(model: Model, nodes: list[Tensor]) -> Tensor:
    """Graph block per stream, merge, centre-pixel logits."""
    cfg = model.config
    reasoned = []
    for name, h in zip(cfg.pyramid.stream_names(), nodes):
        if cfg.graph == "gat":
            reasoned.append(graph.gat_block(h, model.params, f"graph.{name}", cfg.slope, cfg.score))
        else:
            reasoned.append(graph.gcn_block(h, model.params, f"graph.{name}", cfg.patch, cfg.slope))
    merged = head.merge(reasoned, model.params, cfg.merge)
    return head.classify_center(merged, model.params)


def forward(model: Model, x: Tensor, training: bool) -> Tensor:
    """Logits for a patch batch ``x`` of shape [B, 1, S, P, P]."""
    out = pyramid_forward(x, model.config.pyramid, model.params, model.state, training)
    nodes = [graph.collapse_spectrum(s) for s in out.streams]
    return reason_and_classify(model, nodes)


def _pixel_features(model: Model, spectra: np.ndarray) -> list[np.ndarray]:
    """Eval-mode, spectrum-averaged pyramid features of independent pixels.

    Every pyramid operation acts on one pixel's spectrum at a time (kernels are
    K x 1 x 1 and batch norm is a fixed affine map in eval mode), so pixels can
    be laid side by side along the width axis of a single volume.
    """
    S, n = spectra.shape
    x = Tensor(spectra.reshape(1, 1, S, 1, n), _checked=True)
    out = pyramid_forward(x, model.config.pyramid, model.params, model.state, training=False)
    return [s.data.mean(axis=2)[0, :, 0, :].T for s in out.streams]


def predict_logits(model: Model, cube: HsiCube, coords, batch: int = 256,
                   chunk: int = 1024) -> np.ndarray:
    """Eval-mode logits for the pixels at ``coords`` ([n, 2] row/col pairs).

    Equivalent to running :func:`forward` on mirror-padded patches, but the
    pyramid runs once per distinct pixel instead of once per patch position.
    """
    cfg = model.config
    coords = np.asarray(coords, dtype=np.int64).reshape(-1, 2)
    half = cfg.patch // 2
    H, W = cube.height, cube.width
    Hp, Wp = H + 2 * half, W + 2 * half
    off = np.arange(cfg.patch)
    # padded-grid node indices of every window, row-major within the patch
    win = ((coords[:, 0:1] + off)[:, :, None] * Wp + (coords[:, 1:2] + off)[:, None, :])
    win = win.reshape(len(coords), -1)
    needed = np.unique(win)
    lookup = np.full(Hp * Wp, -1, dtype=np.int64)
    lookup[needed] = np.arange(len(needed))
    src_r = mirror_index(needed // Wp - half, H)
    src_c = mirror_index(needed % Wp - half, W)
    spectra = cube.values[:, src_r, src_c]  # [S, n_needed]

    streams = None
    for start in range(0, len(needed), chunk):
        part = _pixel_features(model, np.ascontiguousarray(spectra[:, start:start + chunk]))
        if streams is None:
            streams = [np.empty((len(needed), f.shape[1])) for f in part]
        for dst, f in zip(streams, part):
            dst[start:start + chunk] = f

    out = np.empty((len(coords), cfg.classes))
    rows = lookup[win]
    for start in range(0, len(coords), batch):
        idx = rows[start:start + batch]
        nodes = [Tensor(f[idx], _checked=True) for f in streams]
        out[start:start + batch] = reason_and_classify(model, nodes).data
    return out


def predict(model: Model, cube: HsiCube, coords, batch: int = 256) -> np.ndarray:
    """Zero-based class predictions; ties go to the lowest class index."""
    return np.argmax(predict_logits(model, cube, coords, batch), axis=1)
