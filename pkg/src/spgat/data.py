"""Hyperspectral cubes, label maps, splits, patches and a synthetic scene generator.

On-disk formats
---------------
Cube header: ``key = value`` lines with ``bands``, ``height``, ``width``,
``dtype`` (only ``f32le``) and ``interleave`` (``bsq`` or ``bip``).
Cube data: raw little-endian float32, row-major within the interleave.
Labels: raw little-endian uint16, row-major ``height x width``, 0 = unlabeled.
Splits: text lines ``class,row,col,role`` with role ``train`` or ``test``.
"""

from __future__ import annotations

import os
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ConfigError, FormatError, LabelError, NumericError, SplitError
from .tensor import Tensor

VARIANCE_FLOOR = 1e-8

CONTEXT_SCALES = {"small": 0.04, "medium": 0.12, "large": 0.3}


@dataclass
class HsiCube:
    values: np.ndarray  # [S, H, W]

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.ndim != 3 or min(self.values.shape) < 1:
            raise FormatError(f"cube must be bands x height x width, got {self.values.shape}")
        if not np.isfinite(self.values).all():
            raise NumericError("cube contains non-finite values")

    @property
    def bands(self) -> int:
        return self.values.shape[0]

    @property
    def height(self) -> int:
        return self.values.shape[1]

    @property
    def width(self) -> int:
        return self.values.shape[2]


@dataclass
class LabelMap:
    classes: np.ndarray  # [H, W] ints, 0 = unlabeled

    def __post_init__(self):
        self.classes = np.asarray(self.classes, dtype=np.int64)
        if self.classes.ndim != 2:
            raise FormatError(f"label map must be 2-D, got shape {self.classes.shape}")
        if self.classes.min() < 0:
            raise LabelError("label map contains negative classes")
        present = set(np.unique(self.classes).tolist()) - {0}
        if not present:
            raise LabelError("label map has no labeled pixels")
        missing = sorted(set(range(1, self.num_classes + 1)) - present)
        if missing:
            raise LabelError(f"classes {missing} have no pixels")

    @property
    def num_classes(self) -> int:
        return int(self.classes.max())

    @property
    def shape(self) -> tuple[int, int]:
        return self.classes.shape

    def labeled_coords(self) -> np.ndarray:
        """Row-major (row, col) pairs of every labeled pixel."""
        return np.argwhere(self.classes > 0)


@dataclass
class SplitSpec:
    train: np.ndarray  # [n, 3] rows of (class, row, col)
    test: np.ndarray
    seed: int | None = None
    request: object = None

    @property
    def train_coords(self) -> np.ndarray:
        return self.train[:, 1:]

    @property
    def test_coords(self) -> np.ndarray:
        return self.test[:, 1:]


@dataclass
class PatchBatch:
    inputs: Tensor  # [B, 1, S, P, P]
    labels: np.ndarray  # [B] zero-based class indices
    coords: np.ndarray  # [B, 2]

    def __len__(self) -> int:
        return len(self.labels)

    def __getitem__(self, idx) -> "PatchBatch":
        return PatchBatch(Tensor(self.inputs.data[idx], _checked=True), self.labels[idx],
                          self.coords[idx])


# ----------------------------------------------------------------------- I/O

def _read_keyvalue(path) -> dict[str, str]:
    out = {}
    for n, raw in enumerate(Path(path).read_text().splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise FormatError(f"{path}:{n}: expected 'key = value', got {raw!r}")
        key, value = line.split("=", 1)
        out[key.strip().lower()] = value.strip()
    return out


def load_cube(header_path, data_path) -> HsiCube:
    hdr = _read_keyvalue(header_path)
    try:
        S, H, W = (int(hdr[k]) for k in ("bands", "height", "width"))
    except KeyError as e:
        raise FormatError(f"{header_path}: missing header key {e.args[0]!r}") from None
    except ValueError:
        raise FormatError(f"{header_path}: dimensions must be integers") from None
    dtype = hdr.get("dtype", "f32le").lower()
    if dtype != "f32le":
        raise FormatError(f"{header_path}: unsupported dtype {dtype!r} (only f32le)")
    interleave = hdr.get("interleave", "").lower()
    if interleave not in ("bsq", "bip"):
        raise FormatError(f"{header_path}: unknown interleave {interleave!r}")
    expected = S * H * W * 4
    actual = os.path.getsize(data_path)
    if actual != expected:
        raise FormatError(f"{data_path}: expected {expected} bytes for {S}x{H}x{W} f32le, "
                          f"found {actual}")
    raw = np.fromfile(data_path, dtype="<f4")
    if interleave == "bsq":
        values = raw.reshape(S, H, W)
    else:
        values = raw.reshape(H, W, S).transpose(2, 0, 1)
    if not np.isfinite(values).all():
        raise NumericError(f"{data_path}: cube contains non-finite values")
    return HsiCube(values.astype(np.float64))


def save_cube(cube: HsiCube, header_path, data_path, interleave: str = "bsq") -> None:
    interleave = interleave.lower()
    if interleave not in ("bsq", "bip"):
        raise FormatError(f"unknown interleave {interleave!r}")
    v = cube.values.astype("<f4")
    if interleave == "bip":
        v = v.transpose(1, 2, 0)
    Path(header_path).write_text(
        f"bands = {cube.bands}\nheight = {cube.height}\nwidth = {cube.width}\n"
        f"dtype = f32le\ninterleave = {interleave}\n")
    np.ascontiguousarray(v).tofile(data_path)


def load_labels(path, height: int, width: int) -> LabelMap:
    expected = height * width * 2
    actual = os.path.getsize(path)
    if actual != expected:
        raise FormatError(f"{path}: expected {expected} bytes for {height}x{width} u16, "
                          f"found {actual}")
    return LabelMap(np.fromfile(path, dtype="<u2").reshape(height, width))


def save_labels(labels: LabelMap, path) -> None:
    if labels.classes.max() > 0xFFFF:
        raise FormatError("class indices do not fit in 16 bits")
    labels.classes.astype("<u2").tofile(path)


def save_split(split: SplitSpec, path) -> None:
    lines = ["class,row,col,role"]
    for role, rows in (("train", split.train), ("test", split.test)):
        lines.extend(f"{c},{r},{q},{role}" for c, r, q in rows.tolist())
    Path(path).write_text("\n".join(lines) + "\n")


def load_split(path) -> SplitSpec:
    parts = {"train": [], "test": []}
    for n, raw in enumerate(Path(path).read_text().splitlines(), 1):
        line = raw.strip()
        if not line or line.startswith("#") or line == "class,row,col,role":
            continue
        fields = line.split(",")
        if len(fields) != 4 or fields[3] not in parts:
            raise FormatError(f"{path}:{n}: bad split record {raw!r}")
        try:
            parts[fields[3]].append([int(f) for f in fields[:3]])
        except ValueError:
            raise FormatError(f"{path}:{n}: bad split record {raw!r}") from None
    as_arr = {k: np.array(v, dtype=np.int64).reshape(-1, 3) for k, v in parts.items()}
    return SplitSpec(as_arr["train"], as_arr["test"])


# -------------------------------------------------------------- preprocessing

def normalize_bands(cube: HsiCube, labels: LabelMap) -> HsiCube:
    """Standardise each band with mean/std taken over labeled pixels only."""
    if labels.shape != (cube.height, cube.width):
        raise FormatError(f"label map {labels.shape} does not match cube "
                          f"{(cube.height, cube.width)}")
    mask = labels.classes > 0
    pix = cube.values[:, mask]  # [S, n_labeled]
    mu = pix.mean(axis=1)
    var = ((pix - mu[:, None]) ** 2).mean(axis=1)
    std = np.sqrt(np.maximum(var, VARIANCE_FLOOR))
    return HsiCube((cube.values - mu[:, None, None]) / std[:, None, None])


def _train_count(n: int, request) -> int:
    if isinstance(request, str):
        if request != "all-but-one":
            raise SplitError(f"unknown per-class request {request!r}")
        return n - 1
    if isinstance(request, (float, np.floating)):
        if not 0.0 < request < 1.0:
            raise SplitError(f"fraction must lie in (0, 1), got {request}")
        # round half up
        return int(np.floor(request * n + 0.5))
    return int(request)


def make_split(labels: LabelMap, per_class, seed: int) -> SplitSpec:
    """Sample training pixels per class without replacement; the rest is test.

    ``per_class`` is a count, a fraction in (0, 1) rounded half up, the string
    ``"all-but-one"``, or a mapping from class to any of those.
    """
    rng = np.random.default_rng(seed)
    train, test, bad = [], [], []
    for c in range(1, labels.num_classes + 1):
        coords = np.argwhere(labels.classes == c)
        n = len(coords)
        request = per_class.get(c) if isinstance(per_class, dict) else per_class
        if request is None:
            raise SplitError(f"no training request for class {c}")
        k = _train_count(n, request)
        if k < 1 or k > n:
            bad.append(f"class {c} (requested {k}, available {n})")
            continue
        chosen = np.zeros(n, dtype=bool)
        chosen[rng.permutation(n)[:k]] = True
        cls = np.full((n, 1), c, dtype=np.int64)
        rows = np.hstack([cls, coords])
        train.append(rows[chosen])
        test.append(rows[~chosen])
    if bad:
        raise SplitError("unsatisfiable split request for " + ", ".join(bad))
    return SplitSpec(np.vstack(train), np.vstack(test), seed=seed, request=per_class)


def mirror_index(i, n: int):
    """Reflect index ``i`` into ``[0, n)`` without repeating the edge (…2 1 | 0 1 2…)."""
    i = np.asarray(i)
    if n == 1:
        return np.zeros_like(i)
    period = 2 * (n - 1)
    j = np.mod(i, period)
    return np.where(j < n, j, period - j)


def extract_patches(cube: HsiCube, labels: LabelMap, coords, patch: int) -> PatchBatch:
    """Cut ``patch x patch`` windows centred on ``coords`` with mirror padding."""
    if patch < 1 or patch % 2 == 0:
        raise ConfigError(f"patch side must be a positive odd integer, got {patch}")
    coords = np.asarray(coords, dtype=np.int64).reshape(-1, 2)
    cls = labels.classes[coords[:, 0], coords[:, 1]]
    if (cls == 0).any():
        first = coords[np.argmax(cls == 0)]
        raise LabelError(f"pixel {tuple(first.tolist())} is unlabeled")
    half = patch // 2
    off = np.arange(-half, half + 1)
    rows = mirror_index(coords[:, 0:1] + off[None, :], cube.height)  # [B, P]
    cols = mirror_index(coords[:, 1:2] + off[None, :], cube.width)
    win = cube.values[:, rows[:, :, None], cols[:, None, :]]  # [S, B, P, P]
    inputs = np.ascontiguousarray(win.transpose(1, 0, 2, 3))[:, None]
    return PatchBatch(Tensor(inputs), (cls - 1).astype(np.int64), coords)


# ------------------------------------------------------------------ synthetic

def _context_width(context_scale) -> float:
    if isinstance(context_scale, str):
        try:
            return CONTEXT_SCALES[context_scale]
        except KeyError:
            raise ConfigError(f"context_scale must be one of {sorted(CONTEXT_SCALES)} "
                              f"or a positive number, got {context_scale!r}") from None
    if context_scale <= 0:
        raise ConfigError(f"context_scale must be positive, got {context_scale}")
    return float(context_scale)


def class_signatures(classes: int, bands: int, context_scale, rng) -> np.ndarray:
    """Each class spectrum is a sum of two Gaussian bumps; widths follow ``context_scale``."""
    width = _context_width(context_scale) * bands
    s = np.arange(bands, dtype=np.float64)
    sig = np.zeros((classes, bands))
    for c in range(classes):
        centers = rng.uniform(0.0, bands, size=2)
        widths = width * rng.uniform(0.7, 1.3, size=2)
        amps = rng.uniform(0.5, 1.5, size=2)
        for mu, w, a in zip(centers, widths, amps):
            sig[c] += a * np.exp(-0.5 * ((s - mu) / w) ** 2)
    return sig


def voronoi_layout(classes: int, height: int, width: int, rng, sites_per_class: int = 2):
    """Seeded Voronoi partition; every class owns at least one cell."""
    n_sites = min(classes * sites_per_class, height * width)
    if n_sites < classes:
        raise ConfigError(f"a {height}x{width} grid cannot hold {classes} classes")
    flat = rng.choice(height * width, size=n_sites, replace=False)
    sites = np.stack([flat // width, flat % width], axis=1).astype(np.float64)
    owner = np.concatenate([rng.permutation(classes),
                            rng.integers(0, classes, size=n_sites - classes)])
    rr, cc = np.mgrid[0:height, 0:width]
    d2 = (rr[..., None] - sites[:, 0]) ** 2 + (cc[..., None] - sites[:, 1]) ** 2
    return owner[np.argmin(d2, axis=-1)] + 1


def synth_scene(classes: int, bands: int, height: int, width: int, noise_sigma: float,
                context_scale, seed: int) -> tuple[HsiCube, LabelMap]:
    if classes < 2:
        raise ConfigError(f"synthetic scene needs at least 2 classes, got {classes}")
    if bands < 8:
        raise ConfigError(f"synthetic scene needs at least 8 bands, got {bands}")
    if noise_sigma < 0:
        raise ConfigError(f"noise_sigma must be non-negative, got {noise_sigma}")
    rng = np.random.default_rng(seed)
    sig = class_signatures(classes, bands, context_scale, rng)
    lab = voronoi_layout(classes, height, width, rng)
    values = sig[lab - 1].transpose(2, 0, 1)  # [S, H, W]
    if noise_sigma > 0:
        values = values + rng.normal(0.0, noise_sigma, size=values.shape)
    return HsiCube(values), LabelMap(lab)
