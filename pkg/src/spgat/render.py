"""Classification maps as binary PPM images."""

from __future__ import annotations

from pathlib import Path

import numpy as np

from .errors import FormatError

# class c (1-based) is drawn with PALETTE[(c - 1) % 21]; unlabeled pixels are black
PALETTE = np.array([
    (230, 25, 75), (60, 180, 75), (255, 225, 25), (0, 130, 200), (245, 130, 48),
    (145, 30, 180), (70, 240, 240), (240, 50, 230), (210, 245, 60), (250, 190, 212),
    (0, 128, 128), (220, 190, 255), (170, 110, 40), (255, 250, 200), (128, 0, 0),
    (170, 255, 195), (128, 128, 0), (255, 215, 180), (0, 0, 128), (128, 128, 128),
    (255, 255, 255),
], dtype=np.uint8)


def colorize(classes: np.ndarray) -> np.ndarray:
    """[H, W] class map (0 = unlabeled) -> [H, W, 3] uint8 image."""
    classes = np.asarray(classes)
    if classes.ndim != 2:
        raise FormatError(f"class map must be 2-D, got shape {classes.shape}")
    if (classes < 0).any():
        raise FormatError("class map has negative entries")
    img = PALETTE[(classes - 1) % len(PALETTE)]
    img[classes == 0] = 0
    return img


def decolorize(img: np.ndarray) -> np.ndarray:
    """Inverse of :func:`colorize` for maps with at most 21 classes."""
    img = np.asarray(img, dtype=np.uint8)
    key = (img[..., 0].astype(np.int64) << 16) | (img[..., 1].astype(np.int64) << 8) | img[..., 2]
    pal_key = ((PALETTE[:, 0].astype(np.int64) << 16)
               | (PALETTE[:, 1].astype(np.int64) << 8) | PALETTE[:, 2])
    out = np.zeros(key.shape, dtype=np.int64)
    known = key == 0
    for c, k in enumerate(pal_key, start=1):
        hit = key == k
        out[hit] = c
        known |= hit
    if not known.all():
        r, c = np.argwhere(~known)[0]
        raise FormatError(f"pixel ({r}, {c}) has a colour outside the palette")
    return out


def write_ppm(path, img: np.ndarray) -> None:
    img = np.ascontiguousarray(img, dtype=np.uint8)
    if img.ndim != 3 or img.shape[2] != 3:
        raise FormatError(f"expected an [H, W, 3] image, got shape {img.shape}")
    H, W, _ = img.shape
    with open(path, "wb") as f:
        f.write(f"P6\n{W} {H}\n255\n".encode("ascii"))
        f.write(img.tobytes())


def read_ppm(path) -> np.ndarray:
    """Read a binary PPM as written by :func:`write_ppm`."""
    raw = Path(path).read_bytes()
    fields, pos = [], 0
    while len(fields) < 4:
        while pos < len(raw) and raw[pos:pos + 1].isspace():
            pos += 1
        if raw[pos:pos + 1] == b"#":
            pos = raw.index(b"\n", pos) + 1
            continue
        end = pos
        while end < len(raw) and not raw[end:end + 1].isspace():
            end += 1
        if end == pos:
            raise FormatError(f"{path}: truncated PPM header")
        fields.append(raw[pos:end])
        pos = end
    pos += 1  # single whitespace byte before the raster
    if fields[0] != b"P6":
        raise FormatError(f"{path}: not a binary PPM (magic {fields[0]!r})")
    try:
        W, H, maxval = (int(v) for v in fields[1:])
    except ValueError:
        raise FormatError(f"{path}: malformed PPM header") from None
    if maxval != 255:
        raise FormatError(f"{path}: only 8-bit PPM is supported, maxval {maxval}")
    expected = 3 * W * H
    if len(raw) - pos != expected:
        raise FormatError(f"{path}: expected {expected} raster bytes, found {len(raw) - pos}")
    return np.frombuffer(raw, dtype=np.uint8, offset=pos).reshape(H, W, 3).copy()


def render_map(path, classes: np.ndarray) -> None:
    write_ppm(path, colorize(classes))
