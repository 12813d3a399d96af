"""Image I/O and pixel-space operations.

Grayscale corpora are stored as binary PGM (P5, 8-bit), written and parsed
here so files are byte-reproducible.  PNG (and anything else Pillow knows)
is read through Pillow when available.  Pixels are float64 HWC in [0, 1].
"""

from __future__ import annotations

import re
from pathlib import Path

import numpy as np

from .errors import BadGeometry, FormatError
from .prompts import Box, PromptMask


def write_pgm(path, gray: np.ndarray) -> None:
    """Write a (H, W) array as 8-bit binary PGM; floats are taken as [0, 1]."""
    arr = np.asarray(gray)
    if arr.ndim == 3 and arr.shape[2] == 1:
        arr = arr[:, :, 0]
    if arr.ndim != 2:
        raise BadGeometry(f"PGM writer needs a 2-D array, got shape {arr.shape}")
    if arr.dtype != np.uint8:
        arr = np.clip(np.rint(arr * 255.0), 0, 255).astype(np.uint8)
    h, w = arr.shape
    with open(path, "wb") as fh:
        fh.write(f"P5\n{w} {h}\n255\n".encode("ascii"))
        fh.write(arr.tobytes())


def read_pgm(path) -> np.ndarray:
    """Read an 8-bit binary PGM into (H, W, 1) float64 in [0, 1]."""
    data = Path(path).read_bytes()
    m = re.match(rb"P5\s+(\d+)\s+(\d+)\s+(\d+)\s", data)
    if not m:
        raise FormatError(f"{path}: not a binary PGM (P5) header")
    w, h, maxval = (int(g) for g in m.groups())
    if maxval != 255:
        raise FormatError(f"{path}: only maxval 255 supported, got {maxval}")
    payload = data[m.end() : m.end() + h * w]
    if len(payload) != h * w:
        raise FormatError(f"{path}: truncated pixel payload")
    arr = np.frombuffer(payload, dtype=np.uint8).reshape(h, w)
    return (arr.astype(np.float64) / 255.0)[:, :, None]


def read_image(path) -> np.ndarray:
    """Read a pixel file into (H, W, C) float64 in [0, 1]."""
    path = Path(path)
    if path.suffix.lower() == ".pgm":
        return read_pgm(path)
    from PIL import Image  # optional dependency, only for non-PGM sources

    with Image.open(path) as im:
        arr = np.asarray(im, dtype=np.float64) / 255.0
    if arr.ndim == 2:
        arr = arr[:, :, None]
    return arr


def apply_pixel_mask(img: np.ndarray, mask: PromptMask, fill: float = 0.0) -> np.ndarray:
    """Keep pixels inside the mask, replace the rest with ``fill``."""
    if img.shape[:2] != (mask.h, mask.w):
        raise BadGeometry(f"mask {mask.h}x{mask.w} does not fit image {img.shape[:2]}")
    out = np.full_like(img, fill)
    out[mask.bits] = img[mask.bits]
    return out


def crop_box(img: np.ndarray, box: Box) -> np.ndarray:
    h, w = img.shape[:2]
    b = box.clamped(h, w)
    return img[b.y0 : b.y1 + 1, b.x0 : b.x1 + 1, :]


def bilinear_resize(img: np.ndarray, out_h: int, out_w: int) -> np.ndarray:
    """Corner-aligned bilinear resize of an (H, W, C) image."""
    img = np.asarray(img, dtype=np.float64)
    in_h, in_w = img.shape[:2]
    if in_h < 1 or in_w < 1 or out_h < 1 or out_w < 1:
        raise BadGeometry("resize needs non-empty input and output")

    def grid(n_in, n_out):
        if n_out == 1 or n_in == 1:
            return np.zeros(n_out)
        return np.arange(n_out) * (n_in - 1) / (n_out - 1)

    ys, xs = grid(in_h, out_h), grid(in_w, out_w)
    y0 = np.floor(ys).astype(int)
    x0 = np.floor(xs).astype(int)
    y1 = np.minimum(y0 + 1, in_h - 1)
    x1 = np.minimum(x0 + 1, in_w - 1)
    fy = (ys - y0)[:, None, None]
    fx = (xs - x0)[None, :, None]
    top = img[y0][:, x0] * (1 - fx) + img[y0][:, x1] * fx
    bottom = img[y1][:, x0] * (1 - fx) + img[y1][:, x1] * fx
    return top * (1 - fy) + bottom * fy
