"""Visual prompts: point / box / segment, rasterization, token masks, box noise.

The JSON wire schema is shared by the CLI, the HTTP service and the browser
client:

    {"type": "box", "x0": .., "y0": .., "x1": .., "y1": ..}
    {"type": "point", "x": .., "y": .., "window": ..}
    {"type": "segment", "rle": [..], "h": .., "w": ..}

Segment masks travel as row-major run-length counts alternating zero-run,
one-run, zero-run, ... starting with the count of leading zeros.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import BadGeometry, BadParam, BadPrompt


@dataclass(frozen=True)
class Box:
    x0: int
    y0: int
    x1: int
    y1: int

    def normalized(self) -> "Box":
        x0, x1 = sorted((int(self.x0), int(self.x1)))
        y0, y1 = sorted((int(self.y0), int(self.y1)))
        return Box(x0, y0, x1, y1)

    def clamped(self, h: int, w: int) -> "Box":
        b = self.normalized()
        return Box(
            min(max(b.x0, 0), w - 1),
            min(max(b.y0, 0), h - 1),
            min(max(b.x1, 0), w - 1),
            min(max(b.y1, 0), h - 1),
        )

    def width(self) -> int:
        return self.x1 - self.x0 + 1

    def height(self) -> int:
        return self.y1 - self.y0 + 1


@dataclass(frozen=True)
class Point:
    x: int
    y: int
    window: int = 3  # square side, in patches


@dataclass(frozen=True)
class Segment:
    rle: tuple[int, ...]
    h: int
    w: int


Prompt = Box | Point | Segment


@dataclass(frozen=True)
class NoiseParams:
    m: int
    seed: int = 0

    def __post_init__(self):
        if self.m < 0:
            raise BadParam("noise amplitude m must be >= 0")


@dataclass
class PromptMask:
    h: int
    w: int
    bits: np.ndarray  # (h, w) bool

    def is_empty(self) -> bool:
        return not bool(self.bits.any())


@dataclass
class TokenMask:
    n: int
    bits: np.ndarray  # (n,) bool over patch tokens in grid order

    def indices(self) -> np.ndarray:
        return np.flatnonzero(self.bits)

    def is_empty(self) -> bool:
        return not bool(self.bits.any())


def rle_encode(bits: np.ndarray) -> list[int]:
    """Row-major RLE, alternating runs starting with the zero-run count."""
    flat = np.asarray(bits, dtype=bool).ravel()
    runs: list[int] = []
    current = False
    count = 0
    for b in flat:
        if b == current:
            count += 1
        else:
            runs.append(count)
            current = b
            count = 1
    runs.append(count)
    return runs


def rle_decode(runs, h: int, w: int) -> np.ndarray:
    runs = [int(r) for r in runs]
    if any(r < 0 for r in runs):
        raise BadPrompt("negative run length")
    total = sum(runs)
    if total != h * w:
        raise BadPrompt(f"RLE decodes to {total} bits, expected {h * w}")
    out = np.zeros(h * w, dtype=bool)
    pos = 0
    value = False
    for r in runs:
        if value:
            out[pos : pos + r] = True
        pos += r
        value = not value
    return out.reshape(h, w)


def prompt_to_json(prompt: Prompt) -> dict:
    if isinstance(prompt, Box):
        return {"type": "box", "x0": prompt.x0, "y0": prompt.y0, "x1": prompt.x1, "y1": prompt.y1}
    if isinstance(prompt, Point):
        return {"type": "point", "x": prompt.x, "y": prompt.y, "window": prompt.window}
    if isinstance(prompt, Segment):
        return {"type": "segment", "rle": list(prompt.rle), "h": prompt.h, "w": prompt.w}
    raise BadPrompt(f"unknown prompt object {type(prompt).__name__}")


def prompt_from_json(obj: dict) -> Prompt:
    if not isinstance(obj, dict) or "type" not in obj:
        raise BadPrompt("prompt JSON must be an object with a 'type' field")
    kind = obj["type"]
    try:
        if kind == "box":
            return Box(int(obj["x0"]), int(obj["y0"]), int(obj["x1"]), int(obj["y1"]))
        if kind == "point":
            return Point(int(obj["x"]), int(obj["y"]), int(obj.get("window", 3)))
        if kind == "segment":
            return Segment(tuple(int(r) for r in obj["rle"]), int(obj["h"]), int(obj["w"]))
    except (KeyError, TypeError, ValueError) as exc:
        raise BadPrompt(f"malformed {kind} prompt: {exc}") from exc
    raise BadPrompt(f"unknown prompt type {kind!r}")


def rasterize(prompt: Prompt, h: int, w: int, patch_size: int) -> PromptMask:
    """Pixel mask of the prompt's region of interest.

    Boxes fill the inclusive rectangle (clamped to bounds).  Points fill a
    ``window`` x ``window`` block of patches centered on the patch containing
    the point, clipped at the image edge.  Segments decode their RLE, which
    must match the image size exactly.
    """
    bits = np.zeros((h, w), dtype=bool)
    if isinstance(prompt, Box):
        b = prompt.clamped(h, w)
        bits[b.y0 : b.y1 + 1, b.x0 : b.x1 + 1] = True
    elif isinstance(prompt, Point):
        if not (0 <= prompt.x < w and 0 <= prompt.y < h):
            raise BadPrompt(f"point ({prompt.x}, {prompt.y}) outside {w}x{h} image")
        if prompt.window < 1:
            raise BadPrompt("point window must be >= 1")
        p = patch_size
        pr, pc = prompt.y // p, prompt.x // p
        half = prompt.window // 2
        r0 = max(pr - half, 0)
        c0 = max(pc - half, 0)
        r1 = min(pr - half + prompt.window, h // p)
        c1 = min(pc - half + prompt.window, w // p)
        bits[r0 * p : r1 * p, c0 * p : c1 * p] = True
    elif isinstance(prompt, Segment):
        if (prompt.h, prompt.w) != (h, w):
            raise BadPrompt(
                f"segment mask is {prompt.h}x{prompt.w}, image is {h}x{w}"
            )
        bits = rle_decode(prompt.rle, h, w)
    else:
        raise BadPrompt(f"unknown prompt object {type(prompt).__name__}")
    return PromptMask(h=h, w=w, bits=bits)


def tokenize_mask(
    mask: PromptMask, patch_size: int, overlap_threshold: float | None = None
) -> TokenMask:
    """Patch-token mask: a patch is set when its covered-pixel fraction
    reaches ``overlap_threshold`` (default: any overlapping pixel)."""
    p = patch_size
    if mask.h % p or mask.w % p:
        raise BadGeometry(f"mask {mask.h}x{mask.w} not divisible by patch size {p}")
    if overlap_threshold is None:
        overlap_threshold = 1.0 / (p * p)
    if not (0.0 < overlap_threshold <= 1.0):
        raise BadParam("overlap_threshold must be in (0, 1]")
    gh, gw = mask.h // p, mask.w // p
    per_patch = (
        mask.bits.reshape(gh, p, gw, p).transpose(0, 2, 1, 3).reshape(gh * gw, p * p)
    )
    frac = per_patch.sum(axis=1) / float(p * p)
    return TokenMask(n=gh * gw, bits=frac >= overlap_threshold)


def add_box_noise(box: Box, params: NoiseParams, h: int, w: int) -> Box:
    """Randomly shift and resize a box prompt.

    Four offsets (cx, cy, lx, ly) are drawn in that order from the discrete
    uniform distribution on [-m, m] (PCG64 stream seeded by ``params.seed``).
    The top-left corner moves by (cx, cy) - (lx, ly), the bottom-right by
    (cx, cy) + (lx, ly); the result is clamped to the image and re-normalized
    by swapping if the corners inverted.
    """
    b = box.normalized()
    rng = np.random.default_rng(params.seed)
    cx, cy, lx, ly = (int(v) for v in rng.integers(-params.m, params.m + 1, size=4))
    noisy = Box(b.x0 + cx - lx, b.y0 + cy - ly, b.x1 + cx + lx, b.y1 + cy + ly)
    return noisy.clamped(h, w)
