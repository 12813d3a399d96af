"""Synthetic multi-object corpora and the hand-built quadrant model.

Corpus images are square grayscale pictures split into four quadrants.  A
fixed set of texture patterns (stripes, checkerboard, solid) doubles as the
category set; pattern p always occupies quadrant p, every image carries at
least two patterns, and the remaining quadrants stay near-black background.
Object annotations are the quadrant rectangles (patch-grid aligned) with the
pattern id as category, plus an exact RLE segmentation.

The quadrant model is a single-block, four-head transformer whose weights
are constructed, not trained.  Attention geometry: positional rows carry a
one-hot quadrant marker, the key projection routes marker q to head q's
first coordinate, and every query row reads that coordinate, so head q's
CLS row concentrates on quadrant q.  Content: the patch embedding's first
four coordinates are the patch's 4x4 sub-block mean intensities (which
separate the textures), and the value projection copies those coordinates
into every head's block.  A head's CLS contribution is therefore the texture
signature of its quadrant, which makes single-head selection clearly
beneficial on this corpus and gives the head-count sweep a known optimum.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import BadParam
from .image import write_pgm
from .manifest import DatasetManifest, ImageEntry, ObjectAnnotation, save_manifest
from .model import LayerWeights, ModelConfig, ModelWeights
from .prompts import Box, Segment, rle_encode

PATTERN_CATEGORIES = ("pattern-0", "pattern-1", "pattern-2", "pattern-3")


@dataclass(frozen=True)
class SyntheticCorpusSpec:
    seed: int = 0
    image_size: int = 32
    pattern_count: int = 4
    db_per_pair: int = 5
    query_per_pair: int = 1
    patch_size: int = 8

    def __post_init__(self):
        if not 2 <= self.pattern_count <= 4:
            raise BadParam("pattern_count must be in [2, 4]")
        if self.image_size % (2 * self.patch_size):
            raise BadParam("image_size must be divisible by twice the patch size")


def _quadrant_box(q: int, size: int) -> Box:
    half = size // 2
    x0 = (q % 2) * half
    y0 = (q // 2) * half
    return Box(x0, y0, x0 + half - 1, y0 + half - 1)


def _paint_pattern(tile: np.ndarray, pattern: int) -> None:
    """Fill a square tile in place with one of four distinct textures."""
    side = tile.shape[0]
    yy, xx = np.mgrid[0:side, 0:side]
    if pattern == 0:  # horizontal stripes
        tile[:] = np.where((yy // 4) % 2 == 0, 0.9, 0.1)
    elif pattern == 1:  # vertical stripes
        tile[:] = np.where((xx // 4) % 2 == 0, 0.9, 0.1)
    elif pattern == 2:  # checkerboard
        tile[:] = np.where(((yy // 4) + (xx // 4)) % 2 == 0, 0.85, 0.15)
    elif pattern == 3:  # bright solid
        tile[:] = 0.8
    else:
        raise BadParam(f"no texture defined for pattern {pattern}")


def _compose_image(
    patterns: tuple[int, ...], size: int, rng: np.random.Generator
) -> np.ndarray:
    img = np.zeros((size, size))
    half = size // 2
    for q in patterns:
        box = _quadrant_box(q, size)
        tile = img[box.y0 : box.y1 + 1, box.x0 : box.x1 + 1]
        _paint_pattern(tile, q)
    img += rng.normal(0.0, 0.02, size=img.shape)
    return np.clip(img, 0.0, 1.0)


def _segment_for(box: Box, size: int) -> Segment:
    bits = np.zeros((size, size), dtype=bool)
    bits[box.y0 : box.y1 + 1, box.x0 : box.x1 + 1] = True
    return Segment(tuple(rle_encode(bits)), size, size)


def gen_synthetic_corpus(
    spec: SyntheticCorpusSpec, out_dir
) -> tuple[DatasetManifest, DatasetManifest]:
    """Write query/db manifests plus PGM pixel files; returns (query, db).

    Database images cycle through every unordered pattern pair db_per_pair
    times, so the categories stay balanced; query images do the same with
    query_per_pair and disjoint ids.
    """
    out_dir = Path(out_dir)
    (out_dir / "images").mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(spec.seed)
    pairs = list(itertools.combinations(range(spec.pattern_count), 2))

    def build(prefix: str, repeats: int) -> DatasetManifest:
        entries = []
        for rep in range(repeats):
            for pair in pairs:
                idx = len(entries)
                image_id = f"{prefix}-{idx:03d}"
                img = _compose_image(pair, spec.image_size, rng)
                rel = f"images/{image_id}.pgm"
                write_pgm(out_dir / rel, img)
                objects = [
                    ObjectAnnotation(
                        category=PATTERN_CATEGORIES[q],
                        box=_quadrant_box(q, spec.image_size),
                        segmentation=_segment_for(
                            _quadrant_box(q, spec.image_size), spec.image_size
                        ),
                    )
                    for q in pair
                ]
                entries.append(
                    ImageEntry(
                        image_id=image_id,
                        h=spec.image_size,
                        w=spec.image_size,
                        path=rel,
                        objects=objects,
                    )
                )
        return DatasetManifest(images=entries, root=out_dir)

    db = build("db", spec.db_per_pair)
    queries = build("query", spec.query_per_pair)
    save_manifest(out_dir / "db_manifest.json", db)
    save_manifest(out_dir / "query_manifest.json", queries)
    return queries, db


QUADRANT_CONFIG = ModelConfig(
    patch_size=8,
    embed_dim=16,
    num_heads=4,
    head_dim=4,
    num_layers=1,
    num_registers=0,
    ffn_hidden=64,
    image_h=32,
    image_w=32,
    channels=1,
)


def build_quadrant_model() -> ModelWeights:
    """Four-head model with one head locked onto each image quadrant.

    Fully deterministic construction; see the module docstring for the
    coordinate layout (0..3 content sub-block means, 4..7 quadrant markers).
    """
    cfg = QUADRANT_CONFIG
    d = cfg.embed_dim
    p = cfg.patch_size
    marker, query_gain, key_gain = 3.0, 2.0, 2.0

    # patch embedding: coordinate j in 0..3 = mean of the patch's j-th 4x4 sub-block
    patch_projection = np.zeros((cfg.patch_len, d))
    for row in range(p):
        for col in range(p):
            j = (row // (p // 2)) * 2 + (col // (p // 2))
            patch_projection[row * p + col, j] = 1.0 / ((p // 2) * (p // 2))

    gh, gw = cfg.image_h // p, cfg.image_w // p
    positional = np.zeros((cfg.n_tokens, d))
    for t in range(cfg.n_patches):
        r, c = divmod(t, gw)
        quadrant = (r // (gh // 2)) * 2 + (c // (gw // 2))
        positional[1 + t, 4 + quadrant] = marker

    w_k = np.zeros((d, d))
    for q in range(4):
        w_k[4 + q, 4 * q] = key_gain
    b_q = np.zeros(d)
    b_q[[0, 4, 8, 12]] = query_gain

    # values: copy content coords 0..3 into every head's block
    w_v = np.zeros((d, d))
    for q in range(4):
        for j in range(4):
            w_v[j, 4 * q + j] = 1.0

    layer = LayerWeights(
        w_q=np.zeros((d, d)), b_q=b_q,
        w_k=w_k, b_k=np.zeros(d),
        w_v=w_v, b_v=np.zeros(d),
        w_o=np.eye(d), b_o=np.zeros(d),
        ln1_gamma=np.ones(d), ln1_beta=np.zeros(d),
        ln2_gamma=np.ones(d), ln2_beta=np.zeros(d),
        ffn_w1=np.zeros((d, cfg.ffn_hidden)),
        ffn_b1=np.zeros(cfg.ffn_hidden),
        ffn_w2=np.zeros((cfg.ffn_hidden, d)),  # FFN disabled: pure residual tail
        ffn_b2=np.zeros(d),
    )
    return ModelWeights(
        config=cfg,
        patch_projection=patch_projection,
        patch_bias=np.zeros(d),
        cls_token=np.zeros(d),
        register_tokens=np.zeros((0, d)),
        positional=positional,
        layers=[layer],
        final_gamma=np.ones(d),
        final_beta=np.zeros(d),
    )
