"""Feature store, exact cosine top-k, and the prompted query modes.

Modes:

  * ``cbir``       — plain global-feature search.
  * ``mask``       — pixels outside the prompt zeroed, then plain search.
  * ``crop``       — prompt box cropped and bilinearly resized back to the
                     model input size, then plain search.
  * ``attn-mask``  — last-layer CLS attention renormalized onto the prompt.
  * ``phs-qo``     — heads selected from the query's prompt; only the query
                     feature is recomputed.
  * ``phs-qd``     — the query's head selection is also applied to every
                     database record via its cached attention state.

Search is an exact full scan (argmax_k of cosine similarity); ties break by
store position.  Store files round-trip bit-exactly and carry the model
fingerprint so a store is never queried with the wrong weights.
"""

from __future__ import annotations

import io
import logging
import struct
from dataclasses import dataclass, field, replace

import numpy as np

from . import numerics as nm
from .errors import (
    BadParam,
    DimensionMismatch,
    EmptyMaskError,
    EmptyStoreError,
    FingerprintMismatch,
    FormatError,
    IndexBuildError,
    MissingCacheError,
)
from .image import apply_pixel_mask, bilinear_resize, crop_box
from .manifest import DatasetManifest
from .model import ModelWeights, fingerprint, read_tensor, write_tensor
from .prompts import (
    Box,
    NoiseParams,
    Point,
    Prompt,
    Segment,
    add_box_noise,
    rasterize,
    tokenize_mask,
)
from .selection import (
    HeadSelection,
    all_heads,
    attention_mask_variant,
    feature_with_selection,
    roi_attention,
    select_heads,
)
from .vit import AttentionState, forward

log = logging.getLogger(__name__)

STORE_MAGIC = b"PHSF"
STORE_VERSION = 1

MODES = ("cbir", "mask", "crop", "attn-mask", "phs-qo", "phs-qd")
PROMPTED_MODES = tuple(m for m in MODES if m != "cbir")
FALLBACK_POLICIES = ("cbir", "strict")


@dataclass
class FeatureRecord:
    image_id: str
    feature: np.ndarray
    state: AttentionState | None = None


@dataclass
class FeatureStore:
    fingerprint: str
    records: list[FeatureRecord] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.records)

    @property
    def dim(self) -> int:
        if not self.records:
            raise EmptyStoreError("store has no records")
        return self.records[0].feature.shape[0]

    def ids(self) -> list[str]:
        return [r.image_id for r in self.records]

    def record(self, image_id: str):
        for r in self.records:
            if r.image_id == image_id:
                return r
        return None

    def feature_matrix(self) -> np.ndarray:
        return np.stack([r.feature for r in self.records])

    def has_caches(self) -> bool:
        return all(r.state is not None for r in self.records)


@dataclass
class RankedItem:
    image_id: str
    score: float
    rank: int


@dataclass
class RetrievalResult:
    ranked: list[RankedItem]
    mode: str
    selection: HeadSelection | None = None
    fallback: bool = False


@dataclass
class QuerySpec:
    image: np.ndarray
    image_id: str | None = None
    prompt: Prompt | None = None
    mode: str = "cbir"
    h_on: int | None = None
    k: int = 10
    roi: str = "sum"
    strategy: str = "before_scale"
    noise: NoiseParams | None = None
    overlap_threshold: float | None = None
    exclude: frozenset[str] = frozenset()


def build_index(
    manifest: DatasetManifest, weights: ModelWeights, cache: bool = True
) -> FeatureStore:
    """Forward every manifest image in order; optionally keep attention caches."""
    store = FeatureStore(fingerprint=fingerprint(weights))
    failures = []
    for entry in manifest.images:
        try:
            img = manifest.load_image(entry.image_id)
            feature, state = forward(img, weights)
        except Exception as exc:  # collect all offenders before failing
            failures.append(f"{entry.image_id}: {exc}")
            continue
        store.records.append(
            FeatureRecord(
                image_id=entry.image_id,
                feature=feature,
                state=state if cache else None,
            )
        )
    if failures:
        raise IndexBuildError(
            "index build failed for " + "; ".join(failures)
        )
    return store


def _rank(
    query_feature: np.ndarray,
    ids: list[str],
    matrix: np.ndarray,
    k: int,
    exclude: frozenset[str],
) -> list[RankedItem]:
    if k < 1:
        raise BadParam("k must be >= 1")
    if matrix.shape[0] == 0:
        raise EmptyStoreError("store has no records")
    q = np.asarray(query_feature, dtype=np.float64)
    if q.shape[0] != matrix.shape[1]:
        raise DimensionMismatch(
            f"query feature dim {q.shape[0]} != store dim {matrix.shape[1]}"
        )
    qn = float(np.sqrt(np.sum(q * q)))
    if qn == 0.0:
        raise BadParam("query feature has zero norm")
    norms = np.sqrt(np.sum(matrix * matrix, axis=1))
    scores = nm.matmul(matrix, q[:, None])[:, 0] / (norms * qn)
    keep = np.array([i not in exclude for i in ids], dtype=bool)
    kept_idx = np.flatnonzero(keep)
    order = kept_idx[np.argsort(-scores[kept_idx], kind="stable")]
    out = []
    for rank, idx in enumerate(order[:k], start=1):
        out.append(RankedItem(image_id=ids[idx], score=float(scores[idx]), rank=rank))
    return out


def cosine_topk(
    query_feature: np.ndarray,
    store: FeatureStore,
    k: int,
    exclude: frozenset[str] = frozenset(),
) -> RetrievalResult:
    """Exact full-scan cosine ranking against the stored features."""
    if not store.records:
        raise EmptyStoreError("store has no records")
    ranked = _rank(query_feature, store.ids(), store.feature_matrix(), k, exclude)
    return RetrievalResult(ranked=ranked, mode="cbir")


def _token_mask(spec: QuerySpec, weights: ModelWeights, prompt: Prompt):
    cfg = weights.config
    pixel = rasterize(prompt, cfg.image_h, cfg.image_w, cfg.patch_size)
    return tokenize_mask(pixel, cfg.patch_size, spec.overlap_threshold), pixel


def _apply_noise(spec: QuerySpec, weights: ModelWeights) -> Prompt:
    prompt = spec.prompt
    if spec.noise is not None and isinstance(prompt, Box):
        cfg = weights.config
        prompt = add_box_noise(prompt, spec.noise, cfg.image_h, cfg.image_w)
    return prompt


def _crop_region(prompt: Prompt, weights: ModelWeights) -> Box:
    cfg = weights.config
    if isinstance(prompt, Box):
        return prompt.clamped(cfg.image_h, cfg.image_w)
    pixel = rasterize(prompt, cfg.image_h, cfg.image_w, cfg.patch_size)
    if pixel.is_empty():
        raise EmptyMaskError("prompt selects no pixels")
    rows = np.flatnonzero(pixel.bits.any(axis=1))
    cols = np.flatnonzero(pixel.bits.any(axis=0))
    return Box(int(cols[0]), int(rows[0]), int(cols[-1]), int(rows[-1]))


def query(
    spec: QuerySpec,
    store: FeatureStore,
    weights: ModelWeights,
    fallback: str = "cbir",
) -> RetrievalResult:
    """Run one retrieval query according to its mode.

    ``fallback`` controls what happens when the prompt covers no patch token:
    ``"cbir"`` (default) answers with the unprompted ranking and flags the
    result, ``"strict"`` propagates the error.
    """
    if spec.mode not in MODES:
        raise BadParam(f"unknown mode {spec.mode!r} (have {MODES})")
    if fallback not in FALLBACK_POLICIES:
        raise BadParam(f"unknown fallback policy {fallback!r}")
    if spec.mode in PROMPTED_MODES and spec.prompt is None:
        raise BadParam(f"mode {spec.mode!r} requires a prompt")
    if spec.mode in ("phs-qo", "phs-qd"):
        if spec.h_on is None:
            raise BadParam("phs modes require h_on")
    try:
        return _query_inner(spec, store, weights)
    except EmptyMaskError:
        if fallback == "strict":
            raise
        log.warning(
            "prompt for query %s selects no tokens; falling back to cbir",
            spec.image_id or "<inline>",
        )
        result = _query_inner(replace(spec, mode="cbir"), store, weights)
        return replace(result, fallback=True)


def _query_inner(
    spec: QuerySpec, store: FeatureStore, weights: ModelWeights
) -> RetrievalResult:
    mode = spec.mode

    if mode == "cbir":
        feature, _ = forward(spec.image, weights)
        result = cosine_topk(feature, store, spec.k, spec.exclude)
        return replace(result, mode=mode)

    prompt = _apply_noise(spec, weights)

    if mode == "mask":
        cfg = weights.config
        pixel = rasterize(prompt, cfg.image_h, cfg.image_w, cfg.patch_size)
        if pixel.is_empty():
            raise EmptyMaskError("prompt selects no pixels")
        feature, _ = forward(apply_pixel_mask(spec.image, pixel), weights)
        result = cosine_topk(feature, store, spec.k, spec.exclude)
        return replace(result, mode=mode)

    if mode == "crop":
        cfg = weights.config
        region = _crop_region(prompt, weights)
        cropped = crop_box(spec.image, region)
        resized = bilinear_resize(cropped, cfg.image_h, cfg.image_w)
        feature, _ = forward(resized, weights)
        result = cosine_topk(feature, store, spec.k, spec.exclude)
        return replace(result, mode=mode)

    feature, state = forward(spec.image, weights)
    mask, _ = _token_mask(spec, weights, prompt)

    if mode == "attn-mask":
        masked = attention_mask_variant(state, mask)
        feat = feature_with_selection(masked, all_heads(masked), weights)
        result = cosine_topk(feat, store, spec.k, spec.exclude)
        return replace(result, mode=mode)

    scores = roi_attention(state, mask, spec.roi)
    sel = select_heads(scores, spec.h_on)
    qfeat = feature_with_selection(state, sel, weights, spec.strategy)

    if mode == "phs-qo":
        result = cosine_topk(qfeat, store, spec.k, spec.exclude)
        return replace(result, mode=mode, selection=sel)

    # phs-qd: apply the query's selection to every cached database state
    ids, rows = [], []
    for rec in store.records:
        if rec.state is None:
            raise MissingCacheError(
                f"record {rec.image_id!r} has no cached attention state"
            )
        ids.append(rec.image_id)
        rows.append(feature_with_selection(rec.state, sel, weights, spec.strategy))
    ranked = _rank(qfeat, ids, np.stack(rows), spec.k, spec.exclude)
    return RetrievalResult(ranked=ranked, mode=mode, selection=sel)


def _write_state(buf, state: AttentionState) -> None:
    buf.write(struct.pack("<II", state.n_registers, state.n_patches))
    write_tensor(buf, state.attn)
    write_tensor(buf, state.head_values)
    write_tensor(buf, state.head_cls)
    write_tensor(buf, state.cls_input)


def _read_state(buf) -> AttentionState:
    raw = buf.read(8)
    if len(raw) != 8:
        raise FormatError("truncated cached state header")
    n_registers, n_patches = struct.unpack("<II", raw)
    return AttentionState(
        attn=read_tensor(buf),
        head_values=read_tensor(buf),
        head_cls=read_tensor(buf),
        cls_input=read_tensor(buf),
        n_registers=n_registers,
        n_patches=n_patches,
    )


def serialize_store(store: FeatureStore) -> bytes:
    buf = io.BytesIO()
    buf.write(STORE_MAGIC)
    buf.write(struct.pack("<I", STORE_VERSION))
    fp = store.fingerprint.encode("ascii")
    buf.write(struct.pack("<I", len(fp)))
    buf.write(fp)
    buf.write(struct.pack("<I", len(store.records)))
    for rec in store.records:
        rid = rec.image_id.encode("utf-8")
        buf.write(struct.pack("<I", len(rid)))
        buf.write(rid)
        write_tensor(buf, rec.feature)
        buf.write(struct.pack("<B", 1 if rec.state is not None else 0))
        if rec.state is not None:
            _write_state(buf, rec.state)
    return buf.getvalue()


def save_store(path, store: FeatureStore) -> None:
    with open(path, "wb") as fh:
        fh.write(serialize_store(store))


def deserialize_store(data: bytes, expected_fingerprint: str | None = None) -> FeatureStore:
    buf = io.BytesIO(data)
    if buf.read(4) != STORE_MAGIC:
        raise FormatError(f"bad magic, expected {STORE_MAGIC!r}")
    raw = buf.read(4)
    if len(raw) != 4:
        raise FormatError("truncated store header")
    (version,) = struct.unpack("<I", raw)
    if version != STORE_VERSION:
        raise FormatError(f"unsupported store version {version}")
    (fp_len,) = struct.unpack("<I", buf.read(4))
    fp = buf.read(fp_len).decode("ascii")
    if expected_fingerprint is not None and fp != expected_fingerprint:
        raise FingerprintMismatch(
            f"store was built for model {fp[:12]}..., expected {expected_fingerprint[:12]}..."
        )
    (count,) = struct.unpack("<I", buf.read(4))
    store = FeatureStore(fingerprint=fp)
    for _ in range(count):
        raw = buf.read(4)
        if len(raw) != 4:
            raise FormatError("truncated record header")
        (id_len,) = struct.unpack("<I", raw)
        rid = buf.read(id_len).decode("utf-8")
        feature = read_tensor(buf)
        flag = buf.read(1)
        if len(flag) != 1:
            raise FormatError("truncated cache flag")
        state = _read_state(buf) if flag[0] else None
        store.records.append(FeatureRecord(image_id=rid, feature=feature, state=state))
    if buf.read(1):
        raise FormatError("trailing bytes after final record")
    return store


def load_store(path, expected_fingerprint: str | None = None) -> FeatureStore:
    with open(path, "rb") as fh:
        return deserialize_store(fh.read(), expected_fingerprint)
