"""Prompt-guided head selection over cached last-layer attention.

Given a patch-token mask, each head is scored by the CLS-row attention mass
falling on the masked patch columns (register and CLS columns never count).
The top ``h_on`` heads are retained and the last block's multi-head output is
recombined from the cached per-head CLS contributions:

  * ``before_scale`` (default): retained contributions scaled by h/h_on,
    dropped ones zeroed, then the output projection.
  * ``before``: same without the scale factor.
  * ``after`` / ``after_scale``: the projection is split into per-head
    partial sums (row blocks of the output matrix) and dropped heads are
    removed after projecting; algebraically this matches the ``before``
    family up to rounding, and the projection bias is added exactly once.
  * ``identity``: dropped heads keep their value pathway but their attention
    matrix is replaced by the identity, so their CLS contribution becomes
    the CLS value row itself; retained heads are not rescaled.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from . import numerics as nm
from .errors import BadParam, DimensionMismatch, EmptyMaskError
from .model import ModelWeights
from .prompts import TokenMask
from .vit import AttentionState, cls_tail_feature, project_head_rows

ROI_STRATEGIES = ("sum", "max")
SELECTION_STRATEGIES = ("before_scale", "before", "after", "after_scale", "identity")


@dataclass(frozen=True)
class HeadSelection:
    on: tuple[int, ...]  # ascending retained head indices
    h_on: int
    scores: np.ndarray  # per-head ROI attention that produced the choice

    def __post_init__(self):
        if len(self.on) != self.h_on:
            raise BadParam("selection size disagrees with h_on")


def roi_attention(
    state: AttentionState, mask: TokenMask, strategy: str = "sum"
) -> np.ndarray:
    """Per-head attention mass (or peak) on the masked patch columns."""
    if strategy not in ROI_STRATEGIES:
        raise BadParam(f"unknown ROI strategy {strategy!r}")
    if mask.n != state.n_patches:
        raise DimensionMismatch(
            f"token mask length {mask.n} != patch count {state.n_patches}"
        )
    idx = mask.indices()
    if idx.size == 0:
        raise EmptyMaskError("prompt selects no patch tokens")
    cols = 1 + state.n_registers + idx
    sub = state.attn[:, 0, cols]
    return sub.sum(axis=1) if strategy == "sum" else sub.max(axis=1)


def select_heads(scores: np.ndarray, h_on: int) -> HeadSelection:
    """Retain the h_on highest-scoring heads; ties keep the lower index."""
    scores = np.asarray(scores, dtype=np.float64)
    h = scores.shape[0]
    if not 1 <= h_on <= h:
        raise BadParam(f"h_on must be in [1, {h}], got {h_on}")
    order = np.argsort(-scores, kind="stable")  # stable: equal scores keep low index
    on = tuple(sorted(int(i) for i in order[:h_on]))
    return HeadSelection(on=on, h_on=h_on, scores=scores)


def all_heads(state: AttentionState) -> HeadSelection:
    h = state.n_heads
    return HeadSelection(on=tuple(range(h)), h_on=h, scores=np.ones(h))


def _validate_selection(selection: HeadSelection, h: int) -> None:
    if any(not 0 <= i < h for i in selection.on):
        raise BadParam(f"selection indices {selection.on} out of range for {h} heads")
    if len(set(selection.on)) != selection.h_on:
        raise BadParam("selection contains duplicate head indices")


def recombine_mha(
    state: AttentionState,
    selection: HeadSelection,
    w_o: np.ndarray,
    b_o: np.ndarray,
    strategy: str = "before_scale",
) -> np.ndarray:
    """CLS row of the recombined multi-head output under the selection."""
    if strategy not in SELECTION_STRATEGIES:
        raise BadParam(f"unknown selection strategy {strategy!r}")
    h, dk = state.head_cls.shape
    _validate_selection(selection, h)
    on = np.zeros(h, dtype=bool)
    on[list(selection.on)] = True
    scale = h / selection.h_on

    if strategy in ("before_scale", "before"):
        rows = state.head_cls * on[:, None]
        if strategy == "before_scale":
            rows = rows * scale
        return project_head_rows(rows, w_o, b_o)

    if strategy in ("after", "after_scale"):
        total = np.zeros(w_o.shape[1])
        for i in selection.on:  # ascending accumulation order, kept deterministic
            block = w_o[i * dk : (i + 1) * dk, :]
            total = total + nm.matmul(state.head_cls[i : i + 1], block)[0]
        if strategy == "after_scale":
            total = total * scale
        return total + np.asarray(b_o, dtype=np.float64)

    # identity: dropped heads use the CLS value row (attention = identity)
    rows = np.where(on[:, None], state.head_cls, state.head_values[:, 0, :])
    return project_head_rows(rows, w_o, b_o)


def feature_with_selection(
    state: AttentionState,
    selection: HeadSelection,
    weights: ModelWeights,
    strategy: str = "before_scale",
) -> np.ndarray:
    """Image feature recomputed from the cached state under a head selection."""
    last = weights.layers[-1]
    mha_cls = recombine_mha(state, selection, last.w_o, last.b_o, strategy)
    return cls_tail_feature(mha_cls, state.cls_input, weights)


def attention_mask_variant(state: AttentionState, mask: TokenMask) -> AttentionState:
    """Comparative ablation: zero CLS-row attention to patches outside the
    mask, renormalize the CLS row, and refresh the cached CLS contributions.
    CLS and register columns are kept; other rows are untouched."""
    if mask.n != state.n_patches:
        raise DimensionMismatch(
            f"token mask length {mask.n} != patch count {state.n_patches}"
        )
    idx = mask.indices()
    if idx.size == 0:
        raise EmptyMaskError("prompt selects no patch tokens")
    out = state.copy()
    offset = 1 + state.n_registers
    drop = np.ones(state.n_patches, dtype=bool)
    drop[idx] = False
    out.attn[:, 0, offset + np.flatnonzero(drop)] = 0.0
    row_sums = out.attn[:, 0, :].sum(axis=1, keepdims=True)
    out.attn[:, 0, :] /= row_sums
    for i in range(state.n_heads):
        out.head_cls[i] = nm.matmul(out.attn[i, 0:1, :], out.head_values[i])[0]
    return out
