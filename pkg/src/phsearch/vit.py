"""Forward pass with per-head attention capture at the last layer.

Token layout is ``[CLS][registers][patches]``: row 0 is CLS, rows 1..R the
register tokens, rows R+1..R+N the patch tokens in row-major grid order.
Blocks are pre-norm residual: ``y = x + MHA(LN1(x))``, ``z = y + FFN(LN2(y))``,
and the image feature is the final-layer-normalized CLS row.

The feature returned by :func:`forward` is computed through
:func:`cls_tail_feature`, the same single-row tail used when recombining
cached head contributions.  Head selection with every head retained (scale 1)
is therefore bit-identical to the plain feature, on any kernel backend.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from . import numerics as nm
from .errors import BadGeometry, DimensionMismatch
from .model import LayerWeights, ModelConfig, ModelWeights


@dataclass
class AttentionState:
    """Last-layer attention internals for one image.

    attn[i] is the full row-stochastic attention matrix of head i;
    head_values[i] the per-head value rows; head_cls[i] the CLS row of
    attn[i] @ head_values[i]; cls_input the CLS row of the layer's input.
    """

    attn: np.ndarray  # (h, T, T)
    head_values: np.ndarray  # (h, T, d_k)
    head_cls: np.ndarray  # (h, d_k)
    cls_input: np.ndarray  # (d,)
    n_registers: int
    n_patches: int

    @property
    def n_heads(self) -> int:
        return self.attn.shape[0]

    @property
    def n_tokens(self) -> int:
        return self.attn.shape[1]

    def patch_columns(self) -> slice:
        return slice(1 + self.n_registers, 1 + self.n_registers + self.n_patches)

    def cls_patch_attention(self) -> np.ndarray:
        """(h, N) CLS-row attention restricted to patch columns."""
        return self.attn[:, 0, self.patch_columns()]

    def copy(self) -> "AttentionState":
        return replace(
            self,
            attn=self.attn.copy(),
            head_values=self.head_values.copy(),
            head_cls=self.head_cls.copy(),
            cls_input=self.cls_input.copy(),
        )


def patchify(img: np.ndarray, patch_size: int) -> np.ndarray:
    """(H, W, C) image -> (N, P*P*C) flattened patches in row-major grid order."""
    img = np.asarray(img, dtype=np.float64)
    if img.ndim != 3:
        raise BadGeometry(f"image must be (H, W, C), got shape {img.shape}")
    h, w, _ = img.shape
    p = patch_size
    if h % p or w % p:
        raise BadGeometry(f"image {h}x{w} not divisible by patch size {p}")
    gh, gw = h // p, w // p
    patches = img.reshape(gh, p, gw, p, -1).transpose(0, 2, 1, 3, 4)
    return patches.reshape(gh * gw, -1)


def embed(patches: np.ndarray, weights: ModelWeights) -> np.ndarray:
    """Project patches, prepend CLS and registers, add positional rows."""
    cfg = weights.config
    patches = np.asarray(patches, dtype=np.float64)
    if patches.ndim != 2 or patches.shape[1] != cfg.patch_len:
        raise DimensionMismatch(
            f"patch vectors must be (N, {cfg.patch_len}), got {patches.shape}"
        )
    projected = nm.affine(patches, weights.patch_projection, weights.patch_bias)
    tokens = np.concatenate(
        [weights.cls_token[None, :], weights.register_tokens, projected], axis=0
    )
    if tokens.shape != weights.positional.shape:
        raise DimensionMismatch(
            f"token count {tokens.shape[0]} does not match positional table "
            f"{weights.positional.shape[0]}"
        )
    return tokens + weights.positional


def attention_layer_forward(
    tokens: np.ndarray,
    layer: LayerWeights,
    config: ModelConfig,
    capture: bool = False,
) -> tuple[np.ndarray, AttentionState | None]:
    """One pre-norm block; optionally captures per-head attention internals."""
    t, d = tokens.shape
    if d != config.embed_dim:
        raise DimensionMismatch(f"token dim {d} != embed dim {config.embed_dim}")
    h, dk = config.num_heads, config.head_dim
    eps = config.eps

    ln1 = nm.layer_norm_rows(tokens, layer.ln1_gamma, layer.ln1_beta, eps)
    q = nm.affine(ln1, layer.w_q, layer.b_q)
    k = nm.affine(ln1, layer.w_k, layer.b_k)
    v = nm.affine(ln1, layer.w_v, layer.b_v)

    scale = 1.0 / math.sqrt(dk)
    attn = np.empty((h, t, t))
    heads = np.empty((h, t, dk))
    for i in range(h):
        sl = slice(i * dk, (i + 1) * dk)
        logits = nm.matmul(q[:, sl], k[:, sl].T) * scale
        attn[i] = nm.softmax_rows(logits)
        heads[i] = nm.matmul(attn[i], v[:, sl])

    concat = heads.transpose(1, 0, 2).reshape(t, d)
    mha = nm.affine(concat, layer.w_o, layer.b_o)
    y = tokens + mha

    ln2 = nm.layer_norm_rows(y, layer.ln2_gamma, layer.ln2_beta, eps)
    hidden = nm.gelu(nm.affine(ln2, layer.ffn_w1, layer.ffn_b1))
    z = y + nm.affine(hidden, layer.ffn_w2, layer.ffn_b2)

    state = None
    if capture:
        state = AttentionState(
            attn=attn,
            head_values=np.ascontiguousarray(v.reshape(t, h, dk).transpose(1, 0, 2)),
            head_cls=heads[:, 0, :].copy(),
            cls_input=tokens[0].copy(),
            n_registers=config.num_registers,
            n_patches=config.n_patches,
        )
    return z, state


def extract_feature(tokens: np.ndarray, weights: ModelWeights) -> np.ndarray:
    """Final layer norm of the CLS row."""
    return nm.layer_norm(
        tokens[0], weights.final_gamma, weights.final_beta, weights.config.eps
    )


def project_head_rows(head_rows: np.ndarray, w_o: np.ndarray, b_o: np.ndarray) -> np.ndarray:
    """Concatenate per-head CLS contributions (h, d_k) and apply the output projection."""
    flat = np.ascontiguousarray(head_rows, dtype=np.float64).reshape(1, -1)
    return nm.affine(flat, w_o, b_o)[0]


def cls_tail_feature(
    mha_cls: np.ndarray, cls_input: np.ndarray, weights: ModelWeights
) -> np.ndarray:
    """Finish the last block for the CLS row only: residual, FFN, final norm.

    LN and FFN act per token, so this equals the CLS row of the full-matrix
    block output; only this row is ever needed once the attention internals
    are cached.
    """
    last = weights.layers[-1]
    eps = weights.config.eps
    y0 = cls_input + mha_cls
    ln2 = nm.layer_norm(y0, last.ln2_gamma, last.ln2_beta, eps)
    hidden = nm.gelu(nm.affine(ln2[None, :], last.ffn_w1, last.ffn_b1))
    z0 = y0 + nm.affine(hidden, last.ffn_w2, last.ffn_b2)[0]
    return nm.layer_norm(z0, weights.final_gamma, weights.final_beta, eps)


def vanilla_mha_cls(state: AttentionState, weights: ModelWeights) -> np.ndarray:
    """CLS row of the unmodified last-layer MHA, recomputed from the cache."""
    last = weights.layers[-1]
    return project_head_rows(state.head_cls, last.w_o, last.b_o)


def forward(img: np.ndarray, weights: ModelWeights) -> tuple[np.ndarray, AttentionState]:
    """Full pipeline: patchify, embed, all blocks, capture at the last block.

    Returns the image feature and the captured last-layer state.  The feature
    is produced by the CLS tail over the captured state, i.e. exactly the
    recombination path with every head retained.
    """
    cfg = weights.config
    img = np.asarray(img, dtype=np.float64)
    expected = (cfg.image_h, cfg.image_w, cfg.channels)
    if img.shape != expected:
        raise DimensionMismatch(f"image shape {img.shape} != model input {expected}")
    tokens = embed(patchify(img, cfg.patch_size), weights)
    for layer in weights.layers[:-1]:
        tokens, _ = attention_layer_forward(tokens, layer, cfg, capture=False)
    _, state = attention_layer_forward(tokens, weights.layers[-1], cfg, capture=True)
    feature = cls_tail_feature(vanilla_mha_cls(state, weights), state.cls_input, weights)
    return feature, state
