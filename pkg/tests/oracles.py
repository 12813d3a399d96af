"""Independent reference implementations used as test oracles.

Everything here is written against plain numpy / math-library primitives and
deliberately avoids the package's kernel layer, so a bug there cannot hide
in a test that consults these.
"""

from __future__ import annotations

import math

import numpy as np


def naive_matmul(a, b):
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    n, m = a.shape
    m2, p = b.shape
    assert m == m2
    out = np.zeros((n, p))
    for i in range(n):
        for j in range(p):
            acc = 0.0
            for k in range(m):
                acc += a[i, k] * b[k, j]
            out[i, j] = acc
    return out


def erf_series(x: float, terms: int = 64) -> float:
    """Taylor series erf(x) = 2/sqrt(pi) * sum (-1)^n x^(2n+1) / (n! (2n+1))."""
    total = 0.0
    for n in range(terms):
        total += (-1.0) ** n * x ** (2 * n + 1) / (math.factorial(n) * (2 * n + 1))
    return 2.0 / math.sqrt(math.pi) * total


def _softmax_rows(m):
    shifted = m - m.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=1, keepdims=True)


def _ln_rows(m, gamma, beta, eps):
    mean = m.mean(axis=1, keepdims=True)
    var = ((m - mean) ** 2).mean(axis=1, keepdims=True)
    return (m - mean) / np.sqrt(var + eps) * gamma + beta


def _gelu(x):
    flat = np.array([0.5 * v * (1.0 + math.erf(v / math.sqrt(2.0))) for v in x.ravel()])
    return flat.reshape(x.shape)


def naive_forward(img, weights, selection=None, h_on=None, strategy="before_scale"):
    """Full-matrix forward pass, optionally with last-layer head selection.

    ``selection`` is a set of retained 0-based head indices.  The last
    block's heads are modified on the full (T, d_k) matrices, which makes
    this an independent route against the cached single-row recomputation.
    """
    cfg = weights.config
    p = cfg.patch_size
    h, w, _ = img.shape
    gh, gw = h // p, w // p
    patches = np.zeros((gh * gw, cfg.patch_len))
    for r in range(gh):
        for c in range(gw):
            patches[r * gw + c] = img[r * p : (r + 1) * p, c * p : (c + 1) * p, :].reshape(-1)
    tokens = np.vstack(
        [
            weights.cls_token,
            weights.register_tokens,
            patches @ weights.patch_projection + weights.patch_bias,
        ]
    ) + weights.positional

    n_heads, dk = cfg.num_heads, cfg.head_dim
    scale = None if selection is None else n_heads / (h_on if h_on else len(selection))
    for li, layer in enumerate(weights.layers):
        selecting = selection is not None and li == len(weights.layers) - 1
        t = tokens.shape[0]
        ln1 = _ln_rows(tokens, layer.ln1_gamma, layer.ln1_beta, cfg.eps)
        q = ln1 @ layer.w_q + layer.b_q
        k = ln1 @ layer.w_k + layer.b_k
        v = ln1 @ layer.w_v + layer.b_v
        heads = []
        for i in range(n_heads):
            sl = slice(i * dk, (i + 1) * dk)
            a = _softmax_rows(q[:, sl] @ k[:, sl].T / math.sqrt(dk))
            if selecting and strategy == "identity" and i not in selection:
                a = np.eye(t)
            head = a @ v[:, sl]
            if selecting and strategy in ("before_scale", "before"):
                if i not in selection:
                    head = np.zeros_like(head)
                elif strategy == "before_scale":
                    head = head * scale
            heads.append(head)
        if selecting and strategy in ("after", "after_scale"):
            mha = np.zeros((t, cfg.embed_dim))
            for i in sorted(selection):
                mha += heads[i] @ layer.w_o[i * dk : (i + 1) * dk, :]
            if strategy == "after_scale":
                mha *= scale
            mha += layer.b_o
        else:
            mha = np.concatenate(heads, axis=1) @ layer.w_o + layer.b_o
        y = tokens + mha
        ln2 = _ln_rows(y, layer.ln2_gamma, layer.ln2_beta, cfg.eps)
        tokens = y + _gelu(ln2 @ layer.ffn_w1 + layer.ffn_b1) @ layer.ffn_w2 + layer.ffn_b2

    final = _ln_rows(tokens, weights.final_gamma, weights.final_beta, cfg.eps)
    return final[0]


def naive_cosine_rank(query, features, ids, k):
    """Ranked (id, score) with ties broken by insertion order."""
    qn = math.sqrt(sum(x * x for x in query))
    scored = []
    for pos, (fid, feat) in enumerate(zip(ids, features)):
        fn = math.sqrt(sum(x * x for x in feat))
        score = sum(a * b for a, b in zip(feat, query)) / (fn * qn)
        scored.append((-score, pos, fid))
    scored.sort()
    return [(fid, -negscore) for negscore, _, fid in scored[:k]]


def naive_select(scores, h_on):
    """Top-h_on head indices, ties to the lower index, ascending output."""
    order = sorted(range(len(scores)), key=lambda i: (-scores[i], i))
    return tuple(sorted(order[:h_on]))


def naive_eval(rows, query_objects, k):
    """Brute-force category-balanced evaluation.

    rows: list of (query_id, object_index, category, bits) per simulated
    query; query_objects: dict query_id -> list of categories of its
    annotated objects.  Returns (mp, map, per_category dict).
    """
    def p_at(bits, kk):
        return sum(bits[:kk]) / kk

    def ap_at(bits, kk):
        correct = [i + 1 for i in range(kk) if bits[i]]
        if not correct:
            return 0.0
        return sum(p_at(bits, r) for r in correct) / len(correct)

    categories = sorted({cat for _, _, cat, _ in rows})
    per_category = {}
    for cat in categories:
        qids = sorted({qid for qid, _, c, _ in rows if c == cat})
        p_total = 0.0
        ap_total = 0.0
        for qid in qids:
            n_c = sum(1 for c in query_objects[qid] if c == cat)
            mine = [r for r in rows if r[0] == qid and r[2] == cat]
            p_total += sum(p_at(r[3], k) for r in mine) / n_c
            ap_total += sum(ap_at(r[3], k) for r in mine) / n_c
        per_category[cat] = (p_total / len(qids), ap_total / len(qids))
    mp = sum(v[0] for v in per_category.values()) / len(per_category)
    map_ = sum(v[1] for v in per_category.values()) / len(per_category)
    return mp, map_, per_category
