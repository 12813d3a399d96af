"""Shared query-request handling for the CLI and the HTTP service.

Both surfaces accept the same JSON request and must produce identical
response content (the ``timing_ms`` block excepted), so the logic lives here
once.
"""

from __future__ import annotations

import time

import numpy as np

from .errors import BadParam
from .manifest import DatasetManifest
from .model import ModelWeights
from .prompts import NoiseParams, prompt_from_json
from .retrieval import MODES, FeatureStore, QuerySpec, RetrievalResult, query
from .vit import AttentionState, forward


def state_grids(state: AttentionState, grid_shape: tuple[int, int]) -> dict:
    """Raw per-head CLS-attention patch grids plus off-patch column masses."""
    gh, gw = grid_shape
    grids = state.cls_patch_attention().reshape(state.n_heads, gh, gw)
    cls_mass = state.attn[:, 0, 0]
    r = state.n_registers
    register_mass = state.attn[:, 0, 1 : 1 + r].sum(axis=1)
    return {
        "heads": [g.tolist() for g in grids],
        "cls_mass": cls_mass.tolist(),
        "register_mass": register_mass.tolist(),
        "grid_h": gh,
        "grid_w": gw,
    }


def result_payload(result: RetrievalResult) -> dict:
    payload = {
        "mode": result.mode,
        "fallback": result.fallback,
        "ranked": [
            {"image_id": item.image_id, "score": item.score, "rank": item.rank}
            for item in result.ranked
        ],
        "selected_heads": list(result.selection.on) if result.selection else None,
        "roi_scores": result.selection.scores.tolist() if result.selection else None,
    }
    return payload


def run_query_request(
    request: dict,
    store: FeatureStore,
    weights: ModelWeights,
    manifest: DatasetManifest,
    fallback: str = "cbir",
    image: np.ndarray | None = None,
) -> dict:
    """Execute a JSON query request; raises package errors for the caller to map."""
    if not isinstance(request, dict):
        raise BadParam("request must be a JSON object")
    mode = request.get("mode", "cbir")
    if mode not in MODES:
        raise BadParam(f"unknown mode {mode!r} (have {MODES})")
    image_id = request.get("image_id")
    if image is None:
        if image_id is None:
            raise BadParam("request needs an image_id")
        image = manifest.load_image(image_id)

    prompt_json = request.get("prompt")
    prompt = prompt_from_json(prompt_json) if prompt_json is not None else None
    if mode == "cbir":
        prompt = None  # cbir ignores any supplied prompt

    noise_json = request.get("noise")
    noise = (
        NoiseParams(int(noise_json["m"]), int(noise_json.get("seed", 0)))
        if noise_json
        else None
    )

    h = weights.config.num_heads
    h_on = request.get("h_on")
    if h_on is not None:
        h_on = int(h_on)
        if not 1 <= h_on <= h:
            raise BadParam(f"h_on must be in [1, {h}], got {h_on}")

    spec = QuerySpec(
        image=image,
        image_id=image_id,
        prompt=prompt,
        mode=mode,
        h_on=h_on,
        k=int(request.get("k", 10)),
        roi=request.get("roi", "sum"),
        strategy=request.get("strategy", "before_scale"),
        noise=noise,
    )

    started = time.perf_counter()
    result = query(spec, store, weights, fallback=fallback)
    elapsed_ms = (time.perf_counter() - started) * 1000.0

    payload = result_payload(result)
    payload["image_id"] = image_id
    payload["k"] = spec.k

    if request.get("include_heatmaps"):
        cfg = weights.config
        _, state = forward(image, weights)
        payload["heatmaps"] = state_grids(
            state,
            (cfg.image_h // cfg.patch_size, cfg.image_w // cfg.patch_size),
        )
    payload["timing_ms"] = {"total": elapsed_ms}
    return payload
