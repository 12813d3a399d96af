"""Experiment runner: sweeps over modes, head counts, prompt types and noise.

Every (query image, annotated object) pair is one simulated query: the
object's box (or segmentation, or a point inside it) acts as the user's
prompt, and a retrieved image counts as correct when it contains the
object's category.  Reports are written per cell as canonical JSON plus CSV,
with a JSONL log of the raw per-query outcomes.
"""

from __future__ import annotations

import hashlib
import json
import logging
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .errors import BadParam, EmptyMaskError
from .image import write_pgm
from .manifest import DatasetManifest, ObjectAnnotation, load_manifest
from .metrics import EvalReport, ObjectResult, aggregate, score_retrieval
from .model import ModelWeights, load_weights
from .prompts import (
    Box,
    NoiseParams,
    Point,
    Prompt,
    PromptMask,
    Segment,
    rasterize,
    tokenize_mask,
)
from .retrieval import (
    FALLBACK_POLICIES,
    MODES,
    FeatureStore,
    QuerySpec,
    build_index,
    query,
)
from .selection import HeadSelection
from .vit import AttentionState

log = logging.getLogger(__name__)

PROMPT_TYPES = ("box", "segment", "point")
POINT_AGGREGATES = ("mean", "best")


@dataclass
class ExperimentConfig:
    query_manifest: str
    db_manifest: str
    weights: str | None = None
    toy_seed: int | None = None
    modes: list[str] = field(default_factory=lambda: ["cbir"])
    prompt_types: list[str] = field(default_factory=lambda: ["box"])
    h_on: list[int] = field(default_factory=list)
    k: int = 10
    roi: str = "sum"
    strategy: str = "before_scale"
    noise: NoiseParams | None = None
    point_window: int = 3
    point_sweep: bool = False
    point_aggregate: str = "mean"
    fallback: str = "cbir"
    overlap_threshold: float | None = None
    cache: bool = True
    out_dir: str | None = None

    def validate(self) -> None:
        if not self.modes:
            raise BadParam("at least one mode is required")
        for m in self.modes:
            if m not in MODES:
                raise BadParam(f"unknown mode {m!r}")
        for p in self.prompt_types:
            if p not in PROMPT_TYPES:
                raise BadParam(f"unknown prompt type {p!r}")
        if self.k < 1:
            raise BadParam("k must be >= 1")
        if self.fallback not in FALLBACK_POLICIES:
            raise BadParam(f"unknown fallback policy {self.fallback!r}")
        if self.point_aggregate not in POINT_AGGREGATES:
            raise BadParam(f"unknown point aggregate {self.point_aggregate!r}")
        needs_h = any(m in ("phs-qo", "phs-qd") for m in self.modes)
        if needs_h and not self.h_on:
            raise BadParam("phs modes require a non-empty h_on list")


def config_from_json(obj: dict) -> ExperimentConfig:
    noise = obj.get("noise")
    cfg = ExperimentConfig(
        query_manifest=obj["query_manifest"],
        db_manifest=obj["db_manifest"],
        weights=obj.get("weights"),
        toy_seed=obj.get("toy_seed"),
        modes=list(obj.get("modes", ["cbir"])),
        prompt_types=list(obj.get("prompt_types", ["box"])),
        h_on=[int(v) for v in obj.get("h_on", [])],
        k=int(obj.get("k", 10)),
        roi=obj.get("roi", "sum"),
        strategy=obj.get("strategy", "before_scale"),
        noise=NoiseParams(int(noise["m"]), int(noise.get("seed", 0))) if noise else None,
        point_window=int(obj.get("point_window", 3)),
        point_sweep=bool(obj.get("point_sweep", False)),
        point_aggregate=obj.get("point_aggregate", "mean"),
        fallback=obj.get("fallback", "cbir"),
        overlap_threshold=obj.get("overlap_threshold"),
        cache=bool(obj.get("cache", True)),
        out_dir=obj.get("out_dir"),
    )
    cfg.validate()
    return cfg


def _derived_noise(base: NoiseParams, query_id: str, object_index: int) -> NoiseParams:
    """Per-query noise stream: stable hash partitions the seed space."""
    digest = hashlib.sha256(
        f"{base.seed}:{query_id}:{object_index}".encode()
    ).digest()
    return NoiseParams(m=base.m, seed=int.from_bytes(digest[:8], "little"))


def make_prompt(
    obj: ObjectAnnotation, prompt_type: str, point_window: int = 3
) -> Prompt:
    if prompt_type == "box":
        return obj.box
    if prompt_type == "segment":
        if obj.segmentation is not None:
            return obj.segmentation
        raise BadParam("object has no segmentation for segment prompt")
    if prompt_type == "point":
        cx = (obj.box.x0 + obj.box.x1) // 2
        cy = (obj.box.y0 + obj.box.y1) // 2
        return Point(cx, cy, point_window)
    raise BadParam(f"unknown prompt type {prompt_type!r}")


def point_sweep_positions(
    obj: ObjectAnnotation, patch_size: int, h: int, w: int, window: int
) -> list[Point]:
    """One point prompt per patch-window position whose center patch lies
    inside the object's mask (its segmentation when present, else its box)."""
    region = obj.segmentation if obj.segmentation is not None else obj.box
    mask = rasterize(region, h, w, patch_size)
    token = tokenize_mask(mask, patch_size)
    gw = w // patch_size
    points = []
    for t in token.indices():
        r, c = divmod(int(t), gw)
        points.append(
            Point(c * patch_size + patch_size // 2, r * patch_size + patch_size // 2, window)
        )
    return points


def _cell_name(mode: str, h_on: int | None, prompt_type: str, noisy: bool) -> str:
    parts = [mode]
    if mode in ("phs-qo", "phs-qd") and h_on is not None:
        parts.append(f"h{h_on}")
    if mode != "cbir":
        parts.append(prompt_type)
    if noisy:
        parts.append("noisy")
    return "_".join(parts)


def _cells(config: ExperimentConfig):
    noisy = config.noise is not None and config.noise.m > 0
    seen = set()
    for mode in config.modes:
        h_values = config.h_on if mode in ("phs-qo", "phs-qd") else [None]
        p_types = config.prompt_types if mode != "cbir" else ["box"]
        for h_on in h_values:
            for ptype in p_types:
                name = _cell_name(mode, h_on, ptype, noisy)
                if name in seen:
                    continue
                seen.add(name)
                yield name, mode, h_on, ptype


def _run_single(
    spec: QuerySpec, store, weights, manifest_db, category, fallback
):
    result = query(spec, store, weights, fallback=fallback)
    outcome = score_retrieval(result, category, manifest_db)
    return result, outcome


def run_cell(
    mode: str,
    h_on: int | None,
    prompt_type: str,
    config: ExperimentConfig,
    store: FeatureStore,
    weights: ModelWeights,
    queries: DatasetManifest,
    db: DatasetManifest,
    log_rows: list | None = None,
    failures: list | None = None,
) -> EvalReport:
    k = min(config.k, len(store))
    results: list[ObjectResult] = []

    def record_failure(object_index, exc):
        log.warning(
            "query %s object %s failed in cell %s: %s",
            entry.image_id, object_index, mode, exc,
        )
        if failures is None:
            raise exc
        failures.append(
            {
                "query_id": entry.image_id,
                "object_index": object_index,
                "error": str(exc),
            }
        )

    for entry in queries.images:
        try:
            img = queries.load_image(entry.image_id)
        except Exception as exc:
            record_failure(None, exc)
            continue
        for oi, obj in enumerate(entry.objects):
            try:
                _run_pair(
                    mode, h_on, prompt_type, config, store, weights, queries, db,
                    entry, img, oi, obj, k, results, log_rows,
                )
            except EmptyMaskError:
                raise  # strict fallback policy aborts the cell
            except Exception as exc:
                record_failure(oi, exc)
    return aggregate(results, queries, k)


def _run_pair(
    mode, h_on, prompt_type, config, store, weights, queries, db,
    entry, img, oi, obj, k, results, log_rows,
):
    cfg = weights.config
    noise = (
        _derived_noise(config.noise, entry.image_id, oi)
        if config.noise is not None and mode != "cbir"
        else None
    )
    base_spec = QuerySpec(
        image=img,
        image_id=entry.image_id,
        mode=mode,
        h_on=h_on,
        k=k,
        roi=config.roi,
        strategy=config.strategy,
        noise=noise,
        overlap_threshold=config.overlap_threshold,
        exclude=frozenset({entry.image_id}),
    )
    if mode != "cbir" and prompt_type == "point" and config.point_sweep:
        points = point_sweep_positions(
            obj, cfg.patch_size, cfg.image_h, cfg.image_w, config.point_window
        )
        per_pos = []
        for pt in points:
            _, outcome = _run_single(
                replace(base_spec, prompt=pt),
                store, weights, db, obj.category, config.fallback,
            )
            per_pos.append(ObjectResult.from_outcome(outcome, k, entry.image_id, oi))
        if not per_pos:
            return
        if config.point_aggregate == "best":
            p = max(r.p_at_k for r in per_pos)
            ap = max(r.ap_at_k for r in per_pos)
        else:
            p = float(np.mean([r.p_at_k for r in per_pos]))
            ap = float(np.mean([r.ap_at_k for r in per_pos]))
        results.append(ObjectResult(entry.image_id, oi, obj.category, p, ap))
        if log_rows is not None:
            log_rows.append(
                {"query_id": entry.image_id, "object_index": oi,
                 "category": obj.category, "positions": len(per_pos),
                 "p_at_k": p, "ap_at_k": ap}
            )
        return

    prompt = (
        make_prompt(obj, prompt_type, config.point_window)
        if mode != "cbir"
        else None
    )
    result, outcome = _run_single(
        replace(base_spec, prompt=prompt),
        store, weights, db, obj.category, config.fallback,
    )
    res = ObjectResult.from_outcome(outcome, k, entry.image_id, oi)
    results.append(res)
    if log_rows is not None:
        log_rows.append(
            {
                "query_id": entry.image_id,
                "object_index": oi,
                "category": obj.category,
                "p_at_k": res.p_at_k,
                "ap_at_k": res.ap_at_k,
                "fallback": result.fallback,
                "selected_heads": list(result.selection.on)
                if result.selection
                else None,
                "ranked": [item.image_id for item in result.ranked],
            }
        )


def load_model(config: ExperimentConfig) -> ModelWeights:
    from .model import DEFAULT_TOY, gen_toy_model

    if config.weights is not None:
        return load_weights(config.weights)
    if config.toy_seed is not None:
        return gen_toy_model(config.toy_seed, DEFAULT_TOY)
    raise BadParam("config needs either a weights path or a toy seed")


def run_experiment(
    config: ExperimentConfig,
    weights: ModelWeights | None = None,
    store: FeatureStore | None = None,
) -> dict[str, EvalReport]:
    """Run every cell; returns reports keyed by cell name and writes
    report.json / report.csv / log.jsonl per cell when out_dir is set."""
    config.validate()
    if weights is None:
        weights = load_model(config)
    queries = load_manifest(config.query_manifest)
    db = load_manifest(config.db_manifest)
    needs_cache = any(m == "phs-qd" for m in config.modes)
    if store is None:
        store = build_index(db, weights, cache=config.cache or needs_cache)

    out_root = Path(config.out_dir) if config.out_dir else None
    reports: dict[str, EvalReport] = {}
    partial: dict[str, list] = {}
    for name, mode, h_on, ptype in _cells(config):
        log_rows: list | None = [] if out_root else None
        failures: list = []
        report = run_cell(
            mode, h_on, ptype, config, store, weights, queries, db, log_rows, failures
        )
        reports[name] = report
        if failures:
            partial[name] = failures
        if out_root:
            cell_dir = out_root / name
            cell_dir.mkdir(parents=True, exist_ok=True)
            (cell_dir / "report.json").write_text(report.to_json())
            (cell_dir / "report.csv").write_text(report.to_csv())
            with open(cell_dir / "log.jsonl", "w") as fh:
                for row in log_rows:
                    fh.write(json.dumps(row, sort_keys=True) + "\n")
            if failures:
                with open(cell_dir / "failures.jsonl", "w") as fh:
                    for row in failures:
                        fh.write(json.dumps(row, sort_keys=True) + "\n")
    if out_root:
        summary = {}
        for name, r in sorted(reports.items()):
            entry = {"mp_at_k": r.mp_at_k, "map_at_k": r.map_at_k, "k": r.k}
            if name in partial:  # cell ran with per-query failures skipped
                entry["partial"] = len(partial[name])
            summary[name] = entry
        (out_root / "summary.json").write_text(
            json.dumps(summary, sort_keys=True, indent=2) + "\n"
        )
    return reports


def emit_attention_heatmaps(
    state: AttentionState,
    out_dir,
    grid_shape: tuple[int, int],
    selection: HeadSelection | None = None,
) -> list[Path]:
    """Per-head CLS-attention grids as 8-bit PGMs, min-max normalized per
    head; flat maps render mid-gray.  Adds a combined map over the selected
    heads when a selection is given."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    gh, gw = grid_shape
    if gh * gw != state.n_patches:
        raise BadParam(f"grid {gh}x{gw} does not cover {state.n_patches} patches")
    grids = state.cls_patch_attention().reshape(state.n_heads, gh, gw)

    def normalize(grid: np.ndarray) -> np.ndarray:
        lo, hi = grid.min(), grid.max()
        if hi == lo:
            return np.full(grid.shape, 128, dtype=np.uint8)
        return np.rint((grid - lo) / (hi - lo) * 255.0).astype(np.uint8)

    written = []
    for i in range(state.n_heads):
        path = out_dir / f"head_{i:02d}.pgm"
        write_pgm(path, normalize(grids[i]))
        written.append(path)
    if selection is not None:
        combined = grids[list(selection.on)].mean(axis=0)
        path = out_dir / "selected.pgm"
        write_pgm(path, normalize(combined))
        written.append(path)
    return written
