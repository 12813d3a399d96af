"""Command-line interface.

Subcommands: gen-model, gen-corpus, build-index, query, eval, sweep,
heatmap, serve.  Successful runs exit 0; failures print a machine-readable
JSON object ``{"error": code, "message": ...}`` on stderr and exit 1 (usage
errors exit 2 with the argparse schema).
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from . import __version__
from .errors import BadParam, PhsError
from .harness import (
    ExperimentConfig,
    config_from_json,
    emit_attention_heatmaps,
    run_experiment,
)
from .manifest import load_manifest
from .model import DEFAULT_TOY, ModelConfig, gen_toy_model, load_weights, save_weights
from .model import fingerprint as model_fingerprint
from .retrieval import build_index, load_store, save_store
from .prompts import prompt_from_json, rasterize, tokenize_mask
from .selection import roi_attention, select_heads
from .vit import forward


def _parse_size(text: str) -> tuple[int, int]:
    if "x" in text:
        h, w = text.split("x", 1)
        return int(h), int(w)
    side = int(text)
    return side, side


def _parse_h_on_range(text: str, max_h: int) -> list[int]:
    if ".." in text:
        lo, hi = text.split("..", 1)
        lo = int(lo)
        hi = max_h if hi in ("h", "") else int(hi)
        return list(range(lo, hi + 1))
    return [int(v) for v in text.split(",") if v]


def cmd_gen_model(args) -> int:
    if args.kind == "quadrant":
        from .corpus import build_quadrant_model

        weights = build_quadrant_model()  # deterministic construction, seed unused
    else:
        h, w = _parse_size(args.image_size)
        config = ModelConfig(
            patch_size=args.patch_size,
            embed_dim=args.embed_dim,
            num_heads=args.heads,
            head_dim=args.embed_dim // args.heads,
            num_layers=args.layers,
            num_registers=args.registers,
            ffn_hidden=args.ffn_hidden,
            image_h=h,
            image_w=w,
            channels=args.channels,
        )
        weights = gen_toy_model(args.seed, config)
    save_weights(args.out, weights)
    print(json.dumps({"out": str(args.out), "fingerprint": model_fingerprint(weights)}))
    return 0


def cmd_gen_corpus(args) -> int:
    from .corpus import SyntheticCorpusSpec, gen_synthetic_corpus

    spec = SyntheticCorpusSpec(
        seed=args.seed,
        image_size=args.image_size,
        pattern_count=args.patterns,
        db_per_pair=args.db_per_pair,
        query_per_pair=args.query_per_pair,
    )
    queries, db = gen_synthetic_corpus(spec, args.out)
    print(
        json.dumps(
            {
                "out": str(args.out),
                "db_images": len(db.images),
                "query_images": len(queries.images),
            }
        )
    )
    return 0


def cmd_build_index(args) -> int:
    weights = load_weights(args.weights)
    manifest = load_manifest(args.manifest)
    store = build_index(manifest, weights, cache=not args.no_cache)
    save_store(args.out, store)
    print(json.dumps({"out": str(args.out), "records": len(store)}))
    return 0


def cmd_query(args) -> int:
    from .api import run_query_request

    weights = load_weights(args.weights)
    store = load_store(args.store, expected_fingerprint=model_fingerprint(weights))
    manifest = load_manifest(args.manifest) if args.manifest else None
    image = None
    if args.image:
        from .image import read_image

        image = read_image(args.image)
    elif manifest is None:
        raise BadParam("query needs either --image or --manifest with --image-id")
    request = {
        "image_id": args.image_id,
        "mode": args.mode,
        "k": args.k,
        "h_on": args.h_on,
        "roi": args.roi,
        "strategy": args.strategy,
        "prompt": json.loads(args.prompt) if args.prompt else None,
        "include_heatmaps": args.include_heatmaps,
    }
    if args.noise_m is not None:
        request["noise"] = {"m": args.noise_m, "seed": args.noise_seed}
    payload = run_query_request(
        request, store, weights, manifest, fallback=args.fallback, image=image
    )
    json.dump(payload, sys.stdout, sort_keys=True)
    print()
    return 0


def _experiment_config(args) -> ExperimentConfig:
    if args.config:
        config_path = Path(args.config)
        config = config_from_json(json.loads(config_path.read_text()))
        # relative paths in a config file resolve against its location
        base = config_path.parent
        for attr in ("query_manifest", "db_manifest", "weights"):
            value = getattr(config, attr)
            if value and not Path(value).is_absolute():
                setattr(config, attr, str(base / value))
    else:
        config = ExperimentConfig(query_manifest="", db_manifest="")
    if args.query_manifest:
        config.query_manifest = args.query_manifest
    if args.db_manifest:
        config.db_manifest = args.db_manifest
    if args.weights:
        config.weights = args.weights
    if args.modes:
        config.modes = args.modes.split(",")
    if args.prompt_type:
        config.prompt_types = args.prompt_type.split(",")
    if args.k is not None:
        config.k = args.k
    if args.out:
        config.out_dir = args.out
    return config


def cmd_eval(args) -> int:
    config = _experiment_config(args)
    if args.h_on:
        config.h_on = [int(v) for v in args.h_on.split(",")]
    config.validate()
    reports = run_experiment(config)
    summary = {
        name: {"mp_at_k": r.mp_at_k, "map_at_k": r.map_at_k, "k": r.k}
        for name, r in sorted(reports.items())
    }
    json.dump(summary, sys.stdout, sort_keys=True, indent=2)
    print()
    return 0


def cmd_sweep(args) -> int:
    config = _experiment_config(args)
    weights = None
    if config.weights:
        weights = load_weights(config.weights)
    elif config.toy_seed is not None:
        weights = gen_toy_model(config.toy_seed, DEFAULT_TOY)
    if weights is None:
        raise BadParam("sweep needs a model (config weights/toy_seed or --weights)")
    config.h_on = _parse_h_on_range(args.h_on, weights.config.num_heads)
    config.validate()
    reports = run_experiment(config, weights=weights)
    summary = {
        name: {"mp_at_k": r.mp_at_k, "map_at_k": r.map_at_k}
        for name, r in sorted(reports.items())
    }
    json.dump(summary, sys.stdout, sort_keys=True, indent=2)
    print()
    return 0


def cmd_heatmap(args) -> int:
    weights = load_weights(args.weights)
    cfg = weights.config
    if args.image:
        from .image import read_image

        image = read_image(args.image)
    else:
        manifest = load_manifest(args.manifest)
        image = manifest.load_image(args.image_id)
    _, state = forward(image, weights)
    selection = None
    if args.prompt:
        prompt = prompt_from_json(json.loads(args.prompt))
        mask = tokenize_mask(
            rasterize(prompt, cfg.image_h, cfg.image_w, cfg.patch_size),
            cfg.patch_size,
        )
        selection = select_heads(roi_attention(state, mask), args.h_on or 1)
    files = emit_attention_heatmaps(
        state,
        args.out,
        (cfg.image_h // cfg.patch_size, cfg.image_w // cfg.patch_size),
        selection,
    )
    print(json.dumps({"out": str(args.out), "files": [p.name for p in files]}))
    return 0


def cmd_serve(args) -> int:
    import uvicorn

    from .service import create_app

    weights = load_weights(args.weights)
    store = load_store(args.store, expected_fingerprint=model_fingerprint(weights))
    manifest = load_manifest(args.manifest)
    host, _, port = args.bind.partition(":")
    app = create_app(
        weights, store, manifest, fallback=args.fallback_policy, ui_dir=args.ui
    )
    uvicorn.run(app, host=host or "127.0.0.1", port=int(port or 8000))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="phsearch",
        description="prompt-guided attention-head-selection image retrieval",
    )
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-model", help="generate and save seeded model weights")
    p.add_argument("--seed", type=int, default=0,
                   help="PRNG seed (unused by --kind quadrant, which is deterministic)")
    p.add_argument("--out", required=True)
    p.add_argument("--kind", choices=["toy", "quadrant"], default="toy")
    p.add_argument("--patch-size", type=int, default=DEFAULT_TOY.patch_size)
    p.add_argument("--embed-dim", type=int, default=DEFAULT_TOY.embed_dim)
    p.add_argument("--heads", type=int, default=DEFAULT_TOY.num_heads)
    p.add_argument("--layers", type=int, default=DEFAULT_TOY.num_layers)
    p.add_argument("--registers", type=int, default=DEFAULT_TOY.num_registers)
    p.add_argument("--ffn-hidden", type=int, default=DEFAULT_TOY.ffn_hidden)
    p.add_argument("--image-size", default="32x32")
    p.add_argument("--channels", type=int, default=1)
    p.set_defaults(func=cmd_gen_model)

    p = sub.add_parser("gen-corpus", help="generate a synthetic quadrant corpus")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.add_argument("--patterns", type=int, default=4)
    p.add_argument("--image-size", type=int, default=32)
    p.add_argument("--db-per-pair", type=int, default=5)
    p.add_argument("--query-per-pair", type=int, default=1)
    p.set_defaults(func=cmd_gen_corpus)

    p = sub.add_parser("build-index", help="extract features for a manifest")
    p.add_argument("--weights", required=True)
    p.add_argument("--manifest", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--no-cache", action="store_true",
                   help="skip attention caches (disables phs-qd)")
    p.set_defaults(func=cmd_build_index)

    p = sub.add_parser("query", help="run one retrieval query")
    p.add_argument("--weights", required=True)
    p.add_argument("--store", required=True)
    p.add_argument("--manifest")
    p.add_argument("--image-id")
    p.add_argument("--image", help="inline pixel file instead of --image-id")
    p.add_argument("--mode", default="cbir")
    p.add_argument("--prompt", help="prompt JSON")
    p.add_argument("--k", type=int, default=10)
    p.add_argument("--h-on", type=int)
    p.add_argument("--roi", default="sum", choices=["sum", "max"])
    p.add_argument("--strategy", default="before_scale",
                   choices=["before_scale", "before", "after", "after_scale", "identity"])
    p.add_argument("--noise-m", type=int)
    p.add_argument("--noise-seed", type=int, default=0)
    p.add_argument("--fallback", default="cbir", choices=["cbir", "strict"])
    p.add_argument("--include-heatmaps", action="store_true")
    p.set_defaults(func=cmd_query)

    for name, help_text in (
        ("eval", "run the evaluation cells of an experiment config"),
        ("sweep", "scan retained-head counts"),
    ):
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", help="experiment config JSON file")
        p.add_argument("--query-manifest")
        p.add_argument("--db-manifest")
        p.add_argument("--weights")
        p.add_argument("--modes", help="comma-separated mode list")
        p.add_argument("--prompt-type", help="comma-separated prompt types")
        p.add_argument("--k", type=int)
        p.add_argument("--out")
        if name == "eval":
            p.add_argument("--h-on", help="comma-separated list")
            p.set_defaults(func=cmd_eval)
        else:
            p.add_argument("--h-on", required=True, help="range like 1..h or list")
            p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("heatmap", help="export per-head attention maps as PGM")
    p.add_argument("--weights", required=True)
    p.add_argument("--manifest")
    p.add_argument("--image-id")
    p.add_argument("--image")
    p.add_argument("--prompt", help="prompt JSON for a selected-heads map")
    p.add_argument("--h-on", type=int)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_heatmap)

    p = sub.add_parser("serve", help="run the HTTP service")
    p.add_argument("--weights", required=True)
    p.add_argument("--store", required=True)
    p.add_argument("--manifest", required=True)
    p.add_argument("--bind", default="127.0.0.1:8000")
    p.add_argument("--fallback-policy", default="cbir", choices=["cbir", "strict"])
    p.add_argument("--ui", help="directory with the built browser frontend")
    p.set_defaults(func=cmd_serve)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except PhsError as exc:
        json.dump({"error": exc.code, "message": str(exc)}, sys.stderr)
        print(file=sys.stderr)
        return 1
    except OSError as exc:
        json.dump({"error": "io_error", "message": str(exc)}, sys.stderr)
        print(file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
