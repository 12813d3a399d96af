"""HTTP facade: image listing, prompted queries, attention-map feeds.

The process holds one immutable (weights, store, manifest) triple chosen at
startup; requests never mutate shared state, so concurrent handling is safe.
"""

from __future__ import annotations

from fastapi import FastAPI, Request
from fastapi.responses import FileResponse, JSONResponse

from .errors import (
    BadParam,
    BadPrompt,
    DimensionMismatch,
    EmptyMaskError,
    MissingCacheError,
    PhsError,
    UnknownImageError,
)
from .api import run_query_request, state_grids
from .manifest import DatasetManifest
from .model import ModelWeights
from .retrieval import FeatureStore

_CONTENT_TYPES = {
    ".pgm": "image/x-portable-graymap",
    ".png": "image/png",
    ".jpg": "image/jpeg",
    ".jpeg": "image/jpeg",
}

_STATUS = {
    BadParam: 400,
    BadPrompt: 400,
    DimensionMismatch: 400,
    UnknownImageError: 404,
    MissingCacheError: 409,
    EmptyMaskError: 422,
}


def create_app(
    weights: ModelWeights,
    store: FeatureStore,
    manifest: DatasetManifest,
    fallback: str = "cbir",
    ui_dir: str | None = None,
) -> FastAPI:
    app = FastAPI(title="prompted head-selection retrieval")
    cfg = weights.config
    grid_shape = (cfg.image_h // cfg.patch_size, cfg.image_w // cfg.patch_size)

    @app.exception_handler(PhsError)
    async def _phs_error(_request: Request, exc: PhsError):
        status = next(
            (code for etype, code in _STATUS.items() if isinstance(exc, etype)), 500
        )
        return JSONResponse(
            status_code=status, content={"error": exc.code, "message": str(exc)}
        )

    @app.get("/healthz")
    def healthz():
        return {"ok": True}

    @app.get("/api/images")
    def list_images(offset: int = 0, limit: int | None = None):
        entries = manifest.images[offset:]
        if limit is not None:
            entries = entries[:limit]
        return [
            {
                "id": e.image_id,
                "h": e.h,
                "w": e.w,
                "objects": [
                    {
                        "category": o.category,
                        "box": {
                            "x0": o.box.x0,
                            "y0": o.box.y0,
                            "x1": o.box.x1,
                            "y1": o.box.y1,
                        },
                    }
                    for o in e.objects
                ],
            }
            for e in entries
        ]

    @app.api_route("/api/image/{image_id}", methods=["GET", "HEAD"])
    def get_image(image_id: str):
        path = manifest.source_path(image_id)
        if not path.exists():
            raise UnknownImageError(f"pixel file for {image_id!r} is missing")
        media = _CONTENT_TYPES.get(path.suffix.lower(), "application/octet-stream")
        return FileResponse(path, media_type=media)

    @app.get("/api/attention/{image_id}")
    def get_attention(image_id: str):
        record = store.record(image_id)
        if record is None:
            raise UnknownImageError(f"image {image_id!r} is not in the store")
        if record.state is None:
            raise MissingCacheError(f"image {image_id!r} was indexed without a cache")
        return state_grids(record.state, grid_shape)

    @app.post("/api/query")
    async def post_query(request: Request):
        body = await request.json()
        return run_query_request(body, store, weights, manifest, fallback=fallback)

    @app.get("/api/model")
    def model_info():
        return {
            "num_heads": cfg.num_heads,
            "num_layers": cfg.num_layers,
            "num_registers": cfg.num_registers,
            "patch_size": cfg.patch_size,
            "embed_dim": cfg.embed_dim,
            "image_h": cfg.image_h,
            "image_w": cfg.image_w,
            "store_size": len(store),
        }

    if ui_dir is not None:
        from fastapi.staticfiles import StaticFiles

        app.mount("/", StaticFiles(directory=ui_dir, html=True), name="ui")

    return app
