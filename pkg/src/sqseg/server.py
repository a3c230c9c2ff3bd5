"""HTTP service for the interactive segmentation loop.

Stateless by design: every request carries its own image (inline base64
PNG, 16 MiB cap by default, or a path under the configured data
directory) and squiggles. The model is shared immutable state; a bounded
semaphore caps concurrent forward passes. Logs are JSON lines on stderr
with per-stage timings.
"""

from __future__ import annotations

import base64
import hashlib
import json
import logging
import os
import sys
import threading
import time
import uuid
from datetime import datetime, timezone
from pathlib import Path

import numpy as np
from fastapi import Body, FastAPI, Request
from fastapi.exceptions import RequestValidationError
from fastapi.responses import JSONResponse
from fastapi.staticfiles import StaticFiles

from . import imageio
from .mask import connected_components, mask_to_polygons
from .nn import load_weights
from .pipeline import (
    CLASS_NAMES,
    DEFAULT_PALETTE,
    ClassProbMap,
    NetworkModel,
    assemble_semantic_map,
    segment_one,
)
from .rle import rle_decode, rle_encode
from .signals import rasterize_squiggle

DEFAULT_MAX_IMAGE_BYTES = 16 * 1024 * 1024

_log = logging.getLogger("sqseg.service")
if not _log.handlers:
    handler = logging.StreamHandler(sys.stderr)
    handler.setFormatter(logging.Formatter("%(message)s"))
    _log.addHandler(handler)
    _log.setLevel(logging.INFO)
    _log.propagate = False


def _emit(event: str, **fields) -> None:
    record = {"ts": datetime.now(timezone.utc).isoformat(), "event": event, **fields}
    _log.info(json.dumps(record, sort_keys=True))


class ApiError(Exception):
    """Client-visible failure carrying an HTTP status and a field message."""

    def __init__(self, status: int, message: str, field: str | None = None):
        super().__init__(message)
        self.status = status
        self.field = field

    def response(self) -> JSONResponse:
        error: dict = {"message": str(self)}
        if self.field:
            error["field"] = self.field
        return JSONResponse({"error": error}, status_code=self.status)


def _internal_error(event: str, exc: Exception) -> JSONResponse:
    error_id = uuid.uuid4().hex
    _emit(event, status=500, error_id=error_id, error=repr(exc))
    return JSONResponse(
        {"error": {"id": error_id, "message": "internal error"}}, status_code=500
    )


def _decode_image(spec: str, data_dir: Path | None, cap: int) -> np.ndarray:
    """Inline base64 PNG or a path under the data directory."""
    if spec.startswith("data:"):
        spec = spec.rpartition(",")[2]
    if spec.startswith("iVBOR"):  # base64 of the PNG magic
        if len(spec) * 3 // 4 > cap:
            raise ApiError(413, f"inline image exceeds {cap} bytes")
        try:
            raw = base64.b64decode(spec, validate=True)
        except (ValueError, TypeError) as exc:
            raise ApiError(400, f"bad base64 image: {exc}", field="image")
        try:
            return imageio.load_rgb_png(raw)
        except Exception as exc:
            raise ApiError(400, f"undecodable PNG: {exc}", field="image")
    if data_dir is None:
        raise ApiError(400, "server-side image paths are not enabled", field="image")
    path = (data_dir / spec).resolve()
    if not path.is_relative_to(data_dir.resolve()):
        raise ApiError(400, "image path escapes the data directory", field="image")
    try:
        if path.stat().st_size > cap:
            raise ApiError(413, f"image file exceeds {cap} bytes")
        return imageio.load_rgb_png(path)
    except ApiError:
        raise
    except Exception as exc:
        raise ApiError(400, f"cannot read image {spec!r}: {exc}", field="image")


def _parse_squiggles(raw, palette: dict) -> list:
    if not isinstance(raw, list) or not raw:
        raise ApiError(400, "squiggles must be a non-empty list", field="squiggles")
    squiggles = []
    for obj in raw:
        try:
            squiggles.append(imageio.squiggle_from_obj(obj))
        except ValueError as exc:
            raise ApiError(400, str(exc), field="squiggles")
    for s in squiggles:
        if s.class_id not in palette:
            raise ApiError(422, f"invalid class id {s.class_id}", field="squiggles")
    return squiggles


def _ring_coords(poly) -> list:
    pts = [[float(x), float(y)] for x, y in poly.vertices]
    pts.append(pts[0])  # rings close by repeating the first vertex
    return pts


def _class_features(labels: np.ndarray, palette: dict) -> list:
    features = []
    for cid in sorted(int(c) for c in np.unique(labels) if c != 0):
        components = connected_components(labels == cid, connectivity=8)
        for i in range(1, components.max() + 1):
            rings = mask_to_polygons(components == i)
            rings.sort(key=lambda p: p.signed_area(), reverse=True)
            features.append({
                "type": "Feature",
                "geometry": {
                    "type": "Polygon",
                    "coordinates": [_ring_coords(r) for r in rings],
                },
                "properties": {
                    "class_id": cid,
                    "class_name": CLASS_NAMES.get(cid, f"class_{cid}"),
                    "color": list(palette.get(cid, (255, 255, 255))),
                },
            })
    return features


def create_app(
    weights_path,
    palette: dict | None = None,
    data_dir=None,
    max_image_bytes: int = DEFAULT_MAX_IMAGE_BYTES,
    workers: int | None = None,
    threads: int = 1,
    static_dir=None,
) -> FastAPI:
    """Build the service around one loaded weight container.

    static_dir, when given, is served at the root path so the browser
    annotator can be hosted same-origin with the API.
    """
    weights = load_weights(weights_path)
    spec = weights.spec
    digest = hashlib.sha256(Path(weights_path).read_bytes()).hexdigest()[:12]
    arch = spec.variant or f"w{spec.w:g}d{spec.d:g}"
    model_id = f"{arch}-{digest}"
    model = NetworkModel(spec, weights, threads=threads)
    palette = dict(palette) if palette else dict(DEFAULT_PALETTE)
    data_root = Path(data_dir) if data_dir else None
    gate = threading.Semaphore(workers or os.cpu_count() or 1)

    app = FastAPI(title="sqseg service", docs_url=None, redoc_url=None)

    @app.exception_handler(RequestValidationError)
    def malformed_request(request: Request, exc: RequestValidationError):
        first = exc.errors()[0] if exc.errors() else {}
        field = ".".join(str(p) for p in first.get("loc", ()) if p != "body") or "body"
        return JSONResponse(
            {"error": {"field": field, "message": first.get("msg", "invalid request")}},
            status_code=400,
        )

    @app.get("/api/health")
    def health():
        return {"status": "ok", "model_id": model_id}

    @app.get("/api/palette")
    def get_palette():
        return {
            "classes": [
                {"id": cid, "name": CLASS_NAMES.get(cid, f"class_{cid}"), "color": list(rgb)}
                for cid, rgb in sorted(palette.items())
            ]
        }

    @app.post("/api/segment")
    def segment(payload: dict = Body(...)):
        t_start = time.perf_counter()
        timing: dict[str, float] = {}
        try:
            image_spec = payload.get("image")
            if not isinstance(image_spec, str) or not image_spec:
                raise ApiError(400, "image must be a base64 PNG or a path", field="image")
            wanted = payload.get("model_id")
            if wanted not in (None, "", model_id):
                raise ApiError(400, f"model {wanted!r} is not served here", field="model_id")
            return_probs = bool(payload.get("return_probs", False))

            t0 = time.perf_counter()
            image = _decode_image(image_spec, data_root, max_image_bytes)
            timing["decode"] = (time.perf_counter() - t0) * 1000
            h, w = image.shape[:2]
            if h % 32 or w % 32:
                raise ApiError(
                    400, f"image is {w}x{h}; both sides must be divisible by 32", field="image"
                )
            squiggles = _parse_squiggles(payload.get("squiggles"), palette)

            t0 = time.perf_counter()
            class_ids = sorted({s.class_id for s in squiggles})
            pairs = {cid: rasterize_squiggle(squiggles, cid, width=w, height=h)
                     for cid in class_ids}
            timing["signals"] = (time.perf_counter() - t0) * 1000

            t0 = time.perf_counter()
            maps = []
            with gate:
                for cid in class_ids:
                    maps.append(
                        ClassProbMap(class_id=cid, probs=segment_one(image, pairs[cid], model))
                    )
            timing["forward"] = (time.perf_counter() - t0) * 1000

            t0 = time.perf_counter()
            labels = assemble_semantic_map(maps)
            timing["assemble"] = (time.perf_counter() - t0) * 1000

            t0 = time.perf_counter()
            encoded = rle_encode(labels)
            encoded["palette"] = {str(cid): list(rgb) for cid, rgb in sorted(palette.items())}
            timing["encode"] = (time.perf_counter() - t0) * 1000
            timing["total"] = (time.perf_counter() - t_start) * 1000

            body = {"label_mask": encoded, "timing_ms": timing}
            if return_probs:
                body["per_class"] = [
                    {
                        "class_id": m.class_id,
                        "min": float(m.probs.min()),
                        "mean": float(m.probs.mean()),
                        "max": float(m.probs.max()),
                    }
                    for m in maps
                ]
            _emit("segment", status=200, classes=class_ids, size=[w, h], timing_ms=timing)
            return body
        except ApiError as exc:
            _emit("segment", status=exc.status, error=str(exc))
            return exc.response()
        except Exception as exc:
            return _internal_error("segment", exc)

    @app.post("/api/export")
    def export(payload: dict = Body(...)):
        t_start = time.perf_counter()
        try:
            encoded = payload.get("label_mask")
            if not isinstance(encoded, dict):
                raise ApiError(400, "label_mask must be an RLE object", field="label_mask")
            try:
                labels = rle_decode(encoded)
            except ValueError as exc:
                raise ApiError(400, str(exc), field="label_mask")
            bad = sorted(int(c) for c in np.unique(labels) if c != 0 and int(c) not in palette)
            if bad:
                raise ApiError(422, f"invalid class id {bad[0]}", field="label_mask")
            collection = {
                "type": "FeatureCollection",
                "features": _class_features(labels, palette),
            }
            _emit(
                "export",
                status=200,
                features=len(collection["features"]),
                timing_ms={"total": (time.perf_counter() - t_start) * 1000},
            )
            return collection
        except ApiError as exc:
            _emit("export", status=exc.status, error=str(exc))
            return exc.response()
        except Exception as exc:
            return _internal_error("export", exc)

    if static_dir is not None:
        # API routes are registered first, so they keep priority over the
        # catch-all static mount.
        app.mount("/", StaticFiles(directory=static_dir, html=True), name="ui")

    return app
