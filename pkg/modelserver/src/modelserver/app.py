"""HTTP layer: the wire protocol over whatever engines are configured.

Behavior contract, independent of engine choice:

* 400 for malformed payloads (bad JSON, missing fields, undecodable images);
* 501 for capabilities with no configured engine;
* 503 while an engine is still loading (loading starts at startup, in a
  background thread per capability);
* boxes leave as half-open integer pixel rectangles inside the image, with
  mask-to-covering-box conversion and any downscale-guard rescaling done
  here, server-side;
* requests are serialized per engine so single-GPU checkpoints are safe.

/identity reports a digest of the resolved engine configuration as the
version, so response caches keyed on identity can never mix checkpoints.
"""

from __future__ import annotations

import base64
import binascii
import io
import threading
from contextlib import asynccontextmanager
from typing import Optional

from fastapi import FastAPI, Request
from fastapi.responses import JSONResponse
from PIL import Image

from .config import CAPABILITIES, ServerConfig, validate_capabilities
from .engines import EngineError, build_engine
from .masks import covering_box, scale_box


class _BadRequest(ValueError):
    pass


class _EngineHolder:
    """Tracks one capability's engine through loading."""

    def __init__(self, capability: str):
        self.capability = capability
        self.state = "unconfigured"  # unconfigured | loading | ready | failed
        self.engine = None
        self.error: Optional[str] = None
        self.lock = threading.Lock()  # serializes inference per engine

    def load_in_background(self, spec) -> None:
        self.state = "loading"

        def load() -> None:
            try:
                self.engine = build_engine(self.capability, spec)
                self.state = "ready"
            except Exception as exc:
                self.error = f"{type(exc).__name__}: {exc}"
                self.state = "failed"

        threading.Thread(target=load, daemon=True, name=f"load-{self.capability}").start()


def _decode_image(payload: dict, key: str = "image") -> Image.Image:
    value = payload.get(key)
    if not isinstance(value, str):
        raise _BadRequest(f"{key} must be a base64 string")
    return _decode_one(value)


def _decode_one(value: str) -> Image.Image:
    try:
        raw = base64.b64decode(value, validate=True)
        image = Image.open(io.BytesIO(raw))
        image.load()
    except (binascii.Error, ValueError, OSError) as exc:
        raise _BadRequest(f"image payload is not a decodable image: {exc}") from exc
    return image.convert("RGB")


def _require_str(payload: dict, key: str) -> str:
    value = payload.get(key)
    if not isinstance(value, str):
        raise _BadRequest(f"{key} must be a string")
    return value


def create_app(cfg: ServerConfig) -> FastAPI:
    problem = validate_capabilities(cfg)
    if problem:
        raise ValueError(problem)

    holders = {capability: _EngineHolder(capability) for capability in CAPABILITIES}

    @asynccontextmanager
    async def lifespan(_: FastAPI):
        for capability, spec in cfg.engines.items():
            holders[capability].load_in_background(spec)
        yield

    app = FastAPI(title=cfg.name, version=cfg.version(), lifespan=lifespan)

    def ready(capability: str) -> tuple[Optional[_EngineHolder], Optional[JSONResponse]]:
        holder = holders[capability]
        if holder.state == "unconfigured":
            return None, JSONResponse(
                status_code=501, content={"error": f"{capability} capability not configured"}
            )
        if holder.state == "loading":
            return None, JSONResponse(
                status_code=503, content={"error": f"{capability} engine is still loading"}
            )
        if holder.state == "failed":
            return None, JSONResponse(
                status_code=500,
                content={"error": f"{capability} engine failed to load: {holder.error}"},
            )
        return holder, None

    def guard(image: Image.Image) -> tuple[Image.Image, float]:
        """Downscale oversized inputs; returns (image, scale back factor)."""
        longest = max(image.width, image.height)
        if longest <= cfg.max_image_side:
            return image, 1.0
        factor = cfg.max_image_side / longest
        small = image.resize(
            (max(1, round(image.width * factor)), max(1, round(image.height * factor))),
            Image.BILINEAR,
        )
        return small, longest / max(small.width, small.height)

    async def parse_body(request: Request) -> dict:
        try:
            payload = await request.json()
        except Exception as exc:
            raise _BadRequest(f"body must be JSON: {exc}") from exc
        if not isinstance(payload, dict):
            raise _BadRequest("body must be a JSON object")
        return payload

    @app.exception_handler(_BadRequest)
    def bad_request_handler(_, exc: _BadRequest) -> JSONResponse:
        return JSONResponse(status_code=400, content={"error": str(exc)})

    @app.exception_handler(EngineError)
    def engine_error_handler(_, exc: EngineError) -> JSONResponse:
        return JSONResponse(status_code=500, content={"error": str(exc)})

    @app.get("/health")
    def health() -> dict:
        return {
            "status": "ok",
            "capabilities": {c: holders[c].state for c in CAPABILITIES},
        }

    @app.get("/identity")
    def identity() -> dict:
        def describe(spec) -> str:
            model = spec.options.get("model") or spec.options.get("checkpoint")
            return f"{spec.engine}:{model}" if model else spec.engine

        return {
            "name": cfg.name,
            "version": cfg.version(),
            "engines": {c: describe(cfg.engines[c]) for c in cfg.engines},
        }

    @app.post("/score")
    async def score(request: Request):
        payload = await parse_body(request)
        holder, error = ready("score")
        if error:
            return error
        image = _decode_image(payload)
        text = _require_str(payload, "text")
        small, _ = guard(image)
        with holder.lock:
            value = holder.engine.score(small, text)
        return {"score": float(value)}

    @app.post("/detect")
    async def detect(request: Request):
        payload = await parse_body(request)
        holder, error = ready("detect")
        if error:
            return error
        image = _decode_image(payload)
        conf = payload.get("conf")
        if isinstance(conf, bool) or not isinstance(conf, (int, float)):
            raise _BadRequest("conf must be a number")
        small, factor = guard(image)
        with holder.lock:
            raw = holder.engine.detect(small, float(conf))
        detections = []
        for box, confidence, label in raw:
            if confidence < conf:
                continue  # engines must honor the threshold; enforce anyway
            scaled = scale_box(box, factor, image.width, image.height)
            if scaled is None:
                continue
            detections.append({"box": list(scaled), "conf": float(confidence), "label": str(label)})
        return {"detections": detections}

    @app.post("/segment")
    async def segment(request: Request):
        payload = await parse_body(request)
        holder, error = ready("segment")
        if error:
            return error
        image = _decode_image(payload)
        small, factor = guard(image)
        with holder.lock:
            masks = holder.engine.segment(small)
        boxes = []
        for mask in masks:
            box = covering_box(mask)
            if box is None:
                continue
            scaled = scale_box(box, factor, image.width, image.height)
            if scaled is not None:
                boxes.append(list(scaled))
        return {"boxes": boxes}

    @app.post("/vqa")
    async def vqa(request: Request):
        payload = await parse_body(request)
        holder, error = ready("vqa")
        if error:
            return error
        raw_images = payload.get("images")
        if not isinstance(raw_images, list) or not raw_images:
            raise _BadRequest("images must be a non-empty list")
        images = []
        for entry in raw_images:
            if not isinstance(entry, str):
                raise _BadRequest("images entries must be base64 strings")
            images.append(guard(_decode_one(entry))[0])
        question = _require_str(payload, "question")
        with holder.lock:
            answer, answer_score = holder.engine.answer(images, question)
        return {
            "answer": str(answer),
            "answer_score": None if answer_score is None else float(answer_score),
        }

    @app.post("/saliency")
    async def saliency(request: Request):
        payload = await parse_body(request)
        holder, error = ready("saliency")
        if error:
            return error
        image = _decode_image(payload)
        question = _require_str(payload, "question")
        small, _ = guard(image)
        with holder.lock:
            rows, cols, values = holder.engine.saliency(small, question)
        return {"rows": int(rows), "cols": int(cols), "values": [float(v) for v in values]}

    return app
