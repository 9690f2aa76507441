"""HTTP clients for the model-server wire protocol.

One endpoint per capability, JSON bodies, images as base64 PNG:

    POST /score    {"image": <b64 png>, "text": <question>}      -> {"score": f}
    POST /detect   {"image": ..., "conf": f}                     -> {"detections": [...]}
    POST /segment  {"image": ...}                                -> {"boxes": [[x0,y0,x1,y1], ...]}
    POST /vqa      {"images": [...], "question": s}              -> {"answer": s, "answer_score": f|null}
    POST /saliency {"image": ..., "question": s}                 -> {"rows": r, "cols": c, "values": [...]}
    GET  /identity                                               -> {"name": s, "version": s}

Boxes on the wire are half-open pixel integers. Transport failures are
retried once and then surface as :class:`TransportError`; anything the server
sends that violates the contract surfaces as :class:`ProtocolError`. Each
client keeps one connection per thread, so instances are safe to share across
a worker pool.
"""

from __future__ import annotations

import math
import threading
from typing import Any, Sequence

import requests

from ..geometry import Image, PatchMap, Rect, round_half_up
from ..imaging import encode_png_base64
from .interfaces import Detection, ProtocolError, TransportError, VqaAnswer

RETRYABLE_STATUS = (502, 503, 504)


def _require_number(value: Any, what: str) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ProtocolError(f"{what} must be a number, got {value!r}")
    out = float(value)
    if not math.isfinite(out):
        raise ProtocolError(f"{what} must be finite, got {out!r}")
    return out


def _clamped_box(raw: Any, image: Image, what: str) -> Rect | None:
    """Parse a wire box, round to pixels, clamp into the image.

    Returns None when the clamped box is empty (degenerate server output is
    dropped rather than failing the whole question).
    """
    if not isinstance(raw, (list, tuple)) or len(raw) != 4:
        raise ProtocolError(f"{what} must be [x0, y0, x1, y1], got {raw!r}")
    coords = [round_half_up(_require_number(v, what)) for v in raw]
    x0 = min(max(coords[0], 0), image.width)
    y0 = min(max(coords[1], 0), image.height)
    x1 = min(max(coords[2], 0), image.width)
    y1 = min(max(coords[3], 0), image.height)
    if x0 >= x1 or y0 >= y1:
        return None
    return Rect(x0, y0, x1, y1)


class _RemoteBase:
    def __init__(self, base_url: str, timeout_s: float = 30.0):
        self.base_url = base_url.rstrip("/")
        self.timeout_s = timeout_s
        self._local = threading.local()
        self._identity: str | None = None
        self._identity_lock = threading.Lock()

    def _session(self) -> requests.Session:
        session = getattr(self._local, "session", None)
        if session is None:
            session = requests.Session()
            self._local.session = session
        return session

    def _request(self, method: str, path: str, payload: dict | None = None) -> dict:
        url = self.base_url + path
        last_exc: Exception | None = None
        for attempt in range(2):
            try:
                response = self._session().request(
                    method, url, json=payload, timeout=self.timeout_s
                )
            except (requests.ConnectionError, requests.Timeout) as exc:
                last_exc = exc
                continue
            if response.status_code in RETRYABLE_STATUS and attempt == 0:
                last_exc = ProtocolError(f"{url} returned {response.status_code}")
                continue
            if response.status_code != 200:
                raise ProtocolError(
                    f"{url} returned {response.status_code}: {response.text[:200]}"
                )
            try:
                body = response.json()
            except ValueError as exc:
                raise ProtocolError(f"{url} returned non-JSON body") from exc
            if not isinstance(body, dict):
                raise ProtocolError(f"{url} returned {type(body).__name__}, expected object")
            return body
        if isinstance(last_exc, ProtocolError):
            raise last_exc
        raise TransportError(f"{url} unreachable after retry: {last_exc}") from last_exc

    @property
    def identity(self) -> str:
        with self._identity_lock:
            if self._identity is None:
                body = self._request("GET", "/identity")
                name = body.get("name")
                version = body.get("version")
                if not isinstance(name, str) or not isinstance(version, str):
                    raise ProtocolError(f"/identity must return string name and version: {body}")
                self._identity = f"{name}@{version}"
            return self._identity


class RemoteScorer(_RemoteBase):
    def score(self, image: Image, text: str) -> float:
        body = self._request(
            "POST", "/score", {"image": encode_png_base64(image), "text": text}
        )
        return _require_number(body.get("score"), "score")


class RemoteDetector(_RemoteBase):
    def detect(self, image: Image, confidence_threshold: float) -> list[Detection]:
        body = self._request(
            "POST",
            "/detect",
            {"image": encode_png_base64(image), "conf": confidence_threshold},
        )
        raw = body.get("detections")
        if not isinstance(raw, list):
            raise ProtocolError(f"detections must be a list, got {raw!r}")
        detections: list[Detection] = []
        for item in raw:
            if not isinstance(item, dict):
                raise ProtocolError(f"detection entries must be objects, got {item!r}")
            conf = _require_number(item.get("conf"), "detection conf")
            if conf < confidence_threshold:
                raise ProtocolError(
                    f"server returned detection below the {confidence_threshold} threshold"
                )
            if not (0.0 <= conf <= 1.0):
                raise ProtocolError(f"detection conf must be in [0, 1], got {conf}")
            label = item.get("label")
            if not isinstance(label, str):
                raise ProtocolError(f"detection label must be a string, got {label!r}")
            box = _clamped_box(item.get("box"), image, "detection box")
            if box is None:
                continue
            detections.append(Detection(box=box, confidence=conf, label=label))
        return detections


class RemoteSegmenter(_RemoteBase):
    def segment(self, image: Image) -> list[Rect]:
        body = self._request("POST", "/segment", {"image": encode_png_base64(image)})
        raw = body.get("boxes")
        if not isinstance(raw, list):
            raise ProtocolError(f"boxes must be a list, got {raw!r}")
        boxes: list[Rect] = []
        for item in raw:
            box = _clamped_box(item, image, "segment box")
            if box is not None:
                boxes.append(box)
        return boxes


class RemoteVqaModel(_RemoteBase):
    def answer(self, images: Sequence[Image], question: str) -> VqaAnswer:
        if not images:
            raise ValueError("at least one image is required")
        body = self._request(
            "POST",
            "/vqa",
            {"images": [encode_png_base64(img) for img in images], "question": question},
        )
        answer = body.get("answer")
        if not isinstance(answer, str):
            raise ProtocolError(f"answer must be a string, got {answer!r}")
        raw_score = body.get("answer_score")
        score = None if raw_score is None else _require_number(raw_score, "answer_score")
        return VqaAnswer(text=answer, score=score)


class RemoteSaliencySource(_RemoteBase):
    def saliency(self, image: Image, question: str) -> PatchMap:
        body = self._request(
            "POST",
            "/saliency",
            {"image": encode_png_base64(image), "question": question},
        )
        rows = body.get("rows")
        cols = body.get("cols")
        values = body.get("values")
        if not isinstance(rows, int) or not isinstance(cols, int) or isinstance(rows, bool):
            raise ProtocolError(f"rows/cols must be integers, got {rows!r}/{cols!r}")
        if not isinstance(values, list):
            raise ProtocolError(f"values must be a list, got {values!r}")
        parsed = [_require_number(v, "saliency value") for v in values]
        if any(v < 0 for v in parsed):
            raise ProtocolError("saliency values must be non-negative")
        if rows < 1 or cols < 1 or len(parsed) != rows * cols:
            raise ProtocolError(
                f"saliency grid mismatch: {rows}x{cols} with {len(parsed)} values"
            )
        return PatchMap(rows=rows, cols=cols, values=tuple(parsed))
