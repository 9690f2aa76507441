"""In-process HTTP model server with deterministic synthetic behavior.

Serves the same wire protocol as a real model server, backed by the synthetic
backends from :mod:`crop_vqa.backends.synthetic`. Used to exercise the remote
clients, the cache layer, and the protocol conformance suite without any
neural models. Requests are counted per route (exposed at ``GET /stats``) so
tests can assert how often the wire was actually hit.
"""

from __future__ import annotations

import json
import threading
from collections import Counter
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from typing import Optional

from ..geometry import GeometryError
from ..imaging import ImageDecodeError, decode_png_base64
from .interfaces import Detector, RelevanceScorer, SaliencySource, Segmenter, VqaModel


class StubModelServer:
    """Threaded wire-protocol server over pluggable (synthetic) backends.

    Capabilities left as None return 501, mirroring how a partially
    configured real server behaves. Use as a context manager or call
    :meth:`start` / :meth:`stop` explicitly.
    """

    def __init__(
        self,
        scorer: Optional[RelevanceScorer] = None,
        detector: Optional[Detector] = None,
        segmenter: Optional[Segmenter] = None,
        vqa: Optional[VqaModel] = None,
        saliency: Optional[SaliencySource] = None,
        name: str = "stub-models",
        version: str = "1",
        host: str = "127.0.0.1",
    ):
        self.scorer = scorer
        self.detector = detector
        self.segmenter = segmenter
        self.vqa = vqa
        self.saliency = saliency
        self.name = name
        self.version = version
        self.host = host
        self.counters: Counter[str] = Counter()
        self._counter_lock = threading.Lock()
        self._server: ThreadingHTTPServer | None = None
        self._thread: threading.Thread | None = None

    # -- lifecycle ---------------------------------------------------------

    def start(self) -> str:
        if self._server is not None:
            return self.base_url
        handler = _make_handler(self)
        self._server = ThreadingHTTPServer((self.host, 0), handler)
        self._server.daemon_threads = True
        self._thread = threading.Thread(target=self._server.serve_forever, daemon=True)
        self._thread.start()
        return self.base_url

    def stop(self) -> None:
        if self._server is not None:
            self._server.shutdown()
            self._server.server_close()
            self._server = None
            self._thread = None

    def __enter__(self) -> "StubModelServer":
        self.start()
        return self

    def __exit__(self, *exc_info) -> None:
        self.stop()

    @property
    def base_url(self) -> str:
        assert self._server is not None, "server not started"
        host, port = self._server.server_address[:2]
        return f"http://{host}:{port}"

    def count(self, route: str) -> None:
        with self._counter_lock:
            self.counters[route] += 1

    def stats(self) -> dict[str, int]:
        with self._counter_lock:
            return dict(self.counters)

    # -- route handlers ----------------------------------------------------

    def handle(self, route: str, payload: dict) -> tuple[int, dict]:
        self.count(route)
        if route == "/score":
            if self.scorer is None:
                return 501, {"error": "score capability not configured"}
            image = decode_png_base64(_require_str(payload, "image"))
            return 200, {"score": self.scorer.score(image, _require_str(payload, "text"))}
        if route == "/detect":
            if self.detector is None:
                return 501, {"error": "detect capability not configured"}
            image = decode_png_base64(_require_str(payload, "image"))
            conf = payload.get("conf")
            if isinstance(conf, bool) or not isinstance(conf, (int, float)):
                raise _BadRequest("conf must be a number")
            detections = self.detector.detect(image, float(conf))
            return 200, {
                "detections": [
                    {"box": list(d.box.as_tuple()), "conf": d.confidence, "label": d.label}
                    for d in detections
                ]
            }
        if route == "/segment":
            if self.segmenter is None:
                return 501, {"error": "segment capability not configured"}
            image = decode_png_base64(_require_str(payload, "image"))
            return 200, {"boxes": [list(b.as_tuple()) for b in self.segmenter.segment(image)]}
        if route == "/vqa":
            if self.vqa is None:
                return 501, {"error": "vqa capability not configured"}
            raw_images = payload.get("images")
            if not isinstance(raw_images, list) or not raw_images:
                raise _BadRequest("images must be a non-empty list")
            images = [decode_png_base64(_require_str({"image": i}, "image")) for i in raw_images]
            answer = self.vqa.answer(images, _require_str(payload, "question"))
            return 200, {"answer": answer.text, "answer_score": answer.score}
        if route == "/saliency":
            if self.saliency is None:
                return 501, {"error": "saliency capability not configured"}
            image = decode_png_base64(_require_str(payload, "image"))
            pm = self.saliency.saliency(image, _require_str(payload, "question"))
            return 200, {"rows": pm.rows, "cols": pm.cols, "values": list(pm.values)}
        return 404, {"error": f"unknown route {route}"}


class _BadRequest(ValueError):
    pass


def _require_str(payload: dict, key: str) -> str:
    value = payload.get(key)
    if not isinstance(value, str):
        raise _BadRequest(f"{key} must be a string")
    return value


def _make_handler(server: StubModelServer):
    class Handler(BaseHTTPRequestHandler):
        protocol_version = "HTTP/1.1"

        def log_message(self, *args) -> None:  # keep test output quiet
            pass

        def _send(self, status: int, body: dict) -> None:
            data = json.dumps(body).encode("utf-8")
            self.send_response(status)
            self.send_header("Content-Type", "application/json")
            self.send_header("Content-Length", str(len(data)))
            self.end_headers()
            self.wfile.write(data)

        def do_GET(self) -> None:
            if self.path == "/identity":
                server.count("/identity")
                self._send(200, {"name": server.name, "version": server.version})
            elif self.path == "/stats":
                self._send(200, server.stats())
            else:
                self._send(404, {"error": f"unknown route {self.path}"})

        def do_POST(self) -> None:
            length = int(self.headers.get("Content-Length", "0"))
            raw = self.rfile.read(length)
            try:
                payload = json.loads(raw.decode("utf-8"))
                if not isinstance(payload, dict):
                    raise _BadRequest("body must be a JSON object")
                status, body = server.handle(self.path, payload)
            except (_BadRequest, ImageDecodeError, GeometryError, json.JSONDecodeError) as exc:
                status, body = 400, {"error": str(exc)}
            except Exception as exc:  # deterministic backends should not get here
                status, body = 500, {"error": f"{type(exc).__name__}: {exc}"}
            self._send(status, body)

    return Handler
