"""Wire-protocol conformance checks, runnable against any model server.

The same suite is pointed at the in-process stub server and at real serving
shims; a server that passes is safe to put behind the remote backends. Checks
are deliberately black-box: only the documented routes and payloads are used.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import requests

from .backends.synthetic import coordinate_image
from .geometry import Image
from .imaging import encode_png_base64

PROBE_QUESTION = "what is in the marked region?"


@dataclass
class CheckResult:
    name: str
    passed: bool
    detail: str = ""


class _Client:
    def __init__(self, base_url: str, timeout_s: float):
        self.base_url = base_url.rstrip("/")
        self.timeout_s = timeout_s
        self.session = requests.Session()

    def get(self, path: str):
        return self.session.get(self.base_url + path, timeout=self.timeout_s)

    def post(self, path: str, payload: dict):
        return self.session.post(self.base_url + path, json=payload, timeout=self.timeout_s)


def _probe_images() -> tuple[Image, Image]:
    return coordinate_image(96, 64), coordinate_image(64, 96)


def _is_number(value) -> bool:
    return isinstance(value, (int, float)) and not isinstance(value, bool) and math.isfinite(value)


def _box_ok(raw, image: Image) -> bool:
    if not isinstance(raw, (list, tuple)) or len(raw) != 4:
        return False
    if not all(isinstance(v, int) and not isinstance(v, bool) for v in raw):
        return False
    x0, y0, x1, y1 = raw
    return 0 <= x0 < x1 <= image.width and 0 <= y0 < y1 <= image.height


def run_conformance(
    base_url: str, timeout_s: float = 30.0, allow_unconfigured: bool = False
) -> list[CheckResult]:
    """Run every protocol check against one server; returns one result each."""
    client = _Client(base_url, timeout_s)
    image_a, image_b = _probe_images()
    b64_a = encode_png_base64(image_a)
    b64_b = encode_png_base64(image_b)
    results: list[CheckResult] = []

    def check(name: str, fn) -> None:
        try:
            detail = fn()
            results.append(CheckResult(name, True, detail or ""))
        except _Unconfigured as exc:
            results.append(CheckResult(name, allow_unconfigured, f"not configured: {exc}"))
        except AssertionError as exc:
            results.append(CheckResult(name, False, str(exc)))
        except requests.RequestException as exc:
            results.append(CheckResult(name, False, f"transport failure: {exc}"))

    def post_ok(path: str, payload: dict) -> dict:
        response = client.post(path, payload)
        if response.status_code == 501:
            raise _Unconfigured(path)
        assert response.status_code == 200, f"{path} returned {response.status_code}"
        body = response.json()
        assert isinstance(body, dict), f"{path} body must be a JSON object"
        return body

    # identity -------------------------------------------------------------
    def check_identity():
        response = client.get("/identity")
        assert response.status_code == 200, f"/identity returned {response.status_code}"
        body = response.json()
        assert isinstance(body.get("name"), str) and body["name"], "name must be a string"
        assert isinstance(body.get("version"), str) and body["version"], "version must be a string"
        return f"{body['name']}@{body['version']}"

    check("identity: reports name and version", check_identity)

    # score ------------------------------------------------------------------
    def check_score():
        body = post_ok("/score", {"image": b64_a, "text": PROBE_QUESTION})
        assert _is_number(body.get("score")), f"score must be a finite number: {body}"
        return f"score={body['score']}"

    def check_score_deterministic():
        first = post_ok("/score", {"image": b64_a, "text": PROBE_QUESTION}).get("score")
        second = post_ok("/score", {"image": b64_a, "text": PROBE_QUESTION}).get("score")
        assert first == second, f"same payload scored {first} then {second}"

    def check_score_rejects_garbage():
        response = client.post("/score", {"image": "not base64!!", "text": "q"})
        if response.status_code == 501:
            raise _Unconfigured("/score")
        assert 400 <= response.status_code < 500, (
            f"malformed image should be a 4xx, got {response.status_code}"
        )

    check("score: returns a finite number", check_score)
    check("score: deterministic for identical payloads", check_score_deterministic)
    check("score: rejects malformed payloads", check_score_rejects_garbage)

    # detect -----------------------------------------------------------------
    def check_detect(threshold: float):
        body = post_ok("/detect", {"image": b64_a, "conf": threshold})
        detections = body.get("detections")
        assert isinstance(detections, list), f"detections must be a list: {body}"
        for det in detections:
            assert isinstance(det, dict), f"detection entries must be objects: {det}"
            assert _is_number(det.get("conf")), f"conf must be a number: {det}"
            assert det["conf"] >= threshold, (
                f"detection conf {det['conf']} below requested threshold {threshold}"
            )
            assert isinstance(det.get("label"), str), f"label must be a string: {det}"
            assert _box_ok(det.get("box"), image_a), f"box must be in-bounds half-open ints: {det}"
        return f"{len(detections)} detections at conf>={threshold}"

    def check_detect_threshold_monotone():
        low = post_ok("/detect", {"image": b64_a, "conf": 0.25}).get("detections", [])
        high = post_ok("/detect", {"image": b64_a, "conf": 0.75}).get("detections", [])
        low_keys = [(tuple(d["box"]), d["label"]) for d in low]
        for det in high:
            key = (tuple(det["box"]), det["label"])
            assert key in low_keys, f"{key} appears at conf 0.75 but not at 0.25"

    check("detect: honors the confidence threshold", lambda: check_detect(0.25))
    check("detect: raising the threshold only removes detections", check_detect_threshold_monotone)

    # segment ----------------------------------------------------------------
    def check_segment():
        body = post_ok("/segment", {"image": b64_a})
        boxes = body.get("boxes")
        assert isinstance(boxes, list), f"boxes must be a list: {body}"
        for box in boxes:
            assert _box_ok(box, image_a), f"segment box out of bounds or malformed: {box}"
        return f"{len(boxes)} covering boxes"

    check("segment: returns in-bounds covering boxes", check_segment)

    # vqa ----------------------------------------------------------------------
    def check_vqa_single():
        body = post_ok("/vqa", {"images": [b64_a], "question": PROBE_QUESTION})
        assert isinstance(body.get("answer"), str), f"answer must be a string: {body}"
        score = body.get("answer_score")
        assert score is None or _is_number(score), f"answer_score must be number or null: {body}"
        return f"answer={body['answer']!r}"

    def check_vqa_pair():
        body = post_ok("/vqa", {"images": [b64_a, b64_b], "question": PROBE_QUESTION})
        assert isinstance(body.get("answer"), str), f"answer must be a string: {body}"

    def check_vqa_deterministic():
        payload = {"images": [b64_a, b64_b], "question": PROBE_QUESTION}
        first = post_ok("/vqa", payload).get("answer")
        second = post_ok("/vqa", payload).get("answer")
        assert first == second, f"same payload answered {first!r} then {second!r}"

    check("vqa: answers a single image", check_vqa_single)
    check("vqa: accepts (original, crop) image pairs", check_vqa_pair)
    check("vqa: deterministic for identical payloads", check_vqa_deterministic)

    # saliency -------------------------------------------------------------------
    def check_saliency():
        body = post_ok("/saliency", {"image": b64_a, "question": PROBE_QUESTION})
        rows, cols, values = body.get("rows"), body.get("cols"), body.get("values")
        assert isinstance(rows, int) and isinstance(cols, int) and rows > 0 and cols > 0, (
            f"rows/cols must be positive ints: {body.get('rows')}x{body.get('cols')}"
        )
        assert isinstance(values, list) and len(values) == rows * cols, (
            f"values must hold rows*cols numbers, got {len(values or [])}"
        )
        assert all(_is_number(v) and v >= 0 for v in values), "values must be finite and >= 0"
        return f"{rows}x{cols} grid"

    def check_saliency_grid_fixed():
        first = post_ok("/saliency", {"image": b64_a, "question": PROBE_QUESTION})
        second = post_ok("/saliency", {"image": b64_b, "question": PROBE_QUESTION})
        assert (first.get("rows"), first.get("cols")) == (second.get("rows"), second.get("cols")), (
            "grid dimensions must be fixed per server identity"
        )

    check("saliency: returns a non-negative grid", check_saliency)
    check("saliency: grid size does not depend on the image", check_saliency_grid_fixed)

    return results


class _Unconfigured(Exception):
    pass


def summarize(results: list[CheckResult]) -> tuple[int, int]:
    passed = sum(1 for r in results if r.passed)
    return passed, len(results)
