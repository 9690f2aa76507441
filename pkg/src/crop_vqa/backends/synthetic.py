"""Deterministic synthetic backends for tests, demos, and hermetic runs.

The central trick: synthetic images encode each pixel's original frame
coordinates in its color channels (see :func:`coordinate_image`). Any crop of
such an image can then be located inside the frame it was cut from by reading
a single pixel, which lets a plain ``score(image, text)`` scorer act as an
exact oracle over crop rectangles without any side channel.
"""

from __future__ import annotations

import hashlib
import json
import threading
import time
from typing import Callable, Mapping, Optional, Sequence

import numpy as np

from ..geometry import Image, PatchMap, Rect, iou
from .interfaces import Detection, ProtocolError, VqaAnswer

# (x // 256) and (y // 256) share the blue channel, 4 bits each.
COORDINATE_LIMIT = 4096


def coordinate_image(width: int, height: int) -> Image:
    """Image whose pixel at (x, y) stores x and y in its RGB channels."""
    if width > COORDINATE_LIMIT or height > COORDINATE_LIMIT:
        raise ValueError(f"coordinate images support at most {COORDINATE_LIMIT} per side")
    xs = np.arange(width, dtype=np.uint16)
    ys = np.arange(height, dtype=np.uint16)
    gx, gy = np.meshgrid(xs, ys)
    arr = np.empty((height, width, 3), dtype=np.uint8)
    arr[:, :, 0] = gx % 256
    arr[:, :, 1] = gy % 256
    arr[:, :, 2] = (gx // 256) + 16 * (gy // 256)
    return Image.from_array(arr)


def frame_origin(image: Image) -> tuple[int, int]:
    """Original-frame coordinates of a coordinate image's top-left pixel."""
    r, g, b = image.pixel(0, 0)
    x = (b % 16) * 256 + r
    y = (b // 16) * 256 + g
    return (x, y)


def frame_rect(image: Image) -> Rect:
    """Where this (possibly cropped) coordinate image sits in its frame."""
    x, y = frame_origin(image)
    return Rect(x, y, x + image.width, y + image.height)


def _digest(payload: object) -> str:
    return hashlib.sha256(
        json.dumps(payload, sort_keys=True, default=str).encode("utf-8")
    ).hexdigest()[:12]


class PlantedTargetScorer:
    """Scores a crop by its overlap with a hidden target rectangle.

    The score is ``|crop & target| / |crop | target|``, so the maximum 1.0 is
    reached exactly when the crop equals the target. Images must come from
    :func:`coordinate_image` (or crops of one).
    """

    def __init__(self, target: Rect):
        self.target = target
        self._identity = f"planted-target:{','.join(map(str, target.as_tuple()))}"

    @property
    def identity(self) -> str:
        return self._identity

    def score(self, image: Image, text: str) -> float:
        return iou(frame_rect(image), self.target)


class PlantedSuiteScorer:
    """Per-question planted targets, looked up by the question text."""

    def __init__(self, targets: Mapping[str, Rect]):
        self._targets = dict(targets)
        self._identity = "planted-suite:" + _digest(
            {q: t.as_tuple() for q, t in self._targets.items()}
        )

    @property
    def identity(self) -> str:
        return self._identity

    def score(self, image: Image, text: str) -> float:
        target = self._targets.get(text)
        if target is None:
            raise ProtocolError(f"no planted target for question {text!r}")
        return iou(frame_rect(image), target)


class ConstantScorer:
    """Returns the same score for every input; useful for tie-break tests."""

    def __init__(self, value: float = 0.5):
        self.value = value

    @property
    def identity(self) -> str:
        return f"constant:{self.value}"

    def score(self, image: Image, text: str) -> float:
        return self.value


class CountingScorer:
    """Wraps a scorer and counts calls (thread-safe)."""

    def __init__(self, inner):
        self._inner = inner
        self._lock = threading.Lock()
        self.calls = 0

    @property
    def identity(self) -> str:
        return self._inner.identity

    def score(self, image: Image, text: str) -> float:
        with self._lock:
            self.calls += 1
        return self._inner.score(image, text)


class DelayScorer:
    """Adds a fixed delay before delegating; for timing-harness tests."""

    def __init__(self, inner, delay_s: float):
        self._inner = inner
        self.delay_s = delay_s

    @property
    def identity(self) -> str:
        return self._inner.identity

    def score(self, image: Image, text: str) -> float:
        time.sleep(self.delay_s)
        return self._inner.score(image, text)


class PreferSideScorer:
    """Adversarial scorer that always ranks one shrink direction highest.

    Scores a crop by how far the named edge has moved inward from the frame,
    so the preferred side's shrink strictly wins every iteration.
    """

    def __init__(self, side: str, frame: Rect):
        if side not in ("top", "bottom", "left", "right"):
            raise ValueError(f"unknown side {side!r}")
        self.side = side
        self.frame = frame

    @property
    def identity(self) -> str:
        return f"prefer-side:{self.side}"

    def score(self, image: Image, text: str) -> float:
        rect = frame_rect(image)
        if self.side == "left":
            return float(rect.x0 - self.frame.x0)
        if self.side == "right":
            return float(self.frame.x1 - rect.x1)
        if self.side == "top":
            return float(rect.y0 - self.frame.y0)
        return float(self.frame.y1 - rect.y1)


class ScriptedVqaModel:
    """Answer lookup table, optionally gated on crop quality.

    Without a ``planted`` map the scripted answer is returned as-is. With one,
    the scripted answer is returned only when the last supplied image (the
    crop; the original when only one image is given) overlaps the planted box
    with IoU at or above ``iou_threshold``; otherwise ``fallback_answer``.
    """

    def __init__(
        self,
        answers: Mapping[str, str],
        planted: Optional[Mapping[str, Rect]] = None,
        iou_threshold: float = 0.5,
        fallback_answer: str = "unknown",
    ):
        self._answers = dict(answers)
        self._planted = dict(planted) if planted else None
        self.iou_threshold = iou_threshold
        self.fallback_answer = fallback_answer
        self._identity = "scripted-vqa:" + _digest(
            {
                "answers": self._answers,
                "planted": {q: t.as_tuple() for q, t in (self._planted or {}).items()},
                "threshold": iou_threshold,
                "fallback": fallback_answer,
            }
        )

    @property
    def identity(self) -> str:
        return self._identity

    def answer(self, images: Sequence[Image], question: str) -> VqaAnswer:
        if not images:
            raise ProtocolError("at least one image is required")
        scripted = self._answers.get(question)
        if scripted is None:
            raise ProtocolError(f"no scripted answer for question {question!r}")
        if self._planted is None:
            return VqaAnswer(text=scripted)
        target = self._planted.get(question)
        if target is None:
            raise ProtocolError(f"no planted box for question {question!r}")
        overlap = iou(frame_rect(images[-1]), target)
        if overlap >= self.iou_threshold:
            return VqaAnswer(text=scripted, score=overlap)
        return VqaAnswer(text=self.fallback_answer, score=overlap)


class StaticDetector:
    """Fixed detection list, filtered by the requested confidence threshold."""

    def __init__(self, detections: Sequence[Detection], name: str = "static-detector"):
        self._detections = list(detections)
        self._identity = f"{name}:" + _digest(
            [(d.box.as_tuple(), d.confidence, d.label) for d in self._detections]
        )

    @property
    def identity(self) -> str:
        return self._identity

    def detect(self, image: Image, confidence_threshold: float) -> list[Detection]:
        frame = image.full_rect()
        return [
            d
            for d in self._detections
            if d.confidence >= confidence_threshold and frame.contains(d.box)
        ]


class ImageKeyedDetector:
    """Per-image detections, looked up by the image's content hash.

    Lets hermetic runs hand each question's image its own proposals through
    the ordinary detector interface.
    """

    def __init__(self, by_image_hash: Mapping[str, Sequence[Detection]]):
        self._by_hash = {k: list(v) for k, v in by_image_hash.items()}
        self._identity = "keyed-detector:" + _digest(sorted(self._by_hash))

    @property
    def identity(self) -> str:
        return self._identity

    def detect(self, image: Image, confidence_threshold: float) -> list[Detection]:
        detections = self._by_hash.get(image.content_hash())
        if detections is None:
            raise ProtocolError("no planted detections for this image")
        return [d for d in detections if d.confidence >= confidence_threshold]


class StaticSegmenter:
    """Fixed covering-box list, restricted to boxes inside the image."""

    def __init__(self, boxes: Sequence[Rect], name: str = "static-segmenter"):
        self._boxes = list(boxes)
        self._identity = f"{name}:" + _digest([b.as_tuple() for b in self._boxes])

    @property
    def identity(self) -> str:
        return self._identity

    def segment(self, image: Image) -> list[Rect]:
        frame = image.full_rect()
        return [b for b in self._boxes if frame.contains(b)]


class ImageKeyedSegmenter:
    """Per-image covering boxes, looked up by content hash."""

    def __init__(self, by_image_hash: Mapping[str, Sequence[Rect]]):
        self._by_hash = {k: list(v) for k, v in by_image_hash.items()}
        self._identity = "keyed-segmenter:" + _digest(sorted(self._by_hash))

    @property
    def identity(self) -> str:
        return self._identity

    def segment(self, image: Image) -> list[Rect]:
        boxes = self._by_hash.get(image.content_hash())
        if boxes is None:
            raise ProtocolError("no planted boxes for this image")
        return list(boxes)


class StaticSaliency:
    """Fixed patch map, or a callable producing one per (image, question)."""

    def __init__(
        self,
        patch_map: Optional[PatchMap] = None,
        fn: Optional[Callable[[Image, str], PatchMap]] = None,
        name: str = "static-saliency",
    ):
        if (patch_map is None) == (fn is None):
            raise ValueError("provide exactly one of patch_map or fn")
        self._patch_map = patch_map
        self._fn = fn
        self._identity = name

    @property
    def identity(self) -> str:
        return self._identity

    def saliency(self, image: Image, question: str) -> PatchMap:
        if self._patch_map is not None:
            return self._patch_map
        assert self._fn is not None
        return self._fn(image, question)


def planted_saliency(
    targets: Mapping[str, Rect], grid: int = 16, background: float = 0.05
) -> StaticSaliency:
    """Saliency source that lights up the grid cells overlapping the target."""

    targets = dict(targets)

    def fn(image: Image, question: str) -> PatchMap:
        target = targets.get(question)
        if target is None:
            raise ProtocolError(f"no planted target for question {question!r}")
        values = []
        for row in range(grid):
            for col in range(grid):
                cell = Rect(
                    col * image.width // grid,
                    row * image.height // grid,
                    max((col + 1) * image.width // grid, col * image.width // grid + 1),
                    max((row + 1) * image.height // grid, row * image.height // grid + 1),
                )
                values.append(1.0 if cell.intersection(target) is not None else background)
        return PatchMap(rows=grid, cols=grid, values=tuple(values))

    name = "planted-saliency:" + _digest({q: t.as_tuple() for q, t in targets.items()})
    return StaticSaliency(fn=fn, name=name)
