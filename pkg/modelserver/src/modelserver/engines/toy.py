"""Deterministic engines with no model weights.

These exist so the server can run hermetically: protocol conformance, cache
correctness, and harness integration are all testable without checkpoints.
The outputs are derived from pixel statistics and text hashes; they are
meaningless semantically but stable bit for bit.
"""

from __future__ import annotations

import hashlib
import time
from typing import Optional, Sequence

import numpy as np
from PIL import Image
from scipy import ndimage

from .base import Box, DetectEngine, SaliencyEngine, ScoreEngine, SegmentEngine, VqaEngine

_ANSWER_VOCAB = (
    "yes", "no", "red", "blue", "green", "white", "black", "1", "2", "3", "sign", "left",
)


def _maybe_sleep(options: dict) -> None:
    delay = float(options.get("load_delay_s", 0.0))
    if delay > 0:
        time.sleep(delay)


def _gray(image: Image.Image) -> np.ndarray:
    return np.asarray(image.convert("L"), dtype=np.float64)


def _text_vector(text: str, size: int) -> np.ndarray:
    seed = int.from_bytes(hashlib.sha256(text.encode("utf-8")).digest()[:8], "big")
    rng = np.random.default_rng(seed)
    vec = rng.standard_normal(size)
    return vec / (np.linalg.norm(vec) + 1e-12)


class ToyScoreEngine(ScoreEngine):
    """Cosine between an 8x8 luminance sketch and a text-seeded direction."""

    def __init__(self, options: dict | None = None):
        _maybe_sleep(options or {})

    def score(self, image: Image.Image, text: str) -> float:
        sketch = np.asarray(
            image.convert("L").resize((8, 8), Image.BILINEAR), dtype=np.float64
        ).ravel()
        sketch = sketch - sketch.mean()
        norm = np.linalg.norm(sketch)
        if norm < 1e-9:
            return 0.0
        return float(np.dot(sketch / norm, _text_vector(text, 64)))


class ToyDetectEngine(DetectEngine):
    """Grid-cell proposals ranked by local contrast."""

    def __init__(self, options: dict | None = None):
        options = options or {}
        _maybe_sleep(options)
        self.grid = int(options.get("grid", 3))

    def detect(self, image: Image.Image, conf_threshold: float) -> list[tuple[Box, float, str]]:
        gray = _gray(image)
        height, width = gray.shape
        spread = max(float(gray.std()), 1e-9)
        proposals: list[tuple[Box, float, str]] = []
        for row in range(self.grid):
            for col in range(self.grid):
                x0 = col * width // self.grid
                x1 = (col + 1) * width // self.grid if col < self.grid - 1 else width
                y0 = row * height // self.grid
                y1 = (row + 1) * height // self.grid if row < self.grid - 1 else height
                if x0 >= x1 or y0 >= y1:
                    continue
                contrast = float(gray[y0:y1, x0:x1].std()) / spread
                conf = max(0.0, min(1.0, contrast))
                if conf >= conf_threshold:
                    proposals.append(((x0, y0, x1, y1), conf, "region"))
        proposals.sort(key=lambda p: (-p[1], p[0]))
        return proposals


class ToySegmentEngine(SegmentEngine):
    """Connected components of coarsely quantized luminance."""

    def __init__(self, options: dict | None = None):
        options = options or {}
        _maybe_sleep(options)
        self.levels = int(options.get("levels", 4))
        self.max_masks = int(options.get("max_masks", 16))
        self.min_area_fraction = float(options.get("min_area_fraction", 0.002))

    def segment(self, image: Image.Image) -> list[np.ndarray]:
        gray = _gray(image)
        quantized = np.clip((gray / 256.0 * self.levels).astype(np.int32), 0, self.levels - 1)
        min_area = max(1, int(self.min_area_fraction * gray.size))
        masks: list[tuple[int, np.ndarray]] = []
        for level in range(self.levels):
            labeled, count = ndimage.label(quantized == level)
            for index in range(1, count + 1):
                mask = labeled == index
                population = int(mask.sum())
                if population >= min_area:
                    masks.append((population, mask))
        masks.sort(key=lambda entry: -entry[0])
        return [mask for _, mask in masks[: self.max_masks]]


class ToyVqaEngine(VqaEngine):
    """Hash of (images, question) picks from a small answer vocabulary.

    Image order matters: the digest folds in each image's bytes in sequence,
    mirroring how a real model's token concatenation is order-sensitive.
    """

    def __init__(self, options: dict | None = None):
        options = options or {}
        _maybe_sleep(options)
        self.vocab = tuple(options.get("vocab", _ANSWER_VOCAB))

    def answer(self, images: Sequence[Image.Image], question: str) -> tuple[str, Optional[float]]:
        digest = hashlib.sha256(question.encode("utf-8"))
        for image in images:
            digest.update(f"{image.width}x{image.height}".encode("ascii"))
            digest.update(image.convert("RGB").tobytes())
        raw = digest.digest()
        answer = self.vocab[raw[0] % len(self.vocab)]
        score = raw[1] / 255.0
        return answer, score


class ToySaliencyEngine(SaliencyEngine):
    """Gradient-magnitude map pooled onto a fixed grid."""

    def __init__(self, options: dict | None = None):
        options = options or {}
        _maybe_sleep(options)
        self.grid = int(options.get("grid", 16))

    def saliency(self, image: Image.Image, question: str) -> tuple[int, int, list[float]]:
        gray = _gray(image)
        gy, gx = np.gradient(gray)
        magnitude = np.abs(gx) + np.abs(gy)
        rows = cols = self.grid
        height, width = magnitude.shape
        values = []
        for row in range(rows):
            for col in range(cols):
                y0, y1 = row * height // rows, max((row + 1) * height // rows, row * height // rows + 1)
                x0, x1 = col * width // cols, max((col + 1) * width // cols, col * width // cols + 1)
                y1, x1 = min(y1, height), min(x1, width)
                cell = magnitude[y0:y1, x0:x1]
                values.append(float(cell.mean()) if cell.size else 0.0)
        return rows, cols, values
