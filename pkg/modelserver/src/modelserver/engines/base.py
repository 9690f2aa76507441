"""Engine interfaces, one per wire capability.

Engines work on PIL images and plain Python/numpy values; the HTTP layer owns
all encoding, bounds clamping, and mask-to-box conversion. Implementations
must be deterministic in inference mode: same inputs, same outputs.
"""

from __future__ import annotations

from abc import ABC, abstractmethod
from typing import Optional, Sequence

import numpy as np
from PIL import Image

Box = tuple[int, int, int, int]


class EngineError(RuntimeError):
    """Engine could not produce a result for a well-formed request."""


class ScoreEngine(ABC):
    @abstractmethod
    def score(self, image: Image.Image, text: str) -> float: ...


class DetectEngine(ABC):
    @abstractmethod
    def detect(self, image: Image.Image, conf_threshold: float) -> list[tuple[Box, float, str]]:
        """Returns (box, confidence, label) triples at or above the threshold."""


class SegmentEngine(ABC):
    @abstractmethod
    def segment(self, image: Image.Image) -> list[np.ndarray]:
        """Returns boolean masks, each shaped (height, width)."""


class VqaEngine(ABC):
    @abstractmethod
    def answer(self, images: Sequence[Image.Image], question: str) -> tuple[str, Optional[float]]:
        """Returns (answer_text, optional score). Image order is (original, crop)."""


class SaliencyEngine(ABC):
    @abstractmethod
    def saliency(self, image: Image.Image, question: str) -> tuple[int, int, list[float]]:
        """Returns (rows, cols, non-negative row-major values)."""
