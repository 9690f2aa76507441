"""Whole-image segmentation over a SAM-style checkpoint."""

from __future__ import annotations

import numpy as np
from PIL import Image

from .base import EngineError, SegmentEngine


class SamSegmentEngine(SegmentEngine):
    """options: checkpoint (weights path), model_type (default vit_b), device."""

    def __init__(self, options: dict | None = None):
        options = options or {}
        try:
            from segment_anything import SamAutomaticMaskGenerator, sam_model_registry
        except ImportError as exc:
            raise EngineError(f"sam engine needs the segment_anything package: {exc}") from exc
        checkpoint = options.get("checkpoint")
        if not checkpoint:
            raise EngineError("sam engine needs options.checkpoint pointing at weights")
        model_type = options.get("model_type", "vit_b")
        try:
            sam = sam_model_registry[model_type](checkpoint=checkpoint)
            sam.to(options.get("device", "cpu"))
        except Exception as exc:
            raise EngineError(f"cannot load SAM checkpoint {checkpoint!r}: {exc}") from exc
        self.generator = SamAutomaticMaskGenerator(sam)

    def segment(self, image: Image.Image) -> list[np.ndarray]:
        array = np.asarray(image.convert("RGB"))
        records = self.generator.generate(array)
        return [record["segmentation"].astype(bool) for record in records]
