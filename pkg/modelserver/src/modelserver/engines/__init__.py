"""Engine registry: capability + spec -> loaded engine."""

from __future__ import annotations

from ..config import EngineSpec
from .base import (
    DetectEngine,
    EngineError,
    SaliencyEngine,
    ScoreEngine,
    SegmentEngine,
    VqaEngine,
)

# (capability, engine name) -> lazily imported constructor
def _toy(capability: str):
    from . import toy

    return {
        "score": toy.ToyScoreEngine,
        "detect": toy.ToyDetectEngine,
        "segment": toy.ToySegmentEngine,
        "vqa": toy.ToyVqaEngine,
        "saliency": toy.ToySaliencyEngine,
    }[capability]


def _real(capability: str, name: str):
    if name == "clip" and capability == "score":
        from .clip import ClipScoreEngine

        return ClipScoreEngine
    if name == "blip2" and capability == "vqa":
        from .blip2 import Blip2VqaEngine

        return Blip2VqaEngine
    if name == "blip2" and capability == "saliency":
        from .blip2 import Blip2SaliencyEngine

        return Blip2SaliencyEngine
    if name == "yolo" and capability == "detect":
        from .yolo import YoloDetectEngine

        return YoloDetectEngine
    if name == "sam" and capability == "segment":
        from .sam import SamSegmentEngine

        return SamSegmentEngine
    raise EngineError(f"no engine named {name!r} for capability {capability!r}")


def build_engine(capability: str, spec: EngineSpec):
    if spec.engine == "toy":
        constructor = _toy(capability)
    else:
        constructor = _real(capability, spec.engine)
    return constructor(spec.options)


__all__ = [
    "DetectEngine",
    "EngineError",
    "SaliencyEngine",
    "ScoreEngine",
    "SegmentEngine",
    "VqaEngine",
    "build_engine",
]
