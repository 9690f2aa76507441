"""Question-guided visual cropping engine and zero-shot VQA evaluation harness."""

__version__ = "0.1.0"

from .geometry import Image, PatchMap, Rect, area, crop_image, iou, rel_size, shrink_side
from .strategies import CropResult, StrategyConfig, apply_strategy

__all__ = [
    "CropResult",
    "Image",
    "PatchMap",
    "Rect",
    "StrategyConfig",
    "apply_strategy",
    "area",
    "crop_image",
    "iou",
    "rel_size",
    "shrink_side",
    "__version__",
]
