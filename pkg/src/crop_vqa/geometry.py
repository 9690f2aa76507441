"""Pixel-space rectangles, images, and patch grids.

Everything in this module is pure arithmetic over immutable values.
Rectangles are half-open integer boxes ``[x0, x1) x [y0, y1)``, images are
row-major RGB8 buffers, and patch maps are small non-negative grids. All
real-to-pixel conversions share a single rounding rule (round half up) so
crop geometry is reproducible bit for bit across runs and machines.
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Union

import numpy as np

SIDES = ("top", "bottom", "left", "right")

Real = Union[int, float, Fraction]


class GeometryError(ValueError):
    """Base class for rectangle/image arithmetic failures."""


class BoundsError(GeometryError):
    """A rectangle reaches outside its reference frame."""


class DegenerateRectError(GeometryError):
    """An operation would produce a rectangle thinner than one pixel."""


def round_half_up(value: Real) -> int:
    """Round to the nearest integer with ties going up (0.5 -> 1, 1.5 -> 2)."""
    if isinstance(value, Fraction):
        return int((2 * value + 1) // 2)
    return math.floor(value + 0.5)


def _as_fraction(ratio: Real) -> Fraction:
    # Float ratios are read back through their shortest decimal repr, so a
    # config value of 0.9 means exactly 9/10 and half-up cuts stay exact.
    if isinstance(ratio, Fraction):
        return ratio
    return Fraction(str(ratio))


@dataclass(frozen=True)
class Rect:
    """Half-open pixel rectangle ``[x0, x1) x [y0, y1)``, at least 1x1."""

    x0: int
    y0: int
    x1: int
    y1: int

    def __post_init__(self) -> None:
        for name in ("x0", "y0", "x1", "y1"):
            value = getattr(self, name)
            if not isinstance(value, int) or isinstance(value, bool):
                raise GeometryError(f"rect coordinate {name} must be an int, got {value!r}")
        if self.x0 < 0 or self.y0 < 0:
            raise GeometryError(f"rect origin must be non-negative: {self.as_tuple()}")
        if self.x0 >= self.x1 or self.y0 >= self.y1:
            raise DegenerateRectError(f"rect must span at least one pixel: {self.as_tuple()}")

    @property
    def width(self) -> int:
        return self.x1 - self.x0

    @property
    def height(self) -> int:
        return self.y1 - self.y0

    def as_tuple(self) -> tuple[int, int, int, int]:
        return (self.x0, self.y0, self.x1, self.y1)

    def contains(self, other: "Rect") -> bool:
        return (
            self.x0 <= other.x0
            and self.y0 <= other.y0
            and other.x1 <= self.x1
            and other.y1 <= self.y1
        )

    def intersection(self, other: "Rect") -> "Rect | None":
        x0 = max(self.x0, other.x0)
        y0 = max(self.y0, other.y0)
        x1 = min(self.x1, other.x1)
        y1 = min(self.y1, other.y1)
        if x0 >= x1 or y0 >= y1:
            return None
        return Rect(x0, y0, x1, y1)


def area(rect: Rect) -> int:
    """Area in pixels squared."""
    return rect.width * rect.height


def iou(a: Rect, b: Rect) -> float:
    """Intersection over union; 0.0 for disjoint rects, 1.0 iff equal."""
    inter = a.intersection(b)
    if inter is None:
        return 0.0
    inter_area = area(inter)
    union_area = area(a) + area(b) - inter_area
    return inter_area / union_area


@dataclass(frozen=True)
class Image:
    """Immutable RGB8 image: ``pixels`` is a row-major ``width*height*3`` buffer."""

    width: int
    height: int
    pixels: bytes

    def __post_init__(self) -> None:
        if self.width < 1 or self.height < 1:
            raise GeometryError(f"image must be at least 1x1, got {self.width}x{self.height}")
        expected = self.width * self.height * 3
        if len(self.pixels) != expected:
            raise GeometryError(
                f"pixel buffer has {len(self.pixels)} bytes, expected {expected} "
                f"for {self.width}x{self.height} RGB8"
            )

    @classmethod
    def from_array(cls, array: np.ndarray) -> "Image":
        """Build from an ``(height, width, 3)`` uint8 array."""
        if array.ndim != 3 or array.shape[2] != 3:
            raise GeometryError(f"expected (h, w, 3) array, got shape {array.shape}")
        arr = np.ascontiguousarray(array, dtype=np.uint8)
        return cls(width=arr.shape[1], height=arr.shape[0], pixels=arr.tobytes())

    def to_array(self) -> np.ndarray:
        """Read-only ``(height, width, 3)`` uint8 view of the pixel buffer."""
        return np.frombuffer(self.pixels, dtype=np.uint8).reshape(self.height, self.width, 3)

    def full_rect(self) -> Rect:
        return Rect(0, 0, self.width, self.height)

    def pixel(self, x: int, y: int) -> tuple[int, int, int]:
        if not (0 <= x < self.width and 0 <= y < self.height):
            raise BoundsError(f"pixel ({x}, {y}) outside {self.width}x{self.height}")
        offset = (y * self.width + x) * 3
        r, g, b = self.pixels[offset : offset + 3]
        return (r, g, b)

    def content_hash(self) -> str:
        """Stable digest of dimensions plus raw pixels; used for cache keys."""
        digest = hashlib.sha256()
        digest.update(f"{self.width}x{self.height}:".encode("ascii"))
        digest.update(self.pixels)
        return digest.hexdigest()


def rel_size(rect: Rect, image: "Image | tuple[int, int]") -> float:
    """Fraction of the image covered by ``rect``, in (0, 1].

    ``image`` may be an :class:`Image` or a ``(width, height)`` pair.
    """
    if isinstance(image, Image):
        width, height = image.width, image.height
    else:
        width, height = image
    frame = Rect(0, 0, width, height)
    if not frame.contains(rect):
        raise BoundsError(f"rect {rect.as_tuple()} outside {width}x{height} image")
    return area(rect) / (width * height)


def shrink_side(rect: Rect, side: str, ratio: Real) -> Rect:
    """Cut ``(1 - ratio)`` of the rect's extent off one named side.

    The cut coordinate is computed exactly and rounded half up. A cut that
    removes nothing after rounding, or that would leave less than one pixel,
    raises :class:`DegenerateRectError`.
    """
    if side not in SIDES:
        raise GeometryError(f"side must be one of {SIDES}, got {side!r}")
    frac = _as_fraction(ratio)
    if not (0 < frac < 1):
        raise GeometryError(f"ratio must be in (0, 1), got {ratio!r}")

    cut_w = (1 - frac) * rect.width
    cut_h = (1 - frac) * rect.height
    x0, y0, x1, y1 = rect.as_tuple()
    if side == "top":
        y0 = round_half_up(y0 + cut_h)
    elif side == "bottom":
        y1 = round_half_up(y1 - cut_h)
    elif side == "left":
        x0 = round_half_up(x0 + cut_w)
    else:
        x1 = round_half_up(x1 - cut_w)

    if (x0, y0, x1, y1) == rect.as_tuple():
        raise DegenerateRectError(
            f"{side} cut at ratio {ratio} removes no pixels from {rect.as_tuple()}"
        )
    if x0 >= x1 or y0 >= y1:
        raise DegenerateRectError(
            f"{side} cut at ratio {ratio} collapses {rect.as_tuple()} below one pixel"
        )
    return Rect(x0, y0, x1, y1)


def crop_image(image: Image, rect: Rect) -> Image:
    """Copy the pixels under ``rect`` into a new image of the rect's size."""
    if not image.full_rect().contains(rect):
        raise BoundsError(
            f"crop rect {rect.as_tuple()} outside {image.width}x{image.height} image"
        )
    sub = image.to_array()[rect.y0 : rect.y1, rect.x0 : rect.x1]
    return Image(width=rect.width, height=rect.height, pixels=sub.tobytes())


@dataclass(frozen=True)
class PatchMap:
    """Row-major grid of non-negative saliency values."""

    rows: int
    cols: int
    values: tuple[float, ...]

    def __post_init__(self) -> None:
        if self.rows < 1 or self.cols < 1:
            raise GeometryError(f"grid must be at least 1x1, got {self.rows}x{self.cols}")
        if len(self.values) != self.rows * self.cols:
            raise GeometryError(
                f"grid has {len(self.values)} values, expected {self.rows * self.cols}"
            )
        for v in self.values:
            if not math.isfinite(v) or v < 0:
                raise GeometryError(f"grid values must be finite and non-negative, got {v!r}")

    def value_at(self, row: int, col: int) -> float:
        if not (0 <= row < self.rows and 0 <= col < self.cols):
            raise BoundsError(f"cell ({row}, {col}) outside {self.rows}x{self.cols} grid")
        return self.values[row * self.cols + col]

    def max_value(self) -> float:
        return max(self.values)


def patch_to_pixel_rect(pm_rect: Rect, patch_map: PatchMap, image: Image) -> Rect:
    """Scale a grid-coordinate rect (cells as half-open columns/rows) to pixels.

    Cell ``(row, col)`` spans ``[col*W/cols, (col+1)*W/cols)`` horizontally and
    ``[row*H/rows, (row+1)*H/rows)`` vertically; boundaries round half up and
    are clamped to the image.
    """
    grid_frame = Rect(0, 0, patch_map.cols, patch_map.rows)
    if not grid_frame.contains(pm_rect):
        raise BoundsError(
            f"grid rect {pm_rect.as_tuple()} outside {patch_map.rows}x{patch_map.cols} grid"
        )
    fx = Fraction(image.width, patch_map.cols)
    fy = Fraction(image.height, patch_map.rows)
    x0 = min(max(round_half_up(pm_rect.x0 * fx), 0), image.width)
    x1 = min(max(round_half_up(pm_rect.x1 * fx), 0), image.width)
    y0 = min(max(round_half_up(pm_rect.y0 * fy), 0), image.height)
    y1 = min(max(round_half_up(pm_rect.y1 * fy), 0), image.height)
    if x0 >= x1 or y0 >= y1:
        raise DegenerateRectError(
            f"grid rect {pm_rect.as_tuple()} maps to an empty pixel rect on "
            f"{image.width}x{image.height}"
        )
    return Rect(x0, y0, x1, y1)
