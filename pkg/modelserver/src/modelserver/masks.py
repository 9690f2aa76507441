"""Mask-to-box conversion: segmentation masks never cross the wire."""

from __future__ import annotations

import numpy as np

Box = tuple[int, int, int, int]


def covering_box(mask: np.ndarray) -> Box | None:
    """Smallest half-open [x0, x1) x [y0, y1) box covering a boolean mask.

    Returns None for an empty mask.
    """
    if mask.ndim != 2:
        raise ValueError(f"mask must be 2-D, got shape {mask.shape}")
    rows = np.flatnonzero(mask.any(axis=1))
    cols = np.flatnonzero(mask.any(axis=0))
    if rows.size == 0 or cols.size == 0:
        return None
    y0, y1 = int(rows[0]), int(rows[-1]) + 1
    x0, x1 = int(cols[0]), int(cols[-1]) + 1
    return (x0, y0, x1, y1)


def scale_box(box: Box, factor: float, width: int, height: int) -> Box | None:
    """Scale a box back to original coordinates, clamped; None if it collapses."""
    x0 = min(max(int(round(box[0] * factor)), 0), width)
    y0 = min(max(int(round(box[1] * factor)), 0), height)
    x1 = min(max(int(round(box[2] * factor)), 0), width)
    y1 = min(max(int(round(box[3] * factor)), 0), height)
    if x0 >= x1 or y0 >= y1:
        return None
    return (x0, y0, x1, y1)
