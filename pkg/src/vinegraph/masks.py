"""Binary-mask primitives.

Masks are plain 2-D boolean numpy arrays indexed ``[y, x]`` (row, column).
Points are ``(x, y)`` pixel pairs with y growing downward.
"""
from __future__ import annotations

from typing import NamedTuple

import numpy as np
from scipy import ndimage


class MaskError(ValueError):
    """Raised on empty or mismatched masks."""


class Point(NamedTuple):
    x: int
    y: int


class BoundingBox(NamedTuple):
    """Inclusive pixel box."""

    x_min: int
    y_min: int
    x_max: int
    y_max: int

    @property
    def width(self) -> int:
        return self.x_max - self.x_min + 1

    @property
    def height(self) -> int:
        return self.y_max - self.y_min + 1

    def contains(self, p: Point) -> bool:
        return self.x_min <= p.x <= self.x_max and self.y_min <= p.y <= self.y_max

    def expand(self, margin: int, width: int, height: int) -> BoundingBox:
        return BoundingBox(
            max(0, self.x_min - margin),
            max(0, self.y_min - margin),
            min(width - 1, self.x_max + margin),
            min(height - 1, self.y_max + margin),
        )

    def intersects(self, other: BoundingBox) -> bool:
        return not (
            other.x_min > self.x_max
            or other.x_max < self.x_min
            or other.y_min > self.y_max
            or other.y_max < self.y_min
        )

    @property
    def slices(self) -> tuple[slice, slice]:
        return slice(self.y_min, self.y_max + 1), slice(self.x_min, self.x_max + 1)


def as_mask(values, *, copy: bool = False) -> np.ndarray:
    """Validate and coerce ``values`` into a 2-D boolean mask."""
    arr = np.asarray(values)
    if arr.ndim != 2 or arr.shape[0] == 0 or arr.shape[1] == 0:
        raise MaskError(f"mask must be a non-empty 2-D grid, got shape {arr.shape}")
    if arr.dtype != np.bool_:
        if not np.isin(arr, (0, 1)).all():
            raise MaskError("mask values must be 0 or 1")
        return arr.astype(bool)
    return arr.copy() if copy else arr


def empty_mask(width: int, height: int) -> np.ndarray:
    if width <= 0 or height <= 0:
        raise MaskError(f"invalid mask size {width}x{height}")
    return np.zeros((height, width), dtype=bool)


def box_mask(box: BoundingBox, width: int, height: int) -> np.ndarray:
    """Filled mask of an inclusive box, clipped to the image."""
    mask = empty_mask(width, height)
    clipped = BoundingBox(
        max(0, box.x_min), max(0, box.y_min), min(width - 1, box.x_max), min(height - 1, box.y_max)
    )
    if clipped.x_min <= clipped.x_max and clipped.y_min <= clipped.y_max:
        mask[clipped.slices] = True
    return mask


def square_dilate(mask: np.ndarray, radius: int) -> np.ndarray:
    """Unchecked square dilation (separable running maximum, zero outside)."""
    return ndimage.maximum_filter(mask, size=2 * radius + 1, mode="constant", cval=0)


def dilate(mask: np.ndarray, radius: int) -> np.ndarray:
    """Dilation by a (2*radius+1) square, clipped at the borders."""
    if radius < 1:
        raise MaskError(f"dilation radius must be >= 1, got {radius}")
    mask = as_mask(mask)
    if not mask.any():
        return np.zeros_like(mask)
    return square_dilate(mask, radius)


def erode(mask: np.ndarray, radius: int) -> np.ndarray:
    """Erosion by a (2*radius+1) square; pixels outside the image count as set."""
    if radius < 1:
        raise MaskError(f"erosion radius must be >= 1, got {radius}")
    return ndimage.minimum_filter(as_mask(mask), size=2 * radius + 1, mode="constant", cval=1)


def _check_same_shape(a: np.ndarray, b: np.ndarray) -> None:
    if a.shape != b.shape:
        raise MaskError(f"mask dimensions differ: {a.shape[::-1]} vs {b.shape[::-1]}")


def intersection(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    a, b = as_mask(a), as_mask(b)
    _check_same_shape(a, b)
    return a & b


def nonzero_indices(mask: np.ndarray) -> list[Point]:
    """Set pixels in row-major order."""
    ys, xs = np.nonzero(as_mask(mask))
    return [Point(int(x), int(y)) for y, x in zip(ys, xs)]


def bbox_of(mask: np.ndarray) -> BoundingBox:
    mask = as_mask(mask)
    rows = np.flatnonzero(mask.any(axis=1))
    if rows.size == 0:
        raise MaskError("empty mask has no bounding box")
    cols = np.flatnonzero(mask.any(axis=0))
    return BoundingBox(int(cols[0]), int(rows[0]), int(cols[-1]), int(rows[-1]))


def slot_rows(box: BoundingBox, n_slots: int, k: int) -> tuple[int, int]:
    """Inclusive row range of band ``k`` (1 = top) of ``box``.

    Bands share ``height // n_slots`` rows; the remainder goes to the bottom band.
    """
    if n_slots < 1 or not 1 <= k <= n_slots:
        raise MaskError(f"invalid slot {k} of {n_slots}")
    base = box.height // n_slots
    top = box.y_min + (k - 1) * base
    bottom = box.y_max if k == n_slots else top + base - 1
    return top, bottom


def vertical_slot(mask: np.ndarray, n_slots: int, k: int) -> np.ndarray:
    """Restrict ``mask`` to the k-th horizontal band of its own bounding box."""
    mask = as_mask(mask)
    top, bottom = slot_rows(bbox_of(mask), n_slots, k)
    out = np.zeros_like(mask)
    out[top : bottom + 1] = mask[top : bottom + 1]
    return out


def _round_half_up(v: float) -> int:
    return int(np.floor(v + 0.5))


def centroid(mask: np.ndarray) -> Point:
    ys, xs = np.nonzero(as_mask(mask))
    if xs.size == 0:
        raise MaskError("empty mask has no centroid")
    return Point(_round_half_up(xs.mean()), _round_half_up(ys.mean()))


def nearest_set_pixel(mask: np.ndarray, p: Point) -> Point:
    """Set pixel closest to ``p``; ties go to the first pixel in row-major order."""
    mask = as_mask(mask)
    h, w = mask.shape
    if 0 <= p.x < w and 0 <= p.y < h and mask[p.y, p.x]:
        return Point(int(p.x), int(p.y))
    ys, xs = np.nonzero(mask)
    if xs.size == 0:
        raise MaskError("empty mask has no nearest pixel")
    d2 = (xs.astype(np.int64) - p.x) ** 2 + (ys.astype(np.int64) - p.y) ** 2
    i = int(np.argmin(d2))
    return Point(int(xs[i]), int(ys[i]))


def area(mask: np.ndarray) -> int:
    return int(np.count_nonzero(mask))
