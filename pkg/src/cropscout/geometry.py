"""Axis-aligned box geometry: areas, IoU, mask/box conversion, greedy NMS.

Coordinates are continuous reals in image space. When converting between
masks and boxes, pixel index ``p`` covers the interval ``[p, p+1)``, so a
mask that is hot on columns 3..6 yields ``x_min=3, x_max=6``.

Everything here is pure and operates on immutable values; it is safe to
call from any number of concurrent workers.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

__all__ = [
    "BoundingBox",
    "BinaryMask",
    "box_area",
    "iou",
    "box_from_mask",
    "rasterize_box",
    "clamp_box",
    "nms",
    "nms_indices",
]


@dataclass(frozen=True)
class BoundingBox:
    """Axis-aligned box with ``x_min <= x_max`` and ``y_min <= y_max``."""

    x_min: float
    y_min: float
    x_max: float
    y_max: float

    def __post_init__(self) -> None:
        for name in ("x_min", "y_min", "x_max", "y_max"):
            value = float(getattr(self, name))
            if not math.isfinite(value):
                raise ValueError(f"box coordinate {name} is not finite: {value!r}")
            object.__setattr__(self, name, value)
        if self.x_min > self.x_max or self.y_min > self.y_max:
            raise ValueError(
                f"box minima exceed maxima: ({self.x_min}, {self.y_min}, "
                f"{self.x_max}, {self.y_max})"
            )

    @property
    def width(self) -> float:
        return self.x_max - self.x_min

    @property
    def height(self) -> float:
        return self.y_max - self.y_min

    def as_tuple(self) -> tuple[float, float, float, float]:
        return (self.x_min, self.y_min, self.x_max, self.y_max)


class BinaryMask:
    """A height x width grid of per-pixel probabilities in [0, 1].

    The backing array is made read-only so masks can be shared freely
    across threads.
    """

    def __init__(self, values: np.ndarray) -> None:
        values = np.asarray(values, dtype=np.float64)
        if values.ndim != 2 or values.size == 0:
            raise ValueError(f"mask must be a non-empty 2-D array, got shape {values.shape}")
        if not np.all(np.isfinite(values)):
            raise ValueError("mask contains non-finite values")
        if values.min() < 0.0 or values.max() > 1.0:
            raise ValueError("mask values must lie in [0, 1]")
        values = values.copy()
        values.setflags(write=False)
        self._values = values

    @property
    def values(self) -> np.ndarray:
        return self._values

    @property
    def height(self) -> int:
        return int(self._values.shape[0])

    @property
    def width(self) -> int:
        return int(self._values.shape[1])

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, BinaryMask):
            return NotImplemented
        return self._values.shape == other._values.shape and bool(
            np.array_equal(self._values, other._values)
        )

    def __repr__(self) -> str:
        return f"BinaryMask(height={self.height}, width={self.width})"


def box_area(box: BoundingBox) -> float:
    """Area of ``box``; zero for degenerate (line or point) boxes."""
    return box.width * box.height


def iou(a: BoundingBox, b: BoundingBox) -> float:
    """Intersection over union of two boxes, in [0, 1].

    Defined as 0 when the union has zero area (two degenerate boxes), which
    avoids 0/0 and means nothing suppresses nothing.
    """
    ix = min(a.x_max, b.x_max) - max(a.x_min, b.x_min)
    iy = min(a.y_max, b.y_max) - max(a.y_min, b.y_min)
    if ix <= 0.0 or iy <= 0.0:
        return 0.0
    intersection = ix * iy
    union = box_area(a) + box_area(b) - intersection
    if union <= 0.0:
        return 0.0
    return intersection / union


def box_from_mask(mask: BinaryMask, threshold: float = 0.5) -> Optional[BoundingBox]:
    """Tight box over all pixels strictly above ``threshold``.

    Returns the min/max pixel indices of the hot region (index convention:
    a single hot pixel at row 5, col 7 gives box (7, 5, 7, 5)). Returns
    ``None`` when no pixel exceeds the threshold; an empty mask is a normal
    outcome and the caller decides the fallback.
    """
    if not 0.0 < threshold < 1.0:
        raise ValueError(f"threshold must lie in (0, 1), got {threshold}")
    rows, cols = np.nonzero(mask.values > threshold)
    if rows.size == 0:
        return None
    return BoundingBox(
        x_min=float(cols.min()),
        y_min=float(rows.min()),
        x_max=float(cols.max()),
        y_max=float(rows.max()),
    )


def rasterize_box(box: BoundingBox, height: int, width: int) -> BinaryMask:
    """Render ``box`` as a hard 0/1 mask of the given dimensions.

    A pixel index ``p`` is hot when ``min <= p <= max`` on both axes, the
    inverse of :func:`box_from_mask` for integer-coordinate boxes. Boxes
    whose interior contains no integer index produce an all-zero mask.
    """
    if height <= 0 or width <= 0:
        raise ValueError("mask dimensions must be positive")
    values = np.zeros((height, width), dtype=np.float64)
    x0 = max(0, math.ceil(box.x_min))
    y0 = max(0, math.ceil(box.y_min))
    x1 = min(width - 1, math.floor(box.x_max))
    y1 = min(height - 1, math.floor(box.y_max))
    if x0 <= x1 and y0 <= y1:
        values[y0 : y1 + 1, x0 : x1 + 1] = 1.0
    return BinaryMask(values)


def clamp_box(box: BoundingBox, width: int, height: int) -> BoundingBox:
    """Clip ``box`` into the image rectangle [0, width] x [0, height]."""
    if width <= 0 or height <= 0:
        raise ValueError("image dimensions must be positive")

    def clip(v: float, hi: float) -> float:
        return min(max(v, 0.0), hi)

    return BoundingBox(
        x_min=clip(box.x_min, width),
        y_min=clip(box.y_min, height),
        x_max=clip(box.x_max, width),
        y_max=clip(box.y_max, height),
    )


def nms_indices(
    boxes: Sequence[BoundingBox],
    scores: Sequence[float],
    classes: Optional[Sequence[int]] = None,
    iou_threshold: float = 0.5,
    class_aware: bool = True,
) -> list[int]:
    """Greedy non-maximum suppression; returns kept indices, best first.

    Candidates are visited in descending score order (ties keep input
    order, so the lower index wins) and dropped when their IoU with any
    already-kept box exceeds ``iou_threshold``. With ``class_aware`` the
    comparison is restricted to kept boxes of the same class.
    """
    if len(boxes) != len(scores):
        raise ValueError("boxes and scores must have equal length")
    if classes is not None and len(classes) != len(boxes):
        raise ValueError("classes must align with boxes")
    if not 0.0 <= iou_threshold <= 1.0:
        raise ValueError(f"iou_threshold must lie in [0, 1], got {iou_threshold}")
    for s in scores:
        if not math.isfinite(s):
            raise ValueError(f"scores must be finite, got {s!r}")
    if class_aware and classes is None:
        raise ValueError("class_aware NMS requires class indices")

    order = sorted(range(len(boxes)), key=lambda i: -float(scores[i]))
    kept: list[int] = []
    for i in order:
        suppressed = False
        for j in kept:
            if class_aware and classes is not None and classes[i] != classes[j]:
                continue
            if iou(boxes[i], boxes[j]) > iou_threshold:
                suppressed = True
                break
        if not suppressed:
            kept.append(i)
    return kept


def nms(
    detections: Sequence[tuple[BoundingBox, float, int]],
    iou_threshold: float = 0.5,
    class_aware: bool = True,
) -> list[tuple[BoundingBox, float, int]]:
    """Apply greedy NMS to (box, score, class-index) triples.

    Returns the surviving triples sorted by descending score; the result
    is always a subset of the input.
    """
    boxes = [d[0] for d in detections]
    scores = [d[1] for d in detections]
    classes = [d[2] for d in detections]
    keep = nms_indices(
        boxes, scores, classes, iou_threshold=iou_threshold, class_aware=class_aware
    )
    return [detections[i] for i in keep]
