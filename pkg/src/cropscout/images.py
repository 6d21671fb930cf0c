"""Image loading, region cropping, and annotated-output rendering.

Images are RGB ``uint8`` arrays of shape (height, width, 3). Regions are
cropped at integer pixel bounds covering the continuous box and resized to
the encoder input resolution.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence

import numpy as np
from PIL import Image, ImageDraw

from .errors import DataFormatError
from .geometry import BoundingBox, clamp_box

__all__ = [
    "ENCODER_RESOLUTION",
    "ImageRegion",
    "load_image",
    "save_image",
    "crop_region",
    "full_image_region",
    "render_annotated",
]

ENCODER_RESOLUTION = 224


@dataclass(frozen=True)
class ImageRegion:
    """A crop resized to the encoder resolution, with its source box."""

    pixels: np.ndarray
    source_box: BoundingBox

    def __post_init__(self) -> None:
        p = self.pixels
        if p.ndim != 3 or p.shape[2] != 3 or p.dtype != np.uint8:
            raise ValueError(f"region pixels must be (h, w, 3) uint8, got {p.shape} {p.dtype}")


def load_image(path: str | Path) -> np.ndarray:
    """Load an image file as an RGB uint8 array."""
    path = Path(path)
    try:
        with Image.open(path) as img:
            return np.asarray(img.convert("RGB"), dtype=np.uint8)
    except OSError as exc:
        raise DataFormatError(f"cannot read image {path}: {exc}") from exc


def save_image(pixels: np.ndarray, path: str | Path) -> None:
    Image.fromarray(np.asarray(pixels, dtype=np.uint8), mode="RGB").save(Path(path))


def crop_region(
    image: np.ndarray, box: BoundingBox, resolution: int = ENCODER_RESOLUTION
) -> Optional[ImageRegion]:
    """Clamp, extract, and resize the region under ``box``.

    The continuous box is widened to covering integer pixel bounds before
    extraction. Returns ``None`` when the clamped box covers no whole
    pixel (zero-area crop); callers treat that as a dropped proposal, not
    an error.
    """
    height, width = image.shape[:2]
    clamped = clamp_box(box, width=width, height=height)
    x0 = int(math.floor(clamped.x_min))
    y0 = int(math.floor(clamped.y_min))
    x1 = int(math.ceil(clamped.x_max))
    y1 = int(math.ceil(clamped.y_max))
    if x1 <= x0 or y1 <= y0:
        return None
    crop = image[y0:y1, x0:x1]
    resized = Image.fromarray(crop, mode="RGB").resize(
        (resolution, resolution), Image.BILINEAR
    )
    return ImageRegion(pixels=np.asarray(resized, dtype=np.uint8), source_box=box)


def full_image_region(image: np.ndarray, resolution: int = ENCODER_RESOLUTION) -> ImageRegion:
    """The whole image as a single encoder region."""
    height, width = image.shape[:2]
    region = crop_region(image, BoundingBox(0, 0, width, height), resolution=resolution)
    if region is None:
        raise ValueError("image has no pixels")
    return region


_BOX_COLORS = (
    (230, 60, 60),
    (60, 180, 75),
    (65, 110, 220),
    (240, 160, 30),
    (150, 70, 190),
    (0, 160, 160),
)


def render_annotated(
    image: np.ndarray,
    boxes: Sequence[BoundingBox],
    labels: Sequence[str],
) -> np.ndarray:
    """Draw labeled boxes over a copy of ``image`` for visual inspection."""
    canvas = Image.fromarray(np.asarray(image, dtype=np.uint8), mode="RGB")
    draw = ImageDraw.Draw(canvas)
    for i, (box, label) in enumerate(zip(boxes, labels)):
        color = _BOX_COLORS[i % len(_BOX_COLORS)]
        draw.rectangle(
            (box.x_min, box.y_min, max(box.x_max, box.x_min + 1), max(box.y_max, box.y_min + 1)),
            outline=color,
            width=2,
        )
        draw.text((box.x_min + 2, box.y_min + 2), label, fill=color)
    return np.asarray(canvas, dtype=np.uint8)
