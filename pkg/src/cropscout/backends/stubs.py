"""Deterministic, weight-free backend implementations.

These stubs make every pipeline stage exactly reproducible on a laptop:
encoders derive embeddings from seeded hashes, proposers emit synthetic
geometry, and refiners build masks analytically. Each stub is a pure
function of (inputs, fixed seed), so repeated invocation is bitwise
reproducible and safe under concurrency.

The two encoders share one trick that makes end-to-end scenarios riggable:
text embeddings are averages of per-token hash vectors, and the mean-color
image encoder can map palette colors to vocabulary words embedded with the
same token hash. A region whose dominant color maps to "tomato" then
genuinely scores highest against prompts containing the token "tomato".
"""

from __future__ import annotations

import hashlib
from typing import Mapping, Optional, Sequence

import numpy as np

from ..geometry import BinaryMask, BoundingBox, clamp_box, rasterize_box
from ..images import ImageRegion
from ..prompts import ClassVocabulary
from ..tokenization import tokenize
from .interfaces import (
    Proposal,
    ProposalSource,
    RefinementResult,
)

__all__ = [
    "token_hash_vector",
    "HashingTextEncoder",
    "MeanColorImageEncoder",
    "GridProposer",
    "FixedProposer",
    "EmptyProposer",
    "ShrinkMaskRefiner",
    "EmptyMaskRefiner",
    "IdentityMaskRefiner",
]


def token_hash_vector(token: str, dim: int, seed: int) -> np.ndarray:
    """Seeded Gaussian vector derived from a token's SHA-256 digest."""
    digest = hashlib.sha256(f"{seed}:{token}".encode("utf-8")).digest()
    gen = np.random.Generator(np.random.PCG64(int.from_bytes(digest[:8], "little")))
    return gen.standard_normal(dim)


class HashingTextEncoder:
    """Bag-of-tokens text encoder over seeded hash vectors.

    The embedding of a prompt is the mean of its token vectors (the
    pipeline normalizes at the boundary), so prompts sharing a token are
    measurably similar while unrelated prompts are near-orthogonal.
    """

    def __init__(self, dim: int = 512, seed: int = 0) -> None:
        self.embedding_dim = dim
        self._seed = seed
        self._cache: dict[str, np.ndarray] = {}

    def _token_vector(self, token: str) -> np.ndarray:
        vec = self._cache.get(token)
        if vec is None:
            vec = token_hash_vector(token, self.embedding_dim, self._seed)
            vec.setflags(write=False)
            self._cache[token] = vec
        return vec

    def encode(self, prompt: str) -> np.ndarray:
        tokens = tokenize(prompt)
        if not tokens:
            raise ValueError(f"cannot encode prompt without tokens: {prompt!r}")
        return np.mean([self._token_vector(t) for t in tokens], axis=0)


class MeanColorImageEncoder:
    """Image encoder keyed on the region's mean RGB color.

    Without a palette the (rounded) mean color itself is hashed, giving a
    deterministic vector per color. With a palette mapping words to RGB
    triples, the nearest palette word's token vector is emitted instead,
    aligning regions of that color with text prompts containing the word.
    """

    def __init__(
        self,
        dim: int = 512,
        seed: int = 0,
        palette: Optional[Mapping[str, Sequence[float]]] = None,
    ) -> None:
        self.embedding_dim = dim
        self._seed = seed
        self._palette = (
            [(word, np.asarray(rgb, dtype=np.float64)) for word, rgb in palette.items()]
            if palette
            else None
        )
        self._cache: dict[str, np.ndarray] = {}

    def _key_vector(self, key: str) -> np.ndarray:
        vec = self._cache.get(key)
        if vec is None:
            vec = token_hash_vector(key, self.embedding_dim, self._seed)
            vec.setflags(write=False)
            self._cache[key] = vec
        return vec

    def encode(self, region: ImageRegion) -> np.ndarray:
        means = region.pixels.reshape(-1, 3).astype(np.float64).mean(axis=0)
        if self._palette is not None:
            distances = [float(np.sum((means - rgb) ** 2)) for _, rgb in self._palette]
            word = self._palette[int(np.argmin(distances))][0]
            return self._key_vector(word)
        r, g, b = (int(round(c)) for c in means)
        return self._key_vector(f"color-{r}-{g}-{b}")


class GridProposer:
    """Tiles the image with a rows x cols grid of proposals."""

    def __init__(
        self,
        rows: int = 2,
        cols: int = 2,
        source: ProposalSource = ProposalSource.CANONICAL_UNKNOWN,
    ) -> None:
        if rows <= 0 or cols <= 0:
            raise ValueError("grid dimensions must be positive")
        self.rows = rows
        self.cols = cols
        self.source = ProposalSource(source)

    def propose(self, image: np.ndarray, vocab: ClassVocabulary | None = None) -> list[Proposal]:
        height, width = image.shape[:2]
        proposals = []
        for r in range(self.rows):
            for c in range(self.cols):
                box = BoundingBox(
                    x_min=width * c / self.cols,
                    y_min=height * r / self.rows,
                    x_max=width * (c + 1) / self.cols,
                    y_max=height * (r + 1) / self.rows,
                )
                proposals.append(Proposal(box=box, source=self.source))
        return proposals


class FixedProposer:
    """Emits a configured list of boxes, clamped to the image bounds."""

    def __init__(
        self,
        boxes: Sequence[Sequence[float]],
        source: ProposalSource = ProposalSource.GROUNDED,
    ) -> None:
        self._boxes = [BoundingBox(*b) for b in boxes]
        self.source = ProposalSource(source)

    def propose(self, image: np.ndarray, vocab: ClassVocabulary | None = None) -> list[Proposal]:
        height, width = image.shape[:2]
        return [
            Proposal(box=clamp_box(b, width=width, height=height), source=self.source)
            for b in self._boxes
        ]


class EmptyProposer:
    """Proposes nothing; the pipeline must still run."""

    def __init__(self, source: ProposalSource = ProposalSource.CANONICAL_UNKNOWN) -> None:
        self.source = ProposalSource(source)

    def propose(self, image: np.ndarray, vocab: ClassVocabulary | None = None) -> list[Proposal]:
        return []


def _require_refinable(image: np.ndarray, box: BoundingBox) -> BoundingBox:
    height, width = image.shape[:2]
    clamped = clamp_box(box, width=width, height=height)
    if clamped.width <= 0.0 or clamped.height <= 0.0:
        raise ValueError(f"degenerate box after clamping: {clamped.as_tuple()}")
    return clamped


class ShrinkMaskRefiner:
    """Returns a hard mask on the box shrunk toward its center.

    Width and height are scaled by ``1 - shrink`` about the box center, so
    the recovered tight box is strictly inside the prompt box.
    """

    def __init__(self, shrink: float = 0.1, quality: float = 0.9) -> None:
        if not 0.0 <= shrink < 1.0:
            raise ValueError(f"shrink fraction must lie in [0, 1), got {shrink}")
        self.shrink = shrink
        self.quality = quality

    def refine(self, image: np.ndarray, box: BoundingBox) -> RefinementResult:
        clamped = _require_refinable(image, box)
        height, width = image.shape[:2]
        cx = (clamped.x_min + clamped.x_max) / 2.0
        cy = (clamped.y_min + clamped.y_max) / 2.0
        half_w = clamped.width * (1.0 - self.shrink) / 2.0
        half_h = clamped.height * (1.0 - self.shrink) / 2.0
        shrunk = BoundingBox(cx - half_w, cy - half_h, cx + half_w, cy + half_h)
        return RefinementResult(
            mask=rasterize_box(shrunk, height=height, width=width), quality=self.quality
        )


class EmptyMaskRefiner:
    """Always fails to segment: all-zero mask, zero quality."""

    def refine(self, image: np.ndarray, box: BoundingBox) -> RefinementResult:
        _require_refinable(image, box)
        height, width = image.shape[:2]
        mask = BinaryMask(np.zeros((height, width)))
        return RefinementResult(mask=mask, quality=0.0)


class IdentityMaskRefiner:
    """Mask exactly covering the prompt box (after clamping)."""

    def __init__(self, quality: float = 1.0) -> None:
        self.quality = quality

    def refine(self, image: np.ndarray, box: BoundingBox) -> RefinementResult:
        clamped = _require_refinable(image, box)
        height, width = image.shape[:2]
        return RefinementResult(
            mask=rasterize_box(clamped, height=height, width=width), quality=self.quality
        )
