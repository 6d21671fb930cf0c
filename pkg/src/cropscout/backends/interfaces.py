"""Contracts for the four pluggable model roles the pipeline composes.

Every heavyweight model sits behind one of these interfaces: an image
encoder and a text encoder emitting vectors in one shared space, two
region-proposal sources, and a promptable mask refiner. The deterministic
stubs in :mod:`cropscout.backends.stubs` implement the same contracts and
back the entire test suite; adapters for real pretrained models plug in
identically.

Proposals deliberately carry no class label and no source confidence:
whatever semantics a proposal source attaches are stripped at this
boundary so they cannot bias the downstream open-vocabulary classification.
Only a provenance tag survives, for diagnostics.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from typing import Protocol, runtime_checkable

import numpy as np

from ..geometry import BinaryMask, BoundingBox
from ..images import ImageRegion
from ..prompts import ClassVocabulary

__all__ = [
    "ProposalSource",
    "Proposal",
    "RefinementResult",
    "ImageEncoder",
    "TextEncoder",
    "CanonicalProposer",
    "GroundedProposer",
    "MaskRefiner",
    "BackendSuite",
]


class ProposalSource(str, Enum):
    """Which stream produced a proposal; diagnostics only."""

    CANONICAL_UNKNOWN = "canonical-unknown"
    CANONICAL_KNOWN = "canonical-known"
    GROUNDED = "grounded"


@dataclass(frozen=True)
class Proposal:
    """A candidate region: a box plus its provenance tag, nothing else."""

    box: BoundingBox
    source: ProposalSource


@dataclass(frozen=True)
class RefinementResult:
    """A refined segmentation mask and the refiner's own quality estimate."""

    mask: BinaryMask
    quality: float

    def __post_init__(self) -> None:
        if not 0.0 <= self.quality <= 1.0:
            raise ValueError(f"refiner quality must lie in [0, 1], got {self.quality}")


@runtime_checkable
class ImageEncoder(Protocol):
    """Encodes a resized image region into the shared embedding space."""

    embedding_dim: int

    def encode(self, region: ImageRegion) -> np.ndarray: ...


@runtime_checkable
class TextEncoder(Protocol):
    """Encodes a prompt string into the shared embedding space."""

    embedding_dim: int

    def encode(self, prompt: str) -> np.ndarray: ...


@runtime_checkable
class CanonicalProposer(Protocol):
    """Class-agnostic region proposals from a conventional detector.

    Implementations must clamp boxes to image bounds and strip any class
    labels or confidences before emitting.
    """

    def propose(self, image: np.ndarray) -> list[Proposal]: ...


@runtime_checkable
class GroundedProposer(Protocol):
    """Language-guided region proposals for the requested vocabulary.

    Any per-class grounding information is discarded at this boundary;
    only boxes (clamped to image bounds) come back.
    """

    def propose(self, image: np.ndarray, vocab: ClassVocabulary) -> list[Proposal]: ...


@runtime_checkable
class MaskRefiner(Protocol):
    """Produces a segmentation mask (image-sized) for a box prompt."""

    def refine(self, image: np.ndarray, box: BoundingBox) -> RefinementResult: ...


@dataclass
class BackendSuite:
    """One implementation of each model role, with matching embedding dims."""

    image_encoder: ImageEncoder
    text_encoder: TextEncoder
    canonical_proposer: CanonicalProposer
    grounded_proposer: GroundedProposer
    mask_refiner: MaskRefiner

    def __post_init__(self) -> None:
        d_image = int(self.image_encoder.embedding_dim)
        d_text = int(self.text_encoder.embedding_dim)
        if d_image != d_text:
            raise ValueError(
                f"encoder embedding dimensions differ: image {d_image} vs text {d_text}"
            )

    @property
    def embedding_dim(self) -> int:
        return int(self.image_encoder.embedding_dim)
