"""End-to-end open-vocabulary detection and scene classification.

Per image, detection runs: render and encode the class vocabulary; gather
proposals from the canonical and grounded streams and concatenate them
(duplicates are kept — redundancy is resolved by the final NMS); crop and
embed every proposal; score regions against class embeddings and take the
per-region argmax; refine each region with the mask backend and tighten
its box to the mask extent; min-max normalize the classification scores
and the refiner qualities separately over the image and multiply them into
one fused confidence; greedily suppress overlaps; return survivors sorted
by descending fused score.

The global classification path is independent: the whole image is encoded
once and softmax-matched against the class embeddings. It never alters
detection output.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Any, Optional, Sequence

import numpy as np

from .backends.interfaces import BackendSuite, ImageEncoder, Proposal
from .embeddings import (
    DEFAULT_TEMPERATURE,
    classify_rows,
    l2_normalize,
    similarity_matrix,
    softmax_classify,
)
from .errors import BackendError
from .geometry import BinaryMask, BoundingBox, box_from_mask, clamp_box, nms_indices
from .images import crop_region, full_image_region
from .prompts import ClassVocabulary, PromptSet, class_embeddings

__all__ = [
    "FORMAT_VERSION",
    "PipelineConfig",
    "ScoredDetection",
    "unify_proposals",
    "embed_regions",
    "minmax_normalize",
    "fuse_scores",
    "detect",
    "classify_image",
    "mask_to_rle",
    "rle_to_mask",
    "detection_record",
    "classification_record",
]

logger = logging.getLogger(__name__)

FORMAT_VERSION = 1

EMPTY_MASK_POLICIES = ("keep", "drop")


@dataclass(frozen=True)
class PipelineConfig:
    """Inference-time knobs; defaults follow the documented operating point."""

    iou_threshold: float = 0.5
    mask_threshold: float = 0.5
    class_aware_nms: bool = True
    empty_mask_policy: str = "keep"
    prompt_ensemble: bool = True

    def __post_init__(self) -> None:
        for name in ("iou_threshold", "mask_threshold"):
            value = getattr(self, name)
            if not 0.0 < value < 1.0:
                raise ValueError(f"{name} must lie in (0, 1), got {value}")
        if self.empty_mask_policy not in EMPTY_MASK_POLICIES:
            raise ValueError(
                f"empty_mask_policy must be one of {EMPTY_MASK_POLICIES}, "
                f"got {self.empty_mask_policy!r}"
            )

    def echo(self) -> dict[str, Any]:
        return {
            "iou_threshold": self.iou_threshold,
            "mask_threshold": self.mask_threshold,
            "class_aware_nms": self.class_aware_nms,
            "empty_mask_policy": self.empty_mask_policy,
            "prompt_ensemble": self.prompt_ensemble,
        }


@dataclass(frozen=True)
class ScoredDetection:
    """One surviving detection with every intermediate score retained."""

    proposal: Proposal
    class_index: int
    raw_score: float
    refined_box: BoundingBox
    refiner_quality: float
    fused_score: float
    mask: Optional[BinaryMask] = None


def unify_proposals(
    canonical: Sequence[Proposal], grounded: Sequence[Proposal]
) -> list[Proposal]:
    """Concatenate the two proposal streams, canonical first.

    No deduplication happens here; redundant proposals are handled by the
    final NMS stage after semantic scoring.
    """
    return list(canonical) + list(grounded)


def embed_regions(
    image: np.ndarray, proposals: Sequence[Proposal], encoder: ImageEncoder
) -> tuple[np.ndarray, list[int]]:
    """Crop, resize, and encode each proposal region.

    Returns unit-norm embeddings (one row per surviving proposal) and the
    indices of the proposals that survived; proposals whose clamped crop
    covers no whole pixel are dropped with a logged diagnostic instead of
    aborting the image.
    """
    rows: list[np.ndarray] = []
    kept: list[int] = []
    for i, proposal in enumerate(proposals):
        region = crop_region(image, proposal.box)
        if region is None:
            logger.warning(
                "dropping proposal %d with zero-area crop: %s", i, proposal.box.as_tuple()
            )
            continue
        try:
            raw = encoder.encode(region)
        except Exception as exc:
            raise BackendError(f"image encoder failed on proposal {i}: {exc}") from exc
        rows.append(l2_normalize(np.asarray(raw, dtype=np.float64)))
        kept.append(i)
    if not rows:
        return np.empty((0, 0)), []
    return np.stack(rows), kept


def minmax_normalize(scores) -> np.ndarray:
    """Affinely map scores onto [0, 1] over the given population.

    When every score is equal (including the singleton case) the result is
    all ones, so the other fusion factor decides alone instead of zeroing
    an entire image.
    """
    arr = np.asarray(scores, dtype=np.float64).reshape(-1)
    if arr.size == 0:
        raise ValueError("cannot min-max normalize an empty score set")
    if not np.all(np.isfinite(arr)):
        raise ValueError("scores must be finite")
    low, high = float(arr.min()), float(arr.max())
    if high == low:
        return np.ones_like(arr)
    return (arr - low) / (high - low)


def fuse_scores(cl_norm, sam_norm):
    """Multiplicative fusion of the two normalized score sources."""
    return np.multiply(cl_norm, sam_norm)


def _gather_proposals(
    image: np.ndarray, vocab: ClassVocabulary, suite: BackendSuite
) -> list[Proposal]:
    height, width = image.shape[:2]
    try:
        canonical = suite.canonical_proposer.propose(image)
    except Exception as exc:
        raise BackendError(f"canonical proposer failed: {exc}") from exc
    try:
        grounded = suite.grounded_proposer.propose(image, vocab)
    except Exception as exc:
        raise BackendError(f"grounded proposer failed: {exc}") from exc
    unified = unify_proposals(canonical, grounded)
    return [
        Proposal(box=clamp_box(p.box, width=width, height=height), source=p.source)
        for p in unified
    ]


def detect(
    image: np.ndarray,
    vocab: ClassVocabulary,
    suite: BackendSuite,
    config: PipelineConfig | None = None,
    prompt_set: PromptSet | None = None,
) -> list[ScoredDetection]:
    """Run the full detection pipeline on one image.

    Returns detections sorted by descending fused score; zero proposals
    (or all proposals dropped) is a successful empty result. Backend
    failures propagate as :class:`BackendError` tagged with the stage.
    """
    config = config or PipelineConfig()
    prompt_set = prompt_set or PromptSet.default()
    text_embeddings = class_embeddings(
        vocab, prompt_set, suite.text_encoder, ensemble=config.prompt_ensemble
    )

    proposals = _gather_proposals(image, vocab, suite)
    if not proposals:
        return []
    region_embeddings, kept = embed_regions(image, proposals, suite.image_encoder)
    if not kept:
        return []
    proposals = [proposals[i] for i in kept]

    similarities = similarity_matrix(region_embeddings, text_embeddings)
    assignments = classify_rows(similarities)

    survivors: list[dict[str, Any]] = []
    for i, (proposal, (class_index, raw_score)) in enumerate(zip(proposals, assignments)):
        try:
            refinement = suite.mask_refiner.refine(image, proposal.box)
        except Exception as exc:
            raise BackendError(f"mask refiner failed on proposal {i}: {exc}") from exc
        refined_box = box_from_mask(refinement.mask, threshold=config.mask_threshold)
        if refined_box is None:
            if config.empty_mask_policy == "drop":
                logger.warning("dropping proposal %d with empty refined mask", i)
                continue
            # Fallback: keep the original proposal box, zero refiner quality.
            survivors.append(
                {
                    "proposal": proposal,
                    "class_index": class_index,
                    "raw_score": raw_score,
                    "refined_box": proposal.box,
                    "quality": 0.0,
                    "mask": None,
                }
            )
        else:
            survivors.append(
                {
                    "proposal": proposal,
                    "class_index": class_index,
                    "raw_score": raw_score,
                    "refined_box": refined_box,
                    "quality": float(refinement.quality),
                    "mask": refinement.mask,
                }
            )

    if not survivors:
        return []

    cl_norm = minmax_normalize([s["raw_score"] for s in survivors])
    sam_norm = minmax_normalize([s["quality"] for s in survivors])
    fused = fuse_scores(cl_norm, sam_norm)

    keep = nms_indices(
        boxes=[s["refined_box"] for s in survivors],
        scores=list(fused),
        classes=[s["class_index"] for s in survivors],
        iou_threshold=config.iou_threshold,
        class_aware=config.class_aware_nms,
    )
    return [
        ScoredDetection(
            proposal=survivors[i]["proposal"],
            class_index=survivors[i]["class_index"],
            raw_score=survivors[i]["raw_score"],
            refined_box=survivors[i]["refined_box"],
            refiner_quality=survivors[i]["quality"],
            fused_score=float(fused[i]),
            mask=survivors[i]["mask"],
        )
        for i in keep
    ]


def classify_image(
    image: np.ndarray,
    vocab: ClassVocabulary,
    suite: BackendSuite,
    tau: float = DEFAULT_TEMPERATURE,
    prompt_set: PromptSet | None = None,
    ensemble: bool = True,
) -> tuple[int, np.ndarray]:
    """Scene-level classification over the whole image.

    Encodes the resized full image, softmax-matches it against the class
    embeddings at temperature ``tau``, and returns the argmax class index
    (ties toward the lowest index) with the full distribution.
    """
    prompt_set = prompt_set or PromptSet.default()
    text_embeddings = class_embeddings(vocab, prompt_set, suite.text_encoder, ensemble=ensemble)
    region = full_image_region(image)
    try:
        raw = suite.image_encoder.encode(region)
    except Exception as exc:
        raise BackendError(f"image encoder failed on full image: {exc}") from exc
    v_global = l2_normalize(np.asarray(raw, dtype=np.float64))
    probabilities = softmax_classify(v_global, text_embeddings, tau=tau)
    return int(np.argmax(probabilities)), probabilities


# ---------------------------------------------------------------------------
# Output documents


def mask_to_rle(mask: BinaryMask, threshold: float) -> dict[str, Any]:
    """Run-length encode the mask binarized at ``threshold``.

    Runs are row-major and alternate starting with the zero run (which may
    be empty), so ``sum(counts) == height * width``.
    """
    flat = (mask.values > threshold).reshape(-1)
    counts: list[int] = []
    current = False
    run = 0
    for bit in flat:
        if bool(bit) == current:
            run += 1
        else:
            counts.append(run)
            current = not current
            run = 1
    counts.append(run)
    return {"height": mask.height, "width": mask.width, "counts": counts}


def rle_to_mask(rle: dict[str, Any]) -> BinaryMask:
    """Decode a run-length encoding back to a hard 0/1 mask."""
    height, width = int(rle["height"]), int(rle["width"])
    flat = np.zeros(height * width, dtype=np.float64)
    pos = 0
    value = 0.0
    for run in rle["counts"]:
        if value:
            flat[pos : pos + run] = 1.0
        pos += run
        value = 1.0 - value
    if pos != height * width:
        raise ValueError(f"run lengths cover {pos} pixels, expected {height * width}")
    return BinaryMask(flat.reshape(height, width))


def _box_list(box: BoundingBox) -> list[float]:
    return [box.x_min, box.y_min, box.x_max, box.y_max]


def detection_record(
    image_id: str,
    vocab: ClassVocabulary,
    detections: Sequence[ScoredDetection],
    config: PipelineConfig,
    seed: int,
    backends: str,
    mask_threshold: float | None = None,
    include_masks: bool = True,
) -> dict[str, Any]:
    """Serializable per-image detection record with stable field names."""
    threshold = config.mask_threshold if mask_threshold is None else mask_threshold
    entries = []
    for det in detections:
        entry: dict[str, Any] = {
            "box": _box_list(det.refined_box),
            "class_index": det.class_index,
            "class_name": vocab[det.class_index],
            "raw_score": float(det.raw_score),
            "refiner_quality": float(det.refiner_quality),
            "fused_score": float(det.fused_score),
        }
        if include_masks and det.mask is not None:
            entry["mask"] = mask_to_rle(det.mask, threshold)
        entries.append(entry)
    return {
        "format_version": FORMAT_VERSION,
        "image": image_id,
        "seed": seed,
        "vocabulary": list(vocab.names),
        "config": {"backends": backends, **config.echo()},
        "detections": entries,
    }


def classification_record(
    image_id: str,
    vocab: ClassVocabulary,
    class_index: int,
    probabilities: np.ndarray,
    tau: float,
    seed: int,
    backends: str,
) -> dict[str, Any]:
    """Serializable per-image global classification record."""
    return {
        "format_version": FORMAT_VERSION,
        "image": image_id,
        "seed": seed,
        "vocabulary": list(vocab.names),
        "temperature": float(tau),
        "backends": backends,
        "class_index": int(class_index),
        "class_name": vocab[int(class_index)],
        "probabilities": [float(p) for p in probabilities],
    }
