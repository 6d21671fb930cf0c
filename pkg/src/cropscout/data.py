"""Dataset formats and tooling.

Two file families live here. Caption manifests are line-delimited JSON
records (image, caption, species, split) used to train the alignment
stage; the caption harness is offline, emitting prompt batches for an
external captioning model and ingesting its responses keyed by image
identifier. Detection ground truth uses the common
images/annotations/categories export schema with boxes stored as
(x, y, width, height).

All savers write canonical field order and number formatting so that
save -> load -> save is byte-identical.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Iterable, Sequence

import numpy as np

from .errors import DataFormatError
from .geometry import BoundingBox
from .prompts import ClassVocabulary

__all__ = [
    "SPLITS",
    "CAPTION_PROMPT_TEMPLATE",
    "CaptionRecord",
    "load_caption_manifest",
    "save_caption_manifest",
    "render_caption_prompt",
    "stratified_sample",
    "caption_mentions_species",
    "load_image_listing",
    "write_prompt_batch",
    "load_caption_responses",
    "ingest_caption_responses",
    "ImageInfo",
    "DetectionDataset",
    "load_detection_dataset",
    "save_detection_dataset",
]

SPLITS = ("train", "test")

CAPTION_PROMPT_TEMPLATE = (
    "For this {species} image, create a caption and include the crop type, "
    "number, location in the image, ripeness level, orientation, and other "
    "relevant details."
)


@dataclass(frozen=True)
class CaptionRecord:
    """One image-caption pair with its species and split assignment."""

    image: str
    caption: str
    species: str
    split: str = "train"

    def __post_init__(self) -> None:
        if not self.image:
            raise ValueError("record image identifier must be non-empty")
        if not self.caption:
            raise ValueError("record caption must be non-empty")
        if not self.species:
            raise ValueError("record species must be non-empty")
        if self.split not in SPLITS:
            raise ValueError(f"record split must be one of {SPLITS}, got {self.split!r}")


_CAPTION_FIELDS = ("image", "caption", "species", "split")


def _read_jsonl(path: Path) -> Iterable[tuple[int, dict[str, Any]]]:
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise DataFormatError(f"cannot read {path}: {exc}") from exc
    for lineno, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        try:
            obj = json.loads(line)
        except json.JSONDecodeError as exc:
            raise DataFormatError(f"{path}:{lineno}: invalid JSON: {exc}") from exc
        if not isinstance(obj, dict):
            raise DataFormatError(f"{path}:{lineno}: record must be a JSON object")
        yield lineno, obj


def _write_jsonl(path: Path, records: Iterable[dict[str, Any]]) -> None:
    lines = [json.dumps(r, ensure_ascii=False) for r in records]
    path.write_text("\n".join(lines) + ("\n" if lines else ""), encoding="utf-8")


def load_caption_manifest(path: str | Path) -> list[CaptionRecord]:
    """Load and validate a caption manifest, rejecting malformed lines."""
    path = Path(path)
    records = []
    for lineno, obj in _read_jsonl(path):
        unknown = set(obj) - set(_CAPTION_FIELDS)
        if unknown:
            raise DataFormatError(f"{path}:{lineno}: unknown fields {sorted(unknown)}")
        missing = [f for f in ("image", "caption", "species") if f not in obj]
        if missing:
            raise DataFormatError(f"{path}:{lineno}: missing fields {missing}")
        values = {f: obj.get(f) for f in _CAPTION_FIELDS if f in obj}
        for name, value in values.items():
            if not isinstance(value, str):
                raise DataFormatError(f"{path}:{lineno}: field {name!r} must be a string")
        try:
            records.append(CaptionRecord(**values))
        except ValueError as exc:
            raise DataFormatError(f"{path}:{lineno}: {exc}") from exc
    return records


def save_caption_manifest(records: Sequence[CaptionRecord], path: str | Path) -> None:
    """Write records as line-delimited JSON with canonical field order."""
    _write_jsonl(
        Path(path),
        (
            {"image": r.image, "caption": r.caption, "species": r.species, "split": r.split}
            for r in records
        ),
    )


def render_caption_prompt(species: str) -> str:
    """The captioning prompt for one species, byte-exact and pure."""
    if not species.strip():
        raise ValueError("species must be non-empty")
    return CAPTION_PROMPT_TEMPLATE.format(species=species)


def stratified_sample(
    records: Sequence[CaptionRecord], fraction: float, seed: int = 0
) -> list[CaptionRecord]:
    """Seed-deterministic per-species sample of ``round(fraction * count)``.

    Every species present in the input contributes at least one record.
    The sample preserves manifest order.
    """
    if not 0.0 < fraction <= 1.0:
        raise ValueError(f"fraction must lie in (0, 1], got {fraction}")
    if not records:
        return []
    by_species: dict[str, list[int]] = {}
    for i, record in enumerate(records):
        by_species.setdefault(record.species, []).append(i)
    gen = np.random.default_rng(seed)
    chosen: list[int] = []
    for indices in by_species.values():
        count = max(1, round(fraction * len(indices)))
        picks = gen.choice(len(indices), size=count, replace=False)
        chosen.extend(indices[p] for p in picks)
    return [records[i] for i in sorted(chosen)]


def caption_mentions_species(caption: str, species: str) -> bool:
    """Automated consistency check: the caption names its species."""
    return species.casefold() in caption.casefold()


# ---------------------------------------------------------------------------
# Offline caption-generation harness


def load_image_listing(path: str | Path) -> list[dict[str, str]]:
    """Load a (image, species[, split]) listing used to drive captioning."""
    path = Path(path)
    listing = []
    for lineno, obj in _read_jsonl(path):
        for field in ("image", "species"):
            if not isinstance(obj.get(field), str) or not obj[field]:
                raise DataFormatError(
                    f"{path}:{lineno}: field {field!r} must be a non-empty string"
                )
        entry = {"image": obj["image"], "species": obj["species"]}
        if "split" in obj:
            if obj["split"] not in SPLITS:
                raise DataFormatError(f"{path}:{lineno}: invalid split {obj['split']!r}")
            entry["split"] = obj["split"]
        listing.append(entry)
    return listing


def write_prompt_batch(listing: Sequence[dict[str, str]], path: str | Path) -> None:
    """Emit one captioning prompt per listed image."""
    _write_jsonl(
        Path(path),
        (
            {"image": entry["image"], "prompt": render_caption_prompt(entry["species"])}
            for entry in listing
        ),
    )


def load_caption_responses(path: str | Path) -> dict[str, str]:
    """Load captioning responses keyed by image identifier."""
    path = Path(path)
    responses: dict[str, str] = {}
    for lineno, obj in _read_jsonl(path):
        for field in ("image", "caption"):
            if not isinstance(obj.get(field), str) or not obj[field]:
                raise DataFormatError(
                    f"{path}:{lineno}: field {field!r} must be a non-empty string"
                )
        if obj["image"] in responses:
            raise DataFormatError(f"{path}:{lineno}: duplicate response for {obj['image']!r}")
        responses[obj["image"]] = obj["caption"]
    return responses


def ingest_caption_responses(
    listing: Sequence[dict[str, str]],
    responses: dict[str, str],
    default_split: str = "train",
    check_consistency: bool = True,
) -> list[CaptionRecord]:
    """Join captioning responses back onto the listing, validating coverage.

    Raises when any listed image lacks a response (listing every missing
    identifier) and, when ``check_consistency`` is on, when a caption fails
    to mention its species.
    """
    missing = [e["image"] for e in listing if e["image"] not in responses]
    if missing:
        raise DataFormatError(f"responses missing for images: {missing}")
    inconsistent = [
        e["image"]
        for e in listing
        if check_consistency and not caption_mentions_species(responses[e["image"]], e["species"])
    ]
    if inconsistent:
        raise DataFormatError(
            f"captions failing the species-mention consistency check: {inconsistent}"
        )
    return [
        CaptionRecord(
            image=e["image"],
            caption=responses[e["image"]],
            species=e["species"],
            split=e.get("split", default_split),
        )
        for e in listing
    ]


# ---------------------------------------------------------------------------
# Detection ground truth


@dataclass(frozen=True)
class ImageInfo:
    id: int
    file_name: str
    width: int
    height: int


@dataclass
class DetectionDataset:
    """Ground-truth boxes per image plus the class vocabulary."""

    images: list[ImageInfo]
    ground_truths: dict[int, list[tuple[BoundingBox, str]]]
    vocabulary: ClassVocabulary

    def truths_for(self, image_id: int) -> list[tuple[BoundingBox, str]]:
        return self.ground_truths.get(image_id, [])


def load_detection_dataset(path: str | Path) -> DetectionDataset:
    """Load an images/annotations/categories document.

    Stored boxes are (x, y, width, height) and come back as
    (x_min, y_min, x_max, y_max); dangling references and out-of-bounds
    boxes are rejected with the offending annotation id.
    """
    path = Path(path)
    try:
        doc = json.loads(path.read_text(encoding="utf-8"))
    except OSError as exc:
        raise DataFormatError(f"cannot read dataset {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise DataFormatError(f"{path}: invalid JSON: {exc}") from exc
    for section in ("images", "annotations", "categories"):
        if not isinstance(doc.get(section), list):
            raise DataFormatError(f"{path}: missing or invalid section {section!r}")

    categories: dict[int, str] = {}
    names = []
    for cat in doc["categories"]:
        cat_id, name = cat.get("id"), cat.get("name")
        if not isinstance(cat_id, int) or not isinstance(name, str) or not name:
            raise DataFormatError(f"{path}: malformed category entry {cat!r}")
        if cat_id in categories:
            raise DataFormatError(f"{path}: duplicate category id {cat_id}")
        categories[cat_id] = name
        names.append(name)
    try:
        vocabulary = ClassVocabulary(names)
    except ValueError as exc:
        raise DataFormatError(f"{path}: invalid category names: {exc}") from exc

    images: list[ImageInfo] = []
    dims: dict[int, tuple[int, int]] = {}
    for img in doc["images"]:
        try:
            info = ImageInfo(
                id=int(img["id"]),
                file_name=str(img["file_name"]),
                width=int(img["width"]),
                height=int(img["height"]),
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise DataFormatError(f"{path}: malformed image entry {img!r}: {exc}") from exc
        if info.width <= 0 or info.height <= 0 or info.id in dims:
            raise DataFormatError(f"{path}: invalid or duplicate image entry id {info.id}")
        images.append(info)
        dims[info.id] = (info.width, info.height)

    ground_truths: dict[int, list[tuple[BoundingBox, str]]] = {info.id: [] for info in images}
    for ann in doc["annotations"]:
        ann_id = ann.get("id")
        try:
            image_id = int(ann["image_id"])
            category_id = int(ann["category_id"])
            x, y, w, h = (float(v) for v in ann["bbox"])
        except (KeyError, TypeError, ValueError) as exc:
            raise DataFormatError(f"{path}: malformed annotation {ann_id}: {exc}") from exc
        if category_id not in categories:
            raise DataFormatError(
                f"{path}: annotation {ann_id} references unknown category {category_id}"
            )
        if image_id not in dims:
            raise DataFormatError(
                f"{path}: annotation {ann_id} references unknown image {image_id}"
            )
        if w < 0 or h < 0:
            raise DataFormatError(f"{path}: annotation {ann_id} has negative extent")
        width, height = dims[image_id]
        if x < 0 or y < 0 or x + w > width or y + h > height:
            raise DataFormatError(f"{path}: annotation {ann_id} box out of image bounds")
        ground_truths[image_id].append((BoundingBox(x, y, x + w, y + h), categories[category_id]))
    return DetectionDataset(images=images, ground_truths=ground_truths, vocabulary=vocabulary)


def save_detection_dataset(dataset: DetectionDataset, path: str | Path) -> None:
    """Write the dataset back in canonical images/annotations/categories form."""
    name_to_id = {name: i + 1 for i, name in enumerate(dataset.vocabulary.names)}
    annotations = []
    ann_id = 1
    for info in dataset.images:
        for box, name in dataset.truths_for(info.id):
            annotations.append(
                {
                    "id": ann_id,
                    "image_id": info.id,
                    "category_id": name_to_id[name],
                    "bbox": [box.x_min, box.y_min, box.width, box.height],
                }
            )
            ann_id += 1
    doc = {
        "images": [
            {"id": i.id, "file_name": i.file_name, "width": i.width, "height": i.height}
            for i in dataset.images
        ],
        "annotations": annotations,
        "categories": [{"id": cid, "name": name} for name, cid in name_to_id.items()],
    }
    Path(path).write_text(json.dumps(doc, indent=2, ensure_ascii=False) + "\n", encoding="utf-8")
