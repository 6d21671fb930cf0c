#!/usr/bin/env python3
"""Regenerate the committed test fixtures.

Deterministic by construction: synthetic images, a pinned backend suite,
and golden outputs produced by the CLI itself. Run from the repository
root after any intentional change to stub semantics, then re-audit the
golden files before committing.
"""

from __future__ import annotations

import json
import subprocess
import sys
from pathlib import Path

import numpy as np

ROOT = Path(__file__).resolve().parents[1]
FIXTURES = ROOT / "tests" / "fixtures"

sys.path.insert(0, str(ROOT / "src"))

from cropscout.data import (  # noqa: E402
    CaptionRecord,
    DetectionDataset,
    ImageInfo,
    save_caption_manifest,
    save_detection_dataset,
)
from cropscout.geometry import BoundingBox  # noqa: E402
from cropscout.images import save_image  # noqa: E402
from cropscout.prompts import ClassVocabulary  # noqa: E402

RED = (220, 30, 30)
GREEN = (40, 180, 40)
GRAY = (120, 120, 120)
BLUE = (60, 60, 220)

GOLDEN_SUITE = {
    "image_encoder": {
        "kind": "mean-color",
        "palette": {"tomato": list(RED), "cucumber": list(GREEN), "soil": list(GRAY), "sky": list(BLUE)},
    },
    "text_encoder": {"kind": "hashing"},
    "canonical_proposer": {"kind": "grid", "rows": 2, "cols": 2},
    "grounded_proposer": {"kind": "fixed", "boxes": [[0, 0, 32, 32], [0, 0, 64, 64]]},
    "mask_refiner": {"kind": "shrink", "shrink": 0.1, "quality": 0.9},
}


def quadrant_image(tl, tr, bl, br) -> np.ndarray:
    img = np.zeros((64, 64, 3), dtype=np.uint8)
    img[:32, :32] = tl
    img[:32, 32:] = tr
    img[32:, :32] = bl
    img[32:, 32:] = br
    return img


def make_images() -> None:
    images = FIXTURES / "images"
    images.mkdir(parents=True, exist_ok=True)
    save_image(quadrant_image(RED, GRAY, GREEN, GRAY), images / "scene-a.png")
    save_image(quadrant_image(BLUE, RED, GRAY, GREEN), images / "scene-b.png")


def make_suite() -> None:
    backends = FIXTURES / "backends"
    backends.mkdir(parents=True, exist_ok=True)
    (backends / "golden-stub.json").write_text(
        json.dumps(GOLDEN_SUITE, indent=2) + "\n", encoding="utf-8"
    )


def make_golden() -> None:
    out = FIXTURES / "golden" / "detect.jsonl"
    out.parent.mkdir(parents=True, exist_ok=True)
    subprocess.run(
        [
            sys.executable,
            "-m",
            "cropscout.cli",
            "detect",
            "--images",
            "images/scene-a.png",
            "--images",
            "images/scene-b.png",
            "--vocab",
            "tomato,cucumber",
            "--backends",
            "backends/golden-stub.json",
            "--seed",
            "7",
            "--out",
            str(out),
        ],
        cwd=FIXTURES,
        check=True,
    )
    (out.parent / "detect.run.json").unlink(missing_ok=True)


def make_data_fixtures() -> None:
    data = FIXTURES / "data"
    data.mkdir(parents=True, exist_ok=True)

    records = [
        CaptionRecord("img-001.png", "Three ripe tomato fruits in the field", "tomato", "train"),
        CaptionRecord("img-002.png", "A single green cucumber on the vine", "cucumber", "train"),
        CaptionRecord("img-003.png", "Clusters of tomato plants at sunrise", "tomato", "train"),
        CaptionRecord("img-004.png", "Young cucumber rows under drip lines", "cucumber", "train"),
        CaptionRecord("img-005.png", "One unripe tomato near the trellis", "tomato", "test"),
        CaptionRecord("img-006.png", "Harvested cucumber pile on a crate", "cucumber", "test"),
    ]
    save_caption_manifest(records, data / "captions.jsonl")

    listing = [
        {"image": "img-001.png", "species": "tomato", "split": "train"},
        {"image": "img-002.png", "species": "cucumber", "split": "train"},
        {"image": "img-003.png", "species": "dragon fruit", "split": "test"},
    ]
    (data / "listing.jsonl").write_text(
        "\n".join(json.dumps(e, ensure_ascii=False) for e in listing) + "\n", encoding="utf-8"
    )
    responses = [
        {"image": "img-001.png", "caption": "Two red tomato fruits low in the frame"},
        {"image": "img-002.png", "caption": "A cucumber hanging center-right, unripe"},
        {"image": "img-003.png", "caption": "A pink dragon fruit centered on the cactus"},
    ]
    (data / "responses.jsonl").write_text(
        "\n".join(json.dumps(e, ensure_ascii=False) for e in responses) + "\n", encoding="utf-8"
    )

    # Ground truth matching the shrunk golden boxes, so the golden run
    # evaluates to AP 1.0 at both 0.5 and 0.75.
    dataset = DetectionDataset(
        images=[
            ImageInfo(id=1, file_name="images/scene-a.png", width=64, height=64),
            ImageInfo(id=2, file_name="images/scene-b.png", width=64, height=64),
        ],
        ground_truths={
            1: [
                (BoundingBox(2.0, 2.0, 30.0, 30.0), "tomato"),
                (BoundingBox(2.0, 34.0, 30.0, 62.0), "cucumber"),
            ],
            2: [
                (BoundingBox(34.0, 2.0, 62.0, 30.0), "tomato"),
                (BoundingBox(34.0, 34.0, 62.0, 62.0), "cucumber"),
            ],
        },
        vocabulary=ClassVocabulary(["tomato", "cucumber"]),
    )
    save_detection_dataset(dataset, data / "dataset.json")

    truths = [
        {"image": "images/scene-a.png", "class_index": 0},
        {"image": "images/scene-b.png", "class_index": 1},
    ]
    (data / "classification-truths.jsonl").write_text(
        "\n".join(json.dumps(e) for e in truths) + "\n", encoding="utf-8"
    )


def make_train_fixtures() -> None:
    train = FIXTURES / "train"
    train.mkdir(parents=True, exist_ok=True)
    red = np.zeros((8, 8, 3), dtype=np.uint8)
    red[:, :] = RED
    green = np.zeros((8, 8, 3), dtype=np.uint8)
    green[:, :] = GREEN
    save_image(red, train / "red.png")
    save_image(green, train / "green.png")
    records = []
    for i in range(4):
        records.append(
            CaptionRecord("red.png", "a ripe red tomato fruit", "tomato", "train")
        )
        records.append(
            CaptionRecord("green.png", "a fresh green cucumber vegetable", "cucumber", "train")
        )
    save_caption_manifest(records, train / "manifest.jsonl")


def main() -> None:
    make_images()
    make_suite()
    make_data_fixtures()
    make_train_fixtures()
    make_golden()
    print(f"fixtures written under {FIXTURES}")


if __name__ == "__main__":
    main()
