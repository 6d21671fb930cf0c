"""Zero-shot classification metrics and detection average precision.

Detection AP follows the contemporary challenge convention: greedy
score-ordered matching against unmatched same-class ground truths at an
IoU threshold, a precision envelope made monotone by a right-to-left
maximum, and 101-point interpolation over recalls {0, 0.01, ..., 1.0}.
Classes absent from the ground truth are excluded from mean AP rather
than scored zero.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Mapping, Optional, Sequence

import numpy as np

from .errors import DataFormatError
from .geometry import BoundingBox, iou

__all__ = [
    "ClassificationReport",
    "classification_report",
    "Detection",
    "match_detections",
    "average_precision",
    "DetectionReport",
    "detection_report",
    "load_detection_records",
    "load_labeled_images",
    "align_by_image",
    "classification_report_document",
    "detection_report_document",
    "per_class_table",
]

RECALL_SAMPLES = np.linspace(0.0, 1.0, 101)


@dataclass
class ClassificationReport:
    """Overall and per-class accuracy plus the full confusion matrix.

    ``per_class_accuracy[k]`` is ``None`` for classes with no ground-truth
    instances; those classes are excluded from the mean/std.
    """

    overall_accuracy: float
    per_class_accuracy: list[Optional[float]]
    per_class_mean: float
    per_class_std: float
    confusion: np.ndarray
    support: list[int]


def classification_report(
    predictions: Sequence[int], truths: Sequence[int], num_classes: int
) -> ClassificationReport:
    """Score predicted class indices against ground truth."""
    if len(predictions) != len(truths):
        raise ValueError(
            f"predictions ({len(predictions)}) and truths ({len(truths)}) differ in length"
        )
    if not predictions:
        raise ValueError("cannot score an empty prediction set")
    confusion = np.zeros((num_classes, num_classes), dtype=np.int64)
    for pred, true in zip(predictions, truths):
        if not 0 <= pred < num_classes or not 0 <= true < num_classes:
            raise ValueError(f"class index out of range [0, {num_classes}): ({pred}, {true})")
        confusion[true, pred] += 1
    support = confusion.sum(axis=1)
    per_class: list[Optional[float]] = [
        float(confusion[k, k] / support[k]) if support[k] > 0 else None
        for k in range(num_classes)
    ]
    present = np.array([a for a in per_class if a is not None], dtype=np.float64)
    return ClassificationReport(
        overall_accuracy=float(np.trace(confusion) / len(predictions)),
        per_class_accuracy=per_class,
        per_class_mean=float(present.mean()),
        per_class_std=float(present.std()),
        confusion=confusion,
        support=[int(s) for s in support],
    )


@dataclass(frozen=True)
class Detection:
    """A scored, classified box as consumed by the detection metrics."""

    box: BoundingBox
    score: float
    class_index: int


def match_detections(
    detections: Sequence[Detection],
    truths: Sequence[tuple[BoundingBox, int]],
    iou_threshold: float,
) -> list[tuple[Detection, bool]]:
    """Greedy TP/FP assignment for one image.

    Detections are visited in descending score order (stable for ties). A
    detection is a true positive when some unmatched same-class ground
    truth overlaps it with IoU >= threshold; the best-IoU candidate is
    consumed, so each ground truth matches at most once.
    """
    order = sorted(range(len(detections)), key=lambda i: -detections[i].score)
    matched = [False] * len(truths)
    flags: list[tuple[Detection, bool]] = []
    for i in order:
        det = detections[i]
        best_iou = 0.0
        best_j = -1
        for j, (truth_box, truth_class) in enumerate(truths):
            if matched[j] or truth_class != det.class_index:
                continue
            overlap = iou(det.box, truth_box)
            if overlap >= iou_threshold and overlap > best_iou:
                best_iou = overlap
                best_j = j
        if best_j >= 0:
            matched[best_j] = True
            flags.append((det, True))
        else:
            flags.append((det, False))
    return flags


def average_precision(
    flags: Sequence[bool], scores: Sequence[float], truth_count: int
) -> float:
    """101-point interpolated AP from score-ranked TP/FP flags.

    Returns 0 when there is nothing to detect and nothing detected (and
    also when detections exist but nothing was there to find).
    """
    if len(flags) != len(scores):
        raise ValueError("flags and scores must align")
    if truth_count < 0:
        raise ValueError("truth_count must be non-negative")
    if truth_count == 0 or not flags:
        return 0.0
    order = sorted(range(len(flags)), key=lambda i: -float(scores[i]))
    tp = np.cumsum([1.0 if flags[i] else 0.0 for i in order])
    fp = np.cumsum([0.0 if flags[i] else 1.0 for i in order])
    recall = tp / truth_count
    precision = tp / (tp + fp)
    envelope = np.maximum.accumulate(precision[::-1])[::-1]
    sampled = np.zeros_like(RECALL_SAMPLES)
    indices = np.searchsorted(recall, RECALL_SAMPLES, side="left")
    valid = indices < len(recall)
    sampled[valid] = envelope[indices[valid]]
    return float(sampled.mean())


@dataclass
class DetectionReport:
    """Per-class AP at each IoU threshold plus the raw PR curves."""

    iou_thresholds: tuple[float, ...]
    class_names: list[str]
    per_class_ap: dict[str, dict[float, Optional[float]]]
    mean_ap: dict[float, float]
    truth_counts: dict[str, int]
    curves: dict[str, dict[float, dict[str, list[float]]]]


def detection_report(
    detections_by_image: Mapping[Any, Sequence[Detection]],
    truths_by_image: Mapping[Any, Sequence[tuple[BoundingBox, int]]],
    class_names: Sequence[str],
    iou_thresholds: Sequence[float] = (0.5, 0.75),
) -> DetectionReport:
    """Aggregate per-class AP over a whole dataset.

    Classes with zero ground-truth instances report ``None`` and are left
    out of the unweighted mean AP.
    """
    class_names = list(class_names)
    truth_counts = {name: 0 for name in class_names}
    for truths in truths_by_image.values():
        for _, class_index in truths:
            truth_counts[class_names[class_index]] += 1

    per_class_ap: dict[str, dict[float, Optional[float]]] = {n: {} for n in class_names}
    curves: dict[str, dict[float, dict[str, list[float]]]] = {n: {} for n in class_names}
    mean_ap: dict[float, float] = {}
    image_ids = list(truths_by_image.keys())

    for threshold in iou_thresholds:
        pooled: dict[str, list[tuple[bool, float]]] = {n: [] for n in class_names}
        for image_id in image_ids:
            dets = detections_by_image.get(image_id, [])
            flags = match_detections(dets, truths_by_image[image_id], threshold)
            for det, is_tp in flags:
                pooled[class_names[det.class_index]].append((is_tp, det.score))
        present_aps = []
        for name in class_names:
            if truth_counts[name] == 0:
                per_class_ap[name][threshold] = None
                continue
            entries = pooled[name]
            entries.sort(key=lambda e: -e[1])
            flag_list = [e[0] for e in entries]
            score_list = [e[1] for e in entries]
            ap = average_precision(flag_list, score_list, truth_counts[name])
            per_class_ap[name][threshold] = ap
            present_aps.append(ap)
            tp = np.cumsum([1.0 if f else 0.0 for f in flag_list])
            fp = np.cumsum([0.0 if f else 1.0 for f in flag_list])
            curves[name][threshold] = {
                "recall": [float(r) for r in tp / truth_counts[name]],
                "precision": [float(p) for p in tp / np.maximum(tp + fp, 1.0)],
            }
        mean_ap[threshold] = float(np.mean(present_aps)) if present_aps else 0.0

    return DetectionReport(
        iou_thresholds=tuple(iou_thresholds),
        class_names=class_names,
        per_class_ap=per_class_ap,
        mean_ap=mean_ap,
        truth_counts=truth_counts,
        curves=curves,
    )


# ---------------------------------------------------------------------------
# File ingestion for the evaluation commands


def load_detection_records(path: str | Path) -> tuple[dict[str, list[Detection]], list[str]]:
    """Parse a detection output document (one JSON record per line).

    Returns detections keyed by image identifier plus the vocabulary the
    run used; all records must agree on the vocabulary.
    """
    path = Path(path)
    by_image: dict[str, list[Detection]] = {}
    vocabulary: list[str] | None = None
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise DataFormatError(f"cannot read detections {path}: {exc}") from exc
    for lineno, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        try:
            record = json.loads(line)
        except json.JSONDecodeError as exc:
            raise DataFormatError(f"{path}:{lineno}: invalid JSON: {exc}") from exc
        try:
            image = record["image"]
            vocab = list(record["vocabulary"])
            dets = [
                Detection(
                    box=BoundingBox(*d["box"]),
                    score=float(d["fused_score"]),
                    class_index=int(d["class_index"]),
                )
                for d in record["detections"]
            ]
        except (KeyError, TypeError, ValueError) as exc:
            raise DataFormatError(f"{path}:{lineno}: malformed detection record: {exc}") from exc
        if vocabulary is None:
            vocabulary = vocab
        elif vocabulary != vocab:
            raise DataFormatError(f"{path}:{lineno}: vocabulary differs across records")
        by_image[image] = dets
    if vocabulary is None:
        raise DataFormatError(f"{path}: no detection records found")
    return by_image, vocabulary


def load_labeled_images(
    path: str | Path, vocabulary: Sequence[str] | None = None
) -> dict[str, int]:
    """Load (image, class) labels from a line-delimited JSON file.

    Each record carries ``class_index`` directly or a ``species`` name
    resolved case-insensitively against ``vocabulary``.
    """
    path = Path(path)
    folded = (
        {name.casefold(): k for k, name in enumerate(vocabulary)} if vocabulary else None
    )
    labels: dict[str, int] = {}
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise DataFormatError(f"cannot read labels {path}: {exc}") from exc
    for lineno, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        try:
            record = json.loads(line)
        except json.JSONDecodeError as exc:
            raise DataFormatError(f"{path}:{lineno}: invalid JSON: {exc}") from exc
        image = record.get("image")
        if not isinstance(image, str) or not image:
            raise DataFormatError(f"{path}:{lineno}: missing image identifier")
        if "class_index" in record:
            labels[image] = int(record["class_index"])
        elif "species" in record:
            if folded is None:
                raise DataFormatError(
                    f"{path}:{lineno}: species labels require a vocabulary"
                )
            key = str(record["species"]).strip().casefold()
            if key not in folded:
                raise DataFormatError(
                    f"{path}:{lineno}: species {record['species']!r} not in vocabulary"
                )
            labels[image] = folded[key]
        else:
            raise DataFormatError(f"{path}:{lineno}: record needs class_index or species")
    return labels


def align_by_image(
    predictions: Mapping[str, int], truths: Mapping[str, int]
) -> tuple[list[int], list[int]]:
    """Pair predictions with truths by image key, truth order."""
    missing = [image for image in truths if image not in predictions]
    if missing:
        raise DataFormatError(f"predictions missing for images: {missing}")
    pred_list = [predictions[image] for image in truths]
    return pred_list, list(truths.values())


# ---------------------------------------------------------------------------
# Report documents


def classification_report_document(
    report: ClassificationReport, class_names: Sequence[str] | None = None
) -> dict[str, Any]:
    names = list(class_names) if class_names else [
        str(k) for k in range(len(report.per_class_accuracy))
    ]
    return {
        "format_version": 1,
        "overall_accuracy": report.overall_accuracy,
        "per_class_mean": report.per_class_mean,
        "per_class_std": report.per_class_std,
        "per_class_accuracy": {
            name: report.per_class_accuracy[k] for k, name in enumerate(names)
        },
        "support": {name: report.support[k] for k, name in enumerate(names)},
        "confusion": report.confusion.tolist(),
    }


def detection_report_document(report: DetectionReport) -> dict[str, Any]:
    return {
        "format_version": 1,
        "iou_thresholds": list(report.iou_thresholds),
        "mean_ap": {str(t): report.mean_ap[t] for t in report.iou_thresholds},
        "classes": {
            name: {
                "truth_count": report.truth_counts[name],
                "ap": {str(t): report.per_class_ap[name][t] for t in report.iou_thresholds},
                "curves": {
                    str(t): report.curves[name][t]
                    for t in report.iou_thresholds
                    if t in report.curves[name]
                },
            }
            for name in report.class_names
        },
    }


def per_class_table(document: dict[str, Any]) -> str:
    """Tab-delimited per-class summary for spreadsheets."""
    if "classes" in document:
        thresholds = [str(t) for t in document["iou_thresholds"]]
        header = "class\ttruth_count\t" + "\t".join(f"ap@{t}" for t in thresholds)
        rows = [header]
        for name, entry in document["classes"].items():
            aps = "\t".join(
                "" if entry["ap"][t] is None else repr(entry["ap"][t]) for t in thresholds
            )
            rows.append(f"{name}\t{entry['truth_count']}\t{aps}")
        return "\n".join(rows) + "\n"
    rows = ["class\tsupport\taccuracy"]
    for name, accuracy in document["per_class_accuracy"].items():
        support = document["support"][name]
        acc = "" if accuracy is None else repr(accuracy)
        rows.append(f"{name}\t{support}\t{acc}")
    return "\n".join(rows) + "\n"
