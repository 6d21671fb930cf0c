"""Independent reference implementations used as test oracles.

Deliberately naive: plain Python loops and textbook formulas, sharing no
code path with the library implementations they check.
"""

from __future__ import annotations

import math


def naive_symmetric_loss(visual, textual, tau):
    """Double-loop contrastive loss; no vectorization, no shared helpers."""
    n = len(visual)
    total = 0.0
    for i in range(n):
        num = math.exp(_dot(visual[i], textual[i]) / tau)
        den = sum(math.exp(_dot(visual[i], textual[j]) / tau) for j in range(n))
        total += math.log(num / den)
        num_t = math.exp(_dot(textual[i], visual[i]) / tau)
        den_t = sum(math.exp(_dot(textual[i], visual[j]) / tau) for j in range(n))
        total += math.log(num_t / den_t)
    return -total / (2.0 * n)


def _dot(a, b):
    return sum(float(x) * float(y) for x, y in zip(a, b))


def naive_similarity_matrix(visual, textual):
    """Entry-by-entry dot products."""
    return [[_dot(v, t) for t in textual] for v in visual]


def _iou_tuple(a, b):
    ix = min(a[2], b[2]) - max(a[0], b[0])
    iy = min(a[3], b[3]) - max(a[1], b[1])
    if ix <= 0 or iy <= 0:
        return 0.0
    inter = ix * iy
    area_a = (a[2] - a[0]) * (a[3] - a[1])
    area_b = (b[2] - b[0]) * (b[3] - b[1])
    union = area_a + area_b - inter
    return inter / union if union > 0 else 0.0


def brute_force_nms(boxes, scores, classes, iou_threshold, class_aware):
    """Literal pool-removal greedy suppression; returns kept indices.

    boxes are (x0, y0, x1, y1) tuples. Repeatedly take the highest-scoring
    remaining candidate (earliest index on ties), then delete every
    remaining candidate overlapping it beyond the threshold.
    """
    pool = list(range(len(boxes)))
    kept = []
    while pool:
        best = pool[0]
        for i in pool[1:]:
            if scores[i] > scores[best]:
                best = i
        kept.append(best)
        pool.remove(best)
        survivors = []
        for i in pool:
            same_class = (not class_aware) or classes[i] == classes[best]
            if same_class and _iou_tuple(boxes[i], boxes[best]) > iou_threshold:
                continue
            survivors.append(i)
        pool = survivors
    return kept
