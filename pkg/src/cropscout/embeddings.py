"""The shared vision-language embedding space.

Region and class embeddings are compared by plain dot product; because the
pipeline L2-normalizes every encoder output at the boundary, dot product
and cosine similarity coincide. All scoring helpers therefore expect
pre-normalized vectors.
"""

from __future__ import annotations

import numpy as np

__all__ = [
    "EMBEDDING_DIM",
    "DEFAULT_TEMPERATURE",
    "l2_normalize",
    "similarity_matrix",
    "classify_rows",
    "softmax_classify",
]

EMBEDDING_DIM = 512
DEFAULT_TEMPERATURE = 0.07

_ZERO_NORM_EPS = 1e-12


def l2_normalize(vector: np.ndarray) -> np.ndarray:
    """Scale ``vector`` to unit Euclidean norm, preserving direction."""
    vector = np.asarray(vector, dtype=np.float64)
    if not np.all(np.isfinite(vector)):
        raise ValueError("embedding contains non-finite components")
    norm = float(np.linalg.norm(vector))
    if norm < _ZERO_NORM_EPS:
        raise ValueError("cannot normalize a zero-norm embedding (degenerate direction)")
    return vector / norm


def _stack(vectors, name: str) -> np.ndarray:
    arr = np.asarray(vectors, dtype=np.float64)
    if arr.ndim == 1:
        arr = arr.reshape(1, -1)
    if arr.ndim != 2 or arr.shape[0] == 0 or arr.shape[1] == 0:
        raise ValueError(f"{name} embeddings must form a non-empty 2-D array")
    return arr


def similarity_matrix(visual, textual) -> np.ndarray:
    """Dot-product similarities between M region and K class embeddings.

    Entry (i, k) is ``visual[i] . textual[k]``; with unit-norm inputs every
    entry lies in [-1, 1].
    """
    v = _stack(visual, "visual")
    t = _stack(textual, "textual")
    if v.shape[1] != t.shape[1]:
        raise ValueError(
            f"embedding dimension mismatch: visual d={v.shape[1]}, textual d={t.shape[1]}"
        )
    return v @ t.T


def classify_rows(similarities: np.ndarray) -> list[tuple[int, float]]:
    """Per-row argmax classification over a similarity matrix.

    Returns one (class-index, raw-score) pair per row; ties break toward
    the lowest class index.
    """
    s = np.asarray(similarities, dtype=np.float64)
    if s.ndim != 2 or s.size == 0:
        raise ValueError("similarity matrix must be non-empty and 2-D")
    indices = np.argmax(s, axis=1)
    scores = s[np.arange(s.shape[0]), indices]
    return [(int(k), float(v)) for k, v in zip(indices, scores)]


def softmax_classify(v_global, textual, tau: float = DEFAULT_TEMPERATURE) -> np.ndarray:
    """Temperature-scaled softmax over class similarities for one image.

    Computes ``P(k) = exp(<v, t_k>/tau) / sum_j exp(<v, t_j>/tau)`` with
    max-subtraction; at tau = 0.07 logits are inflated ~14x and raw
    exponentiation would overflow.
    """
    if tau <= 0.0:
        raise ValueError(f"temperature must be positive, got {tau}")
    v = np.asarray(v_global, dtype=np.float64).reshape(-1)
    t = _stack(textual, "textual")
    if v.shape[0] != t.shape[1]:
        raise ValueError(
            f"embedding dimension mismatch: image d={v.shape[0]}, textual d={t.shape[1]}"
        )
    logits = (t @ v) / tau
    logits -= logits.max()
    weights = np.exp(logits)
    return weights / weights.sum()
