"""Symmetric contrastive alignment of paired image/text embeddings.

The objective pulls each batch item's visual embedding toward its own
caption embedding and away from every other caption in the batch (and
symmetrically for captions toward images):

    loss = -(1/2N) * sum_i [ log softmax_row_i(i) + log softmax_col_i(i) ]

over the temperature-scaled similarity matrix ``Z = V T^T / tau``. The
temperature is trained in log-space so it stays positive without
projection.

A desk-scale trainer exercises the whole objective end to end: the visual
encoder is an affine map from small feature vectors into the embedding
space, the text encoder averages learnable token embeddings, and both are
optimized with an adaptive-moment first-order method. Runs are seed
deterministic down to the bit.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .embeddings import DEFAULT_TEMPERATURE
from .tokenization import tokenize

__all__ = [
    "TrainConfig",
    "AlignmentBatch",
    "symmetric_contrastive_loss",
    "symmetric_contrastive_loss_grad",
    "ToyParams",
    "init_toy_params",
    "collect_tokens",
    "encode_features",
    "encode_captions",
    "train_toy",
    "TrainResult",
    "EpochStats",
    "toy_image_features",
    "format_loss_trace",
]


@dataclass(frozen=True)
class TrainConfig:
    """Hyperparameters for an alignment run; the seed is echoed in outputs."""

    epochs: int = 150
    learning_rate: float = 5e-7
    batch_size: int = 20
    temperature_init: float = DEFAULT_TEMPERATURE
    seed: int = 0

    def __post_init__(self) -> None:
        if self.epochs <= 0:
            raise ValueError("epochs must be positive")
        if self.learning_rate < 0.0:
            raise ValueError("learning rate must be non-negative")
        if self.batch_size <= 0:
            raise ValueError("batch size must be positive")
        if self.temperature_init <= 0.0:
            raise ValueError("initial temperature must be positive")


@dataclass(frozen=True)
class AlignmentBatch:
    """N positionally paired (feature vector, caption) items, N >= 2."""

    features: np.ndarray
    captions: tuple[str, ...]

    def __init__(self, features: np.ndarray, captions: Sequence[str]) -> None:
        features = np.asarray(features, dtype=np.float64)
        captions = tuple(str(c) for c in captions)
        if features.ndim != 2:
            raise ValueError("batch features must be a 2-D (N, f) array")
        if features.shape[0] != len(captions):
            raise ValueError(
                f"batch has {features.shape[0]} feature rows but {len(captions)} captions"
            )
        if len(captions) < 2:
            raise ValueError("a contrastive batch needs at least 2 pairs")
        for c in captions:
            if not tokenize(c):
                raise ValueError(f"caption has no tokens: {c!r}")
        object.__setattr__(self, "features", features)
        object.__setattr__(self, "captions", captions)

    def __len__(self) -> int:
        return len(self.captions)


def _pairwise_logits(visual: np.ndarray, textual: np.ndarray, tau: float):
    v = np.asarray(visual, dtype=np.float64)
    t = np.asarray(textual, dtype=np.float64)
    if v.ndim != 2 or t.ndim != 2:
        raise ValueError("embedding batches must be 2-D (N, d) arrays")
    if v.shape != t.shape:
        raise ValueError(f"mismatched embedding batches: {v.shape} vs {t.shape}")
    if v.shape[0] == 0:
        raise ValueError("embedding batches must be non-empty")
    if tau <= 0.0:
        raise ValueError(f"temperature must be positive, got {tau}")
    similarities = v @ t.T
    return v, t, similarities, similarities / tau


def _log_softmax(z: np.ndarray, axis: int) -> np.ndarray:
    shifted = z - z.max(axis=axis, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=axis, keepdims=True))


def symmetric_contrastive_loss(visual, textual, tau: float = DEFAULT_TEMPERATURE) -> float:
    """Mean of the image-to-text and text-to-image contrastive objectives.

    Both softmaxes use max-subtracted log-sum-exp. The loss is always
    >= 0; it equals ``ln N`` when all pairwise similarities coincide and
    exactly 0 for a single pair (each denominator has one term).
    """
    _, _, _, z = _pairwise_logits(visual, textual, tau)
    n = z.shape[0]
    diag = np.arange(n)
    row_terms = _log_softmax(z, axis=1)[diag, diag]
    col_terms = _log_softmax(z, axis=0)[diag, diag]
    # The +0.0 folds the N=1 result -0.0 onto exactly 0.0.
    return float(-(row_terms.sum() + col_terms.sum()) / (2.0 * n)) + 0.0


def symmetric_contrastive_loss_grad(
    visual, textual, tau: float = DEFAULT_TEMPERATURE
) -> tuple[float, np.ndarray, np.ndarray, float]:
    """Loss plus analytic gradients w.r.t. every embedding component and tau.

    Treats the (pre-normalized) embeddings as free variables, matching
    central finite differences of :func:`symmetric_contrastive_loss`.
    """
    v, t, similarities, z = _pairwise_logits(visual, textual, tau)
    n = z.shape[0]
    diag = np.arange(n)
    log_p_rows = _log_softmax(z, axis=1)
    log_p_cols = _log_softmax(z, axis=0)
    loss = float(-(log_p_rows[diag, diag].sum() + log_p_cols[diag, diag].sum()) / (2.0 * n))

    # d(loss)/d(z) for the combined objective: (P + Q - 2I) / 2N.
    grad_z = (np.exp(log_p_rows) + np.exp(log_p_cols) - 2.0 * np.eye(n)) / (2.0 * n)
    grad_v = (grad_z @ t) / tau
    grad_t = (grad_z.T @ v) / tau
    grad_tau = float(-(grad_z * similarities).sum() / (tau * tau))
    return loss, grad_v, grad_t, grad_tau


# ---------------------------------------------------------------------------
# Desk-scale trainable encoders


@dataclass
class ToyParams:
    """Trainable state of the toy encoders plus the log-temperature."""

    vision_weight: np.ndarray  # (d, f)
    vision_bias: np.ndarray  # (d,)
    token_embeddings: np.ndarray  # (n_tokens, d)
    token_index: dict[str, int]
    log_tau: float

    @property
    def tau(self) -> float:
        return math.exp(self.log_tau)

    def copy(self) -> "ToyParams":
        return ToyParams(
            vision_weight=self.vision_weight.copy(),
            vision_bias=self.vision_bias.copy(),
            token_embeddings=self.token_embeddings.copy(),
            token_index=dict(self.token_index),
            log_tau=self.log_tau,
        )


def collect_tokens(batches: Iterable[AlignmentBatch]) -> list[str]:
    """All caption tokens across batches, sorted for a stable table order."""
    tokens: set[str] = set()
    for batch in batches:
        for caption in batch.captions:
            tokens.update(tokenize(caption))
    return sorted(tokens)


def init_toy_params(
    feature_dim: int,
    tokens: Sequence[str],
    embedding_dim: int = 512,
    temperature: float = DEFAULT_TEMPERATURE,
    seed: int = 0,
) -> ToyParams:
    """Gaussian-initialized toy encoders over a fixed token table."""
    if feature_dim <= 0 or embedding_dim <= 0:
        raise ValueError("dimensions must be positive")
    if not tokens:
        raise ValueError("token table must be non-empty")
    if temperature <= 0.0:
        raise ValueError("initial temperature must be positive")
    gen = np.random.default_rng(seed)
    return ToyParams(
        vision_weight=gen.standard_normal((embedding_dim, feature_dim)) / math.sqrt(feature_dim),
        vision_bias=np.zeros(embedding_dim),
        token_embeddings=gen.standard_normal((len(tokens), embedding_dim))
        / math.sqrt(embedding_dim),
        token_index={tok: i for i, tok in enumerate(tokens)},
        log_tau=math.log(temperature),
    )


def _normalize_rows(raw: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    norms = np.linalg.norm(raw, axis=1, keepdims=True)
    if np.any(norms < 1e-12):
        raise ValueError("degenerate zero-norm embedding during encoding")
    return raw / norms, norms


def encode_features(params: ToyParams, features: np.ndarray) -> np.ndarray:
    """Affine-map features into the embedding space, unit-normalized."""
    raw = np.asarray(features, dtype=np.float64) @ params.vision_weight.T + params.vision_bias
    return _normalize_rows(raw)[0]


def _caption_token_ids(params: ToyParams, caption: str) -> list[int]:
    ids = [params.token_index[t] for t in tokenize(caption) if t in params.token_index]
    if not ids:
        raise ValueError(f"caption has no tokens in the trained table: {caption!r}")
    return ids


def encode_captions(params: ToyParams, captions: Sequence[str]) -> np.ndarray:
    """Bag-of-token average embeddings for captions, unit-normalized."""
    raw = np.stack(
        [params.token_embeddings[_caption_token_ids(params, c)].mean(axis=0) for c in captions]
    )
    return _normalize_rows(raw)[0]


@dataclass(frozen=True)
class EpochStats:
    epoch: int
    mean_loss: float
    tau: float


@dataclass
class TrainResult:
    params: ToyParams
    trace: list[EpochStats]


@dataclass
class _AdamState:
    """Adaptive-moment state over the flattened parameter list."""

    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    m: list[np.ndarray] = field(default_factory=list)
    v: list[np.ndarray] = field(default_factory=list)

    def update(self, params: list[np.ndarray], grads: list[np.ndarray], lr: float) -> None:
        if not self.m:
            self.m = [np.zeros_like(p) for p in params]
            self.v = [np.zeros_like(p) for p in params]
        self.step += 1
        bias1 = 1.0 - self.beta1**self.step
        bias2 = 1.0 - self.beta2**self.step
        for p, g, m, v in zip(params, grads, self.m, self.v):
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            p -= lr * (m / bias1) / (np.sqrt(v / bias2) + self.eps)


def _backward_through_normalization(
    grad_normalized: np.ndarray, normalized: np.ndarray, norms: np.ndarray
) -> np.ndarray:
    inner = (grad_normalized * normalized).sum(axis=1, keepdims=True)
    return (grad_normalized - inner * normalized) / norms


def train_toy(
    config: TrainConfig, params: ToyParams, batches: Sequence[AlignmentBatch]
) -> TrainResult:
    """Optimize the toy encoders on the contrastive objective.

    Runs ``config.epochs`` passes over ``batches`` in order, recording the
    per-epoch mean loss and the temperature after each epoch. The input
    params are not mutated; training aborts with a diagnostic naming the
    batch if the loss ever goes non-finite.
    """
    if not batches:
        raise ValueError("training requires at least one batch")
    params = params.copy()
    log_tau = np.array([params.log_tau])
    state = _AdamState()
    trace: list[EpochStats] = []

    for epoch in range(1, config.epochs + 1):
        losses = []
        for batch_idx, batch in enumerate(batches):
            tau = float(np.exp(log_tau[0]))
            raw_v = batch.features @ params.vision_weight.T + params.vision_bias
            v, v_norms = _normalize_rows(raw_v)
            token_ids = [_caption_token_ids(params, c) for c in batch.captions]
            raw_t = np.stack(
                [params.token_embeddings[ids].mean(axis=0) for ids in token_ids]
            )
            t, t_norms = _normalize_rows(raw_t)

            loss, grad_v, grad_t, grad_tau = symmetric_contrastive_loss_grad(v, t, tau)
            if not math.isfinite(loss):
                raise ArithmeticError(
                    f"non-finite loss at epoch {epoch}, batch {batch_idx}"
                )
            losses.append(loss)

            grad_raw_v = _backward_through_normalization(grad_v, v, v_norms)
            grad_weight = grad_raw_v.T @ batch.features
            grad_bias = grad_raw_v.sum(axis=0)

            grad_raw_t = _backward_through_normalization(grad_t, t, t_norms)
            grad_tokens = np.zeros_like(params.token_embeddings)
            for row, ids in zip(grad_raw_t, token_ids):
                contribution = row / len(ids)
                for idx in ids:
                    grad_tokens[idx] += contribution

            grad_log_tau = np.array([grad_tau * tau])
            state.update(
                [params.vision_weight, params.vision_bias, params.token_embeddings, log_tau],
                [grad_weight, grad_bias, grad_tokens, grad_log_tau],
                lr=config.learning_rate,
            )
        trace.append(
            EpochStats(
                epoch=epoch,
                mean_loss=float(np.mean(losses)),
                tau=float(np.exp(log_tau[0])),
            )
        )

    params.log_tau = float(log_tau[0])
    return TrainResult(params=params, trace=trace)


def toy_image_features(image: np.ndarray, grid: int = 2) -> np.ndarray:
    """Per-cell mean RGB features (grid x grid x 3 values, scaled to [0, 1]).

    This is the visual input of the desk-scale trainer when batches are
    built from real image files.
    """
    if grid <= 0:
        raise ValueError("feature grid must be positive")
    height, width = image.shape[:2]
    pixels = np.asarray(image, dtype=np.float64)
    cells = []
    for r in range(grid):
        for c in range(grid):
            y0, y1 = height * r // grid, max(height * (r + 1) // grid, height * r // grid + 1)
            x0, x1 = width * c // grid, max(width * (c + 1) // grid, width * c // grid + 1)
            cells.append(pixels[y0:y1, x0:x1].reshape(-1, 3).mean(axis=0))
    return np.concatenate(cells) / 255.0


def format_loss_trace(trace: Sequence[EpochStats]) -> str:
    """Tab-delimited trace with columns (epoch, mean_loss, tau)."""
    lines = ["epoch\tmean_loss\ttau"]
    lines.extend(f"{row.epoch}\t{row.mean_loss!r}\t{row.tau!r}" for row in trace)
    return "\n".join(lines) + "\n"
