"""
Loss algebra for class-aware contrastive training.

- ``recon_loss``: cross-entropy between the normalized clean token counts and
  the decoder's softmax output.
- ``carol_loss``: the sampled class-separation loss. Every unordered pair of
  the balanced sample contributes -D for cross-class pairs and
  D * (1/(2n-1) + 1) for same-class pairs; the sum is divided by the pair
  count n(2n-1).
- ``exact_class_separation``: interclass/intraclass means over every ordered
  pair (self-pairs included in the intraclass means) and S = L_D - L_S.
- ``combined_loss``: total = c * carol + (1 - c) * recon.
"""

import itertools
import math
from dataclasses import asdict, dataclass
from typing import Dict, Sequence, Tuple, Union

import numpy as np

from src.analysis.distances import DistanceKind, distance, distance_grad, pairwise_distances
from src.errors import ConfigError, DataError

LOG_CLAMP = 1e-12


@dataclass(frozen=True)
class CarolConfig:
    n: int = 3
    distance: DistanceKind = DistanceKind.EUCLIDEAN
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, 'distance', DistanceKind.from_name(self.distance))
        if self.n < 1:
            raise ConfigError(f"Contrastive sample size n must be >= 1, got {self.n}")


@dataclass(frozen=True)
class LossBreakdown:
    carol: float
    recon: float
    total: float
    c: float

    def to_dict(self) -> Dict[str, float]:
        return asdict(self)

    def is_finite(self) -> bool:
        return all(math.isfinite(v) for v in (self.carol, self.recon, self.total))


def recon_loss(decoder_output: np.ndarray,
               original_features: np.ndarray) -> Tuple[float, np.ndarray]:
    """
    Reconstruction cross-entropy and its gradient w.r.t. the decoder output.

    The loss is -sum_i p_i log(max(q_i, 1e-12)) with p the clean token-count
    vector normalized to sum 1. Entries clamped at 1e-12 get zero gradient.
    A 2-D input is treated as a batch of rows: the mean loss is returned and
    each row gradient is divided by the batch size.

    Args:
        decoder_output: Softmax output q, shape (d,) or (batch, d)
        original_features: Clean token counts, same shape

    Returns:
        (loss, gradient of loss w.r.t. decoder_output)

    Raises:
        DataError: If any original feature row sums to zero or shapes differ
    """
    q = np.asarray(decoder_output, dtype=float)
    x = np.asarray(original_features, dtype=float)
    if q.shape != x.shape:
        raise DataError(f"Shape mismatch between decoder output {q.shape} and features {x.shape}")

    batched = q.ndim == 2
    q2, x2 = np.atleast_2d(q), np.atleast_2d(x)
    totals = x2.sum(axis=1, keepdims=True)
    if np.any(totals <= 0) or np.any(x2 < 0):
        raise DataError("Original features must be nonnegative with positive sum")

    p = x2 / totals
    clamped = q2 <= LOG_CLAMP
    safe_q = np.where(clamped, LOG_CLAMP, q2)
    losses = -np.sum(p * np.log(safe_q), axis=1)
    grad = np.where(clamped, 0.0, -p / safe_q)

    if batched:
        batch = q2.shape[0]
        return float(losses.mean()), grad / batch
    return float(losses[0]), grad[0]


def _check_balanced(labels: np.ndarray, n: int) -> None:
    if labels.size < 2:
        raise DataError(f"Contrastive loss needs at least 2 embeddings, got {labels.size}")
    values, counts = np.unique(labels, return_counts=True)
    if len(values) != 2 or counts[0] != counts[1] or counts[0] != n:
        found = dict(zip(values.tolist(), counts.tolist()))
        raise DataError(f"Contrastive sample is not balanced with n={n} per class: {found}")


def carol_loss(embeddings: np.ndarray, labels: Sequence[int],
               cfg: CarolConfig) -> Tuple[float, np.ndarray]:
    """
    Sampled class-aware contrastive loss and its per-embedding gradients.

    Args:
        embeddings: Array (2n, d) of a balanced sample, n per class
        labels: Labels aligned with the rows
        cfg: Sample size n and distance kind

    Returns:
        (loss, gradients of shape (2n, d))

    Raises:
        DataError: If the sample is not balanced or has fewer than 2 rows
    """
    emb = np.atleast_2d(np.asarray(embeddings, dtype=float))
    labels = np.asarray(labels)
    if emb.shape[0] != labels.size:
        raise DataError(f"{emb.shape[0]} embeddings but {labels.size} labels")
    _check_balanced(labels, cfg.n)

    size = emb.shape[0]
    same_weight = 1.0 / (size - 1) + 1.0
    loss = 0.0
    grads = np.zeros_like(emb)
    m = 0

    for i, j in itertools.combinations(range(size), 2):
        d = distance(cfg.distance, emb[i], emb[j])
        grad_i, grad_j = distance_grad(cfg.distance, emb[i], emb[j])
        weight = -1.0 if labels[i] != labels[j] else same_weight
        loss += weight * d
        grads[i] += weight * grad_i
        grads[j] += weight * grad_j
        m += 1

    return loss / m, grads / m


def sampled_pair_means(embeddings: np.ndarray, labels: Sequence[int],
                       distance_kind: Union[str, DistanceKind]) -> Tuple[float, float]:
    """
    Unweighted mean cross-class and same-class distance over unordered pairs.

    Returns:
        (mean cross-class distance, mean same-class distance)
    """
    emb = np.atleast_2d(np.asarray(embeddings, dtype=float))
    labels = np.asarray(labels)
    dist = pairwise_distances(distance_kind, emb)
    upper = np.triu(np.ones_like(dist, dtype=bool), k=1)
    cross = upper & (labels[:, None] != labels[None, :])
    same = upper & (labels[:, None] == labels[None, :])
    cross_mean = float(dist[cross].mean()) if cross.any() else 0.0
    same_mean = float(dist[same].mean()) if same.any() else 0.0
    return cross_mean, same_mean


def exact_class_separation(embeddings: np.ndarray, labels: Sequence[int],
                           distance_kind: Union[str, DistanceKind]) -> Tuple[float, float, float]:
    """
    Exact interclass distance, intraclass distance and class separation.

    L_D averages all |X1|*|X2| cross pairs. L_S sums the two within-class
    means, each over all |Xc|^2 ordered pairs including self-pairs, so each
    mean is diluted by (|Xc|-1)/|Xc| relative to a mean over distinct pairs.

    Args:
        embeddings: Array (N, d)
        labels: Binary labels aligned with the rows
        distance_kind: Distance kind

    Returns:
        (L_D, L_S, S) with S = L_D - L_S

    Raises:
        DataError: If either class is empty
    """
    emb = np.atleast_2d(np.asarray(embeddings, dtype=float))
    labels = np.asarray(labels)
    classes = np.unique(labels)
    if len(classes) != 2:
        raise DataError(f"Class separation needs both classes present, found {classes.tolist()}")

    first, second = emb[labels == classes[0]], emb[labels == classes[1]]
    interclass = float(pairwise_distances(distance_kind, first, second).mean())
    intraclass = 0.0
    for members in (first, second):
        intraclass += float(pairwise_distances(distance_kind, members).sum()) / members.shape[0] ** 2
    return interclass, intraclass, interclass - intraclass


def combined_loss(c: float, carol: float, recon: float) -> LossBreakdown:
    """
    Combine the two loss components with trade-off coefficient c.

    Args:
        c: Weight in [0, 1] of the contrastive component
        carol: Contrastive loss value
        recon: Reconstruction loss value

    Returns:
        LossBreakdown with total = c * carol + (1 - c) * recon

    Raises:
        ConfigError: If c lies outside [0, 1]
    """
    if not 0.0 <= c <= 1.0:
        raise ConfigError(f"c must lie in [0, 1], got {c}")
    total = c * carol + (1.0 - c) * recon
    return LossBreakdown(carol=float(carol), recon=float(recon), total=float(total), c=float(c))
