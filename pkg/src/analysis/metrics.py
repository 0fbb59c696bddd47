"""
Evaluation metrics - minority-class precision/recall/F1, class overlap
measures (Separability Index, k-Disagreeing Neighbours) and a PCA projection
for plotting embeddings.
"""

import logging
from dataclasses import asdict, dataclass, field
from typing import Dict, List, Sequence, Tuple, Union

import numpy as np
from sklearn.metrics import confusion_matrix

from src.analysis.distances import DistanceKind, pairwise_distances
from src.errors import DataError

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class ConfusionCounts:
    """Binary confusion counts with the minority class as positive."""
    tp: int
    fp: int
    fn: int
    tn: int

    def __post_init__(self):
        if min(self.tp, self.fp, self.fn, self.tn) < 0:
            raise DataError(f"Confusion counts must be nonnegative: {self}")

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.fn + self.tn

    def to_dict(self) -> Dict[str, int]:
        return asdict(self)


@dataclass(frozen=True)
class OverlapReport:
    si: float
    kdn: float
    k: int
    distance: str

    def to_dict(self) -> Dict[str, Union[float, int, str]]:
        return asdict(self)


@dataclass
class Projection:
    """Result of :func:`pca_project`."""
    points: np.ndarray
    components: np.ndarray
    explained_variance: List[float]
    mean: np.ndarray
    requested_dims: int
    warnings: List[str] = field(default_factory=list)

    @property
    def n_components(self) -> int:
        return self.components.shape[0]


def confusion_counts(y_true: Sequence[int], y_pred: Sequence[int],
                     positive: int) -> ConfusionCounts:
    """
    Count outcomes with ``positive`` (the minority label) as the positive class.

    Args:
        y_true: True labels
        y_pred: Predicted labels
        positive: Label treated as positive

    Returns:
        ConfusionCounts
    """
    negative = 1 - positive
    matrix = confusion_matrix(np.asarray(y_true), np.asarray(y_pred), labels=[negative, positive])
    (tn, fp), (fn, tp) = matrix.tolist()
    return ConfusionCounts(tp=int(tp), fp=int(fp), fn=int(fn), tn=int(tn))


def _ratio(num: float, den: float) -> float:
    return num / den if den else 0.0


def prf(counts: ConfusionCounts) -> Tuple[float, float, float]:
    """
    Precision, recall and F1 of the positive class; any 0/0 is 0.

    Args:
        counts: Confusion counts

    Returns:
        (precision, recall, f1)
    """
    precision = _ratio(counts.tp, counts.tp + counts.fp)
    recall = _ratio(counts.tp, counts.tp + counts.fn)
    f1 = _ratio(2 * precision * recall, precision + recall)
    return precision, recall, f1


def _neighbour_order(embeddings: np.ndarray, distance: Union[str, DistanceKind]) -> np.ndarray:
    """Row-wise neighbour indices by increasing distance, self last, ties by lowest index."""
    dist = pairwise_distances(distance, embeddings)
    np.fill_diagonal(dist, np.inf)
    return np.argsort(dist, axis=1, kind='stable')


def _validate_points(embeddings: np.ndarray, labels: Sequence[int]) -> Tuple[np.ndarray, np.ndarray]:
    emb = np.atleast_2d(np.asarray(embeddings, dtype=float))
    labels = np.asarray(labels)
    if emb.shape[0] != labels.size:
        raise DataError(f"{emb.shape[0]} embeddings but {labels.size} labels")
    if emb.shape[0] < 2:
        raise DataError(f"Neighbour metrics need at least 2 points, got {emb.shape[0]}")
    if np.unique(labels).size < 2:
        raise DataError(f"Neighbour metrics need both classes present, found {np.unique(labels).tolist()}")
    return emb, labels


def separability_index(embeddings: np.ndarray, labels: Sequence[int],
                       distance: Union[str, DistanceKind] = DistanceKind.EUCLIDEAN) -> float:
    """
    Fraction of points whose nearest other point shares their label.

    Raises:
        DataError: With fewer than 2 points or a single class
    """
    emb, labels = _validate_points(embeddings, labels)
    nearest = _neighbour_order(emb, distance)[:, 0]
    return float(np.mean(labels[nearest] == labels))


def kdn(embeddings: np.ndarray, labels: Sequence[int], k: int = 5,
        distance: Union[str, DistanceKind] = DistanceKind.EUCLIDEAN) -> float:
    """
    Mean fraction of each point's k nearest neighbours (self excluded) that
    carry a different label.

    Raises:
        DataError: If k < 1, k >= number of points or only one class is present
    """
    emb, labels = _validate_points(embeddings, labels)
    if k < 1 or k >= emb.shape[0]:
        raise DataError(f"k must satisfy 1 <= k < {emb.shape[0]}, got {k}")
    neighbours = _neighbour_order(emb, distance)[:, :k]
    disagreeing = labels[neighbours] != labels[:, None]
    return float(np.mean(disagreeing.sum(axis=1) / k))


def overlap_report(embeddings: np.ndarray, labels: Sequence[int], k: int = 5,
                   distance: Union[str, DistanceKind] = DistanceKind.EUCLIDEAN) -> OverlapReport:
    """SI and kDN computed on the same embeddings and labels."""
    kind = DistanceKind.from_name(distance)
    return OverlapReport(
        si=separability_index(embeddings, labels, kind),
        kdn=kdn(embeddings, labels, k, kind),
        k=k,
        distance=kind.value,
    )


def pca_project(embeddings: np.ndarray, dims: int = 2, tol: float = 1e-9,
                max_iter: int = 1000) -> Projection:
    """
    Project mean-centered embeddings onto their top principal directions.

    Directions come from power iteration with deflation on the sample
    covariance. Each component is signed so its largest-magnitude loading is
    positive. Zero-variance directions are dropped and reported in
    ``Projection.warnings``.

    Args:
        embeddings: Array (N, d)
        dims: Number of components requested
        tol: Convergence tolerance on the direction vector
        max_iter: Iteration cap per component

    Returns:
        Projection

    Raises:
        DataError: If there are fewer points than requested dims
    """
    X = np.atleast_2d(np.asarray(embeddings, dtype=float))
    if dims < 1 or X.shape[0] < dims:
        raise DataError(f"Projection to {dims} dims needs at least {dims} points, got {X.shape[0]}")

    mean = X.mean(axis=0)
    centered = X - mean
    cov = centered.T @ centered / max(X.shape[0] - 1, 1)
    scale = max(float(np.trace(cov)), np.finfo(float).tiny)

    rng = np.random.default_rng(0)
    components, variances, warnings = [], [], []
    A = cov.copy()

    for index in range(min(dims, X.shape[1])):
        v = rng.standard_normal(A.shape[0])
        v /= np.linalg.norm(v)
        for _ in range(max_iter):
            Av = A @ v
            norm = np.linalg.norm(Av)
            if norm <= 1e-12 * scale:
                break
            v_new = Av / norm
            converged = np.linalg.norm(v_new - v) < tol
            v = v_new
            if converged:
                break

        eigenvalue = float(v @ A @ v)
        if eigenvalue <= 1e-12 * scale:
            warnings.append(f"component {index + 1} has zero variance; "
                            f"returning {index} of {dims} components")
            break

        if v[np.argmax(np.abs(v))] < 0:
            v = -v
        components.append(v)
        variances.append(eigenvalue)
        A = A - eigenvalue * np.outer(v, v)

    if len(components) < dims and not warnings:
        warnings.append(f"data has {X.shape[1]} dimensions; returning {len(components)} of {dims} components")
    for message in warnings:
        logger.warning(f"PCA projection: {message}")

    comp = np.array(components).reshape(len(components), X.shape[1])
    return Projection(
        points=centered @ comp.T,
        components=comp,
        explained_variance=variances,
        mean=mean,
        requested_dims=dims,
        warnings=warnings,
    )
