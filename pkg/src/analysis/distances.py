"""
Distance kernels between embedding vectors and their analytic gradients.

Three kinds are supported: euclidean, chebyshev and cosine (1 - cosine
similarity). ``distance``/``distance_grad`` work on a single pair and back the
contrastive loss; ``pairwise_distances`` builds full matrices for the
neighbour metrics and the exact class-separation oracle.
"""

from enum import Enum
from typing import Optional, Sequence, Tuple, Union

import numpy as np
from scipy.spatial.distance import cdist

from src.errors import ConfigError, DataError, DimensionMismatchError, ZeroNormError

ArrayLike = Union[Sequence[float], np.ndarray]


class DistanceKind(str, Enum):
    EUCLIDEAN = 'euclidean'
    CHEBYSHEV = 'chebyshev'
    COSINE = 'cosine'

    @classmethod
    def from_name(cls, name: Union[str, 'DistanceKind']) -> 'DistanceKind':
        """
        Parse a serialized distance name.

        Args:
            name: "euclidean", "chebyshev" or "cosine" (case-insensitive)

        Returns:
            The matching DistanceKind

        Raises:
            ConfigError: For any other name
        """
        if isinstance(name, cls):
            return name
        try:
            return cls(str(name).strip().lower())
        except ValueError:
            valid = ', '.join(k.value for k in cls)
            raise ConfigError(f"Unknown distance '{name}' (expected one of: {valid})") from None

    def __str__(self) -> str:
        return self.value


def as_vector(values: ArrayLike) -> np.ndarray:
    """
    Convert to a finite, non-empty 1-D float vector.

    Raises:
        DataError: On NaN/Inf entries, an empty input or a non-1-D shape
    """
    vec = np.asarray(values, dtype=float)
    if vec.ndim != 1:
        raise DataError(f"Vector must be 1-dimensional, got shape {vec.shape}")
    if vec.size == 0:
        raise DataError("Vector must have dimension > 0")
    if not np.all(np.isfinite(vec)):
        raise DataError("Vector holds non-finite entries")
    return vec


def _pair(a: ArrayLike, b: ArrayLike) -> Tuple[np.ndarray, np.ndarray]:
    a, b = as_vector(a), as_vector(b)
    if a.shape != b.shape:
        raise DimensionMismatchError(f"Dimension mismatch: {a.size} vs {b.size}")
    return a, b


def _norms(a: np.ndarray, b: np.ndarray) -> Tuple[float, float]:
    na, nb = float(np.linalg.norm(a)), float(np.linalg.norm(b))
    if na == 0.0 or nb == 0.0:
        raise ZeroNormError("Cosine distance is undefined for a zero-norm vector")
    return na, nb


def distance(kind: Union[str, DistanceKind], a: ArrayLike, b: ArrayLike) -> float:
    """
    Distance D(a, b) >= 0 between two vectors.

    Args:
        kind: Distance kind
        a: First vector
        b: Second vector of equal dimension

    Returns:
        euclidean sqrt(sum (a-b)^2), chebyshev max |a-b|, or cosine
        1 - a.b / (|a| |b|)

    Raises:
        DimensionMismatchError: If the dimensions differ
        ZeroNormError: For cosine with a zero-norm input
    """
    kind = DistanceKind.from_name(kind)
    a, b = _pair(a, b)

    if kind is DistanceKind.EUCLIDEAN:
        return float(np.linalg.norm(a - b))
    if kind is DistanceKind.CHEBYSHEV:
        return float(np.max(np.abs(a - b)))

    na, nb = _norms(a, b)
    cos = float(np.dot(a, b)) / (na * nb)
    # rounding can push |cos| just past 1
    return float(1.0 - np.clip(cos, -1.0, 1.0))


def distance_grad(kind: Union[str, DistanceKind], a: ArrayLike,
                  b: ArrayLike) -> Tuple[np.ndarray, np.ndarray]:
    """
    Gradients (dD/da, dD/db) of :func:`distance`.

    Euclidean at a == b returns zero vectors. Chebyshev puts the whole
    subgradient on the coordinate with the largest |a_i - b_i|, lowest index
    on ties.

    Raises:
        DimensionMismatchError: If the dimensions differ
        ZeroNormError: For cosine with a zero-norm input
    """
    kind = DistanceKind.from_name(kind)
    a, b = _pair(a, b)
    diff = a - b

    if kind is DistanceKind.EUCLIDEAN:
        d = float(np.linalg.norm(diff))
        if d == 0.0:
            return np.zeros_like(a), np.zeros_like(b)
        grad_a = diff / d
        return grad_a, -grad_a

    if kind is DistanceKind.CHEBYSHEV:
        grad_a = np.zeros_like(a)
        i = int(np.argmax(np.abs(diff)))
        grad_a[i] = np.sign(diff[i])
        return grad_a, -grad_a

    na, nb = _norms(a, b)
    cos = float(np.dot(a, b)) / (na * nb)
    grad_a = -(b / (na * nb) - cos * a / (na * na))
    grad_b = -(a / (na * nb) - cos * b / (nb * nb))
    return grad_a, grad_b


def pairwise_distances(kind: Union[str, DistanceKind], X: np.ndarray,
                       Y: Optional[np.ndarray] = None) -> np.ndarray:
    """
    Full distance matrix between the rows of X and the rows of Y (default X).

    Args:
        kind: Distance kind
        X: Array of shape (n, d)
        Y: Optional array of shape (m, d)

    Returns:
        Array of shape (n, m)

    Raises:
        DimensionMismatchError: If the column counts differ
        ZeroNormError: For cosine when any row has zero norm
    """
    kind = DistanceKind.from_name(kind)
    X = np.atleast_2d(np.asarray(X, dtype=float))
    Y = X if Y is None else np.atleast_2d(np.asarray(Y, dtype=float))
    if X.shape[1] != Y.shape[1]:
        raise DimensionMismatchError(f"Dimension mismatch: {X.shape[1]} vs {Y.shape[1]}")
    if not (np.all(np.isfinite(X)) and np.all(np.isfinite(Y))):
        raise DataError("Embeddings hold non-finite entries")

    if kind is DistanceKind.COSINE:
        if np.any(np.linalg.norm(X, axis=1) == 0) or np.any(np.linalg.norm(Y, axis=1) == 0):
            raise ZeroNormError("Cosine distance is undefined for a zero-norm embedding")
        return np.clip(cdist(X, Y, metric='cosine'), 0.0, 2.0)

    return cdist(X, Y, metric=kind.value)
