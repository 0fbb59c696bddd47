"""
Seeded sampling over datasets - deletion noise, per-class sampling and
stratified splitting.
"""

import logging
from dataclasses import dataclass
from typing import List, Optional, Tuple

import numpy as np

from src.data_collection.corpus import Dataset, Document, hash_features
from src.errors import ConfigError, DataError

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class NoiseConfig:
    deletion_ratio: float = 0.6
    seed: int = 0

    def __post_init__(self):
        if not 0.0 <= self.deletion_ratio < 1.0:
            raise ConfigError(f"deletion_ratio must lie in [0, 1), got {self.deletion_ratio}")


def _generator(seed: int, rng: Optional[np.random.Generator]) -> np.random.Generator:
    return rng if rng is not None else np.random.default_rng(seed)


def add_noise(doc: Document, cfg: NoiseConfig, rng: Optional[np.random.Generator] = None) -> Document:
    """
    Delete each token independently with probability ``cfg.deletion_ratio``.

    If every token would be deleted, one uniformly chosen token is kept.
    Features are re-derived from the surviving tokens.

    Args:
        doc: Source document
        cfg: Deletion ratio and seed
        rng: Generator to draw from instead of a fresh one seeded with cfg.seed

    Returns:
        Noisy copy of the document

    Raises:
        DataError: If the document has no tokens
    """
    if not doc.tokens:
        raise DataError("Cannot add noise to an empty document")
    rng = _generator(cfg.seed, rng)

    keep = rng.random(len(doc.tokens)) >= cfg.deletion_ratio
    if not keep.any():
        keep[rng.integers(len(doc.tokens))] = True
    tokens = tuple(t for t, k in zip(doc.tokens, keep) if k)
    return Document(text=' '.join(tokens), label=doc.label, tokens=tokens,
                    features=hash_features(tokens, doc.feat_dim))


def class_sample_indices(ds: Dataset, c: int, n: int, rng: np.random.Generator) -> np.ndarray:
    """Indices of n documents of class c (without replacement when possible)."""
    if n <= 0:
        raise ConfigError(f"Sample size must be > 0, got {n}")
    members = ds.class_indices(c)
    if members.size == 0:
        raise DataError(f"Class {c} is empty")
    return rng.choice(members, size=n, replace=members.size < n)


def class_sample(ds: Dataset, c: int, n: int, seed: int = 0,
                 rng: Optional[np.random.Generator] = None) -> List[Document]:
    """
    Uniformly sample n documents of class c.

    Sampling is without replacement when the class has at least n members and
    with replacement otherwise.

    Args:
        ds: Dataset
        c: Class label
        n: Sample size
        seed: Seed used when no generator is given
        rng: Optional generator

    Returns:
        Sampled documents

    Raises:
        DataError: If class c is empty
    """
    indices = class_sample_indices(ds, c, n, _generator(seed, rng))
    return [ds.docs[i] for i in indices]


def stratified_split(ds: Dataset, test_frac: float, seed: int) -> Tuple[Dataset, Dataset]:
    """
    Split each class proportionally into train and test parts.

    Each class contributes round(|class| * test_frac) documents to the test
    part; documents keep their ingestion order inside both parts.

    Args:
        ds: Dataset to split
        test_frac: Test fraction in (0, 1)
        seed: Shuffle seed

    Returns:
        (train, test)

    Raises:
        DataError: If a class cannot appear in both parts
    """
    if not 0.0 < test_frac < 1.0:
        raise ConfigError(f"test_frac must lie in (0, 1), got {test_frac}")
    rng = np.random.default_rng(seed)

    train_idx, test_idx = [], []
    for label in (0, 1):
        members = ds.class_indices(label)
        n_test = int(np.floor(members.size * test_frac + 0.5))
        if n_test < 1 or n_test > members.size - 1:
            raise DataError(f"Class {label} has {members.size} documents; too few to appear "
                            f"in both splits at test_frac={test_frac}")
        shuffled = rng.permutation(members)
        test_idx.extend(shuffled[:n_test].tolist())
        train_idx.extend(shuffled[n_test:].tolist())

    train = ds.subset(sorted(train_idx), name=f"{ds.name}-train")
    test = ds.subset(sorted(test_idx), name=f"{ds.name}-test")
    logger.info(f"Split {ds.name}: {len(train)} train / {len(test)} test")
    return train, test
