"""
Synthetic imbalanced corpora with a controllable class-overlap dial.

Both classes draw tokens from one vocabulary whose base frequencies follow a
Zipf-like law (rank order seeded). Every word is assigned to one class side,
alternating along the frequency ranking. A class draws words on its own side
at their base weight and words on the other side at ``base * overlap ** s``,
where the sharpness ``s`` is 1 for most words and ``HEAD_SHARPNESS`` for the
``head_words`` most frequent ones:

- overlap 0 gives disjoint supports;
- overlap 1 gives identical distributions;
- in between, the frequent head words are nearly uninformative (like
  function words in real text) and the class signal sits in the tail.
"""

import json
import logging
import math
import os
from typing import Any, Dict, Tuple

import numpy as np

from src.data_collection.corpus import Dataset, describe_dataset, make_document, write_corpus
from src.errors import ConfigError

logger = logging.getLogger(__name__)

MINORITY_LABEL = 1
MAJORITY_LABEL = 0
HEAD_WORDS = 20
HEAD_SHARPNESS = 0.05


def build_vocabulary(vocab_size: int) -> np.ndarray:
    """Token strings ``w0000``, ``w0001``, ... (zero-padded to a common width)."""
    width = max(4, len(str(vocab_size - 1)))
    return np.array([f"w{i:0{width}d}" for i in range(vocab_size)])


def class_distributions(vocab_size: int, overlap: float, rng: np.random.Generator,
                        head_words: int = HEAD_WORDS) -> Tuple[np.ndarray, np.ndarray]:
    """
    Class-conditional unigram distributions over ``build_vocabulary(vocab_size)``.

    Args:
        vocab_size: Vocabulary size
        overlap: Overlap dial in [0, 1]
        rng: Generator for the frequency rank order
        head_words: Number of most frequent words with weak class preference
            (capped at a quarter of the vocabulary)

    Returns:
        (p0, p1) probability vectors for labels 0 and 1
    """
    ranks = rng.permutation(vocab_size)
    base = 1.0 / (ranks + 1.0)
    side = ranks % 2
    sharpness = np.where(ranks < min(head_words, vocab_size // 4), HEAD_SHARPNESS, 1.0)
    off_side = overlap ** sharpness

    distributions = []
    for label in (MAJORITY_LABEL, MINORITY_LABEL):
        weights = base * np.where(side == label, 1.0, off_side)
        distributions.append(weights / weights.sum())
    return distributions[0], distributions[1]


def gen_synthetic(n_minority: int, imbalance_ratio: float, overlap: float, vocab_size: int,
                  doc_len: int, seed: int, feat_dim: int = 1024, head_words: int = HEAD_WORDS) -> Dataset:
    """
    Generate a binary corpus with class sizes n_minority and
    round(n_minority * imbalance_ratio).

    Args:
        n_minority: Minority class size (label 1)
        imbalance_ratio: Majority/minority size ratio, >= 1
        overlap: Overlap dial in [0, 1]
        vocab_size: Vocabulary size, >= 4
        doc_len: Tokens per document
        seed: Generator seed
        feat_dim: Hashed feature dimension of the returned documents
        head_words: Frequent words with weak class preference

    Returns:
        Dataset with documents in shuffled order
    """
    if n_minority <= 0 or vocab_size < 4 or doc_len <= 0 or head_words < 0:
        raise ConfigError("n_minority and doc_len must be > 0, vocab_size >= 4 and head_words >= 0")
    if imbalance_ratio < 1:
        raise ConfigError(f"imbalance_ratio must be >= 1, got {imbalance_ratio}")
    if not 0.0 <= overlap <= 1.0:
        raise ConfigError(f"overlap must lie in [0, 1], got {overlap}")

    rng = np.random.default_rng(seed)
    vocab = build_vocabulary(vocab_size)
    p0, p1 = class_distributions(vocab_size, overlap, rng, head_words)
    distributions = {MAJORITY_LABEL: p0, MINORITY_LABEL: p1}

    n_majority = int(math.floor(n_minority * imbalance_ratio + 0.5))
    labels = np.array([MINORITY_LABEL] * n_minority + [MAJORITY_LABEL] * n_majority)
    labels = rng.permutation(labels)

    docs = []
    for label in labels.tolist():
        tokens = vocab[rng.choice(vocab_size, size=doc_len, p=distributions[label])]
        docs.append(make_document(' '.join(tokens), label, feat_dim))

    ds = Dataset(docs, name=f"synthetic-ir{imbalance_ratio:g}-ov{overlap:g}-s{seed}")
    logger.info(f"Generated {len(ds)} synthetic documents ({n_minority} minority, {n_majority} majority)")
    return ds


def save_synthetic(ds: Dataset, output_dir: str, params: Dict[str, Any],
                   name: str = 'corpus') -> Dict[str, str]:
    """
    Write the corpus and a sidecar with the generator parameters and seed.

    Args:
        ds: Generated dataset
        output_dir: Output directory
        params: Generator parameters (recorded verbatim)
        name: Base file name

    Returns:
        Paths of the written files
    """
    os.makedirs(output_dir, exist_ok=True)
    corpus_path = write_corpus(ds, os.path.join(output_dir, f"{name}.jsonl"))
    meta_path = os.path.join(output_dir, f"{name}.meta.json")
    metadata = {
        'generator': 'gen_synthetic',
        'parameters': params,
        'summary': describe_dataset(ds),
    }
    with open(meta_path, 'w', encoding='utf-8') as f:
        json.dump(metadata, f, indent=2, sort_keys=True)
        f.write('\n')
    logger.info(f"Saved corpus metadata to {meta_path}")
    return {'corpus': corpus_path, 'metadata': meta_path}
