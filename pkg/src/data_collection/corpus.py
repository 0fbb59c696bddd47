"""
Corpus handling - documents, datasets, tokenization, feature hashing and the
JSON-lines corpus format.

Corpus format: UTF-8, one JSON object per line with fields ``text`` (string)
and ``label`` (0 or 1). Blank lines are skipped.
"""

import functools
import hashlib
import json
import logging
import os
import unicodedata
from dataclasses import dataclass, field
from typing import Any, Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np

from src.errors import DataError, error_handler

logger = logging.getLogger(__name__)


def _is_punctuation(ch: str) -> bool:
    return unicodedata.category(ch).startswith('P')


def tokenize(text: str) -> List[str]:
    """
    Lowercase, split on Unicode whitespace and strip leading/trailing
    punctuation from each token; empty tokens are dropped.

    Args:
        text: Raw document text

    Returns:
        Token list
    """
    tokens = []
    for raw in text.lower().split():
        start, end = 0, len(raw)
        while start < end and _is_punctuation(raw[start]):
            start += 1
        while end > start and _is_punctuation(raw[end - 1]):
            end -= 1
        if start < end:
            tokens.append(raw[start:end])
    return tokens


@functools.lru_cache(maxsize=65536)
def token_hash(token: str) -> int:
    """Stable unsigned 64-bit hash of a token (BLAKE2b, 8-byte digest, little-endian)."""
    digest = hashlib.blake2b(token.encode('utf-8'), digest_size=8).digest()
    return int.from_bytes(digest, 'little')


def hash_features(tokens: Sequence[str], feat_dim: int) -> np.ndarray:
    """
    Hashed token counts: each token adds 1 to bucket ``token_hash % feat_dim``.

    Args:
        tokens: Token sequence
        feat_dim: Number of buckets

    Returns:
        Count vector of length feat_dim summing to len(tokens)
    """
    if feat_dim <= 0:
        raise DataError(f"feat_dim must be > 0, got {feat_dim}")
    buckets = [token_hash(t) % feat_dim for t in tokens]
    return np.bincount(np.asarray(buckets, dtype=np.int64), minlength=feat_dim).astype(float)


@dataclass(frozen=True)
class Document:
    text: str
    label: int
    tokens: Tuple[str, ...]
    features: np.ndarray = field(repr=False, compare=False)

    @property
    def feat_dim(self) -> int:
        return self.features.shape[0]


def make_document(text: str, label: int, feat_dim: int) -> Document:
    """Build a Document, deriving tokens and hashed features from the text."""
    if label not in (0, 1):
        raise DataError(f"Label must be 0 or 1, got {label!r}")
    tokens = tuple(tokenize(text))
    return Document(text=text, label=int(label), tokens=tokens,
                    features=hash_features(tokens, feat_dim))


class Dataset:
    """
    Immutable, ordered collection of documents with both labels present.

    Attributes:
        docs: Documents in ingestion order
        minority_label: The less frequent label (1 on a tie)
        imbalance_ratio: |majority| / |minority|
    """

    def __init__(self, docs: Iterable[Document], name: str = 'dataset'):
        self.docs: Tuple[Document, ...] = tuple(docs)
        self.name = name
        self.labels = np.array([d.label for d in self.docs], dtype=int)

        counts = {label: int(np.sum(self.labels == label)) for label in (0, 1)}
        if counts[0] == 0 or counts[1] == 0:
            raise DataError(f"Dataset '{name}' must contain both labels, got counts {counts}")
        dims = {d.feat_dim for d in self.docs}
        if len(dims) != 1:
            raise DataError(f"Dataset '{name}' mixes feature dimensions {sorted(dims)}")

        self.class_counts = counts
        self.minority_label = 0 if counts[0] < counts[1] else 1
        majority = counts[1 - self.minority_label]
        self.imbalance_ratio = majority / counts[self.minority_label]
        self.feat_dim = dims.pop()

    def __len__(self) -> int:
        return len(self.docs)

    def __iter__(self):
        return iter(self.docs)

    def __getitem__(self, index: int) -> Document:
        return self.docs[index]

    def class_indices(self, label: int) -> np.ndarray:
        return np.flatnonzero(self.labels == label)

    def feature_matrix(self) -> np.ndarray:
        return np.vstack([d.features for d in self.docs])

    def subset(self, indices: Sequence[int], name: Optional[str] = None) -> 'Dataset':
        return Dataset((self.docs[i] for i in indices), name=name or self.name)


def describe_dataset(ds: Dataset) -> Dict[str, Any]:
    """Size, class counts, minority label, imbalance ratio and mean length."""
    return {
        'name': ds.name,
        'size': len(ds),
        'class_counts': {str(k): v for k, v in ds.class_counts.items()},
        'minority_label': ds.minority_label,
        'imbalance_ratio': ds.imbalance_ratio,
        'mean_tokens': float(np.mean([len(d.tokens) for d in ds.docs])),
        'feat_dim': ds.feat_dim,
    }


def parse_corpus_lines(lines: Iterable[str], feat_dim: int, source: str = '<memory>') -> List[Document]:
    """
    Parse JSON-lines records into documents.

    A line is malformed when it is not a JSON object, its label is not 0 or 1
    or its text has no tokens.

    Raises:
        DataError: Naming the first malformed line number
    """
    docs = []
    for line_no, line in enumerate(lines, start=1):
        if not line.strip():
            continue
        try:
            record = json.loads(line)
        except json.JSONDecodeError as e:
            raise DataError(f"{source}:{line_no}: invalid JSON ({e.msg})") from e
        if not isinstance(record, dict):
            raise DataError(f"{source}:{line_no}: expected a JSON object")
        text, label = record.get('text'), record.get('label')
        if not isinstance(text, str):
            raise DataError(f"{source}:{line_no}: field 'text' must be a string")
        if isinstance(label, bool) or label not in (0, 1):
            raise DataError(f"{source}:{line_no}: field 'label' must be 0 or 1, got {label!r}")
        doc = make_document(text, int(label), feat_dim)
        if not doc.tokens:
            raise DataError(f"{source}:{line_no}: text has no tokens after tokenization")
        docs.append(doc)
    return docs


def read_corpus(path: str, feat_dim: int) -> Dataset:
    """
    Load a JSON-lines corpus.

    Args:
        path: Corpus file
        feat_dim: Hashed feature dimension

    Returns:
        Dataset in file order

    Raises:
        DataError: If the file is missing or a line is malformed
    """
    if not os.path.exists(path):
        raise DataError(f"Corpus file not found: {path}")
    with open(path, 'r', encoding='utf-8') as f:
        docs = parse_corpus_lines(f, feat_dim, source=path)
    ds = Dataset(docs, name=os.path.splitext(os.path.basename(path))[0])
    logger.info(f"Loaded {len(ds)} documents from {path} (imbalance ratio {ds.imbalance_ratio:.2f})")
    return ds


def corpus_lines(ds: Dataset) -> List[str]:
    return [json.dumps({'text': d.text, 'label': d.label}, ensure_ascii=False, sort_keys=True)
            for d in ds.docs]


@error_handler('write_corpus')
def write_corpus(ds: Dataset, path: str) -> str:
    """Write a dataset in the JSON-lines corpus format."""
    directory = os.path.dirname(path)
    if directory:
        os.makedirs(directory, exist_ok=True)
    with open(path, 'w', encoding='utf-8', newline='\n') as f:
        for line in corpus_lines(ds):
            f.write(line + '\n')
    logger.info(f"Wrote {len(ds)} documents to {path}")
    return path
