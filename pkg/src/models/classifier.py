"""
Downstream 3-layer perceptron (input -> hidden tanh -> 2-way softmax) trained
on frozen embeddings, with the hidden width picked by stratified k-fold
cross-validation on minority-class F1.
"""

import logging
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np
from sklearn.model_selection import StratifiedKFold

from src.analysis.metrics import confusion_counts, prf
from src.errors import DataError
from src.models.network import EncoderState, LayerSpec, backward, forward, init_network, opt_step
from src.utils.common import timed

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class ClassifierSettings:
    hidden_grid: Tuple[int, ...] = (16, 64, 128)
    cv_folds: int = 5
    epochs: int = 60
    lr: float = 5e-3
    batch_size: int = 32


@dataclass
class CVRecord:
    """Cross-validation table of the hidden-width search."""
    folds: int
    widths: List[int]
    mean_f1: Dict[int, float]
    fold_f1: Dict[int, List[float]]
    chosen_width: int
    warnings: List[str] = field(default_factory=list)

    def to_dict(self) -> Dict[str, Any]:
        return {
            'folds': self.folds,
            'chosen_width': self.chosen_width,
            'table': [
                {'hidden_width': w, 'mean_f1': self.mean_f1.get(w), 'fold_f1': self.fold_f1.get(w, [])}
                for w in self.widths
            ],
            'warnings': list(self.warnings),
        }


class PerceptronClassifier:
    """Binary classifier over embeddings with one tanh hidden layer."""

    def __init__(self, hidden_width: int, settings: ClassifierSettings, seed: int):
        self.hidden_width = hidden_width
        self.settings = settings
        self.seed = seed
        self.state: Optional[EncoderState] = None
        self.minority_label: Optional[int] = None

    def fit(self, X: np.ndarray, y: Sequence[int]) -> 'PerceptronClassifier':
        """
        Train with softmax cross-entropy and minibatch Adam.

        Args:
            X: Embeddings (N, d)
            y: Binary labels

        Returns:
            self
        """
        X = np.asarray(X, dtype=float)
        y = np.asarray(y, dtype=int)
        if len(np.unique(y)) != 2:
            raise DataError("Classifier training needs both classes present")
        self.minority_label = minority_of(y)

        layers = [LayerSpec(X.shape[1], self.hidden_width, 'tanh'),
                  LayerSpec(self.hidden_width, 2, 'softmax')]
        state = init_network(self.seed, layers)
        rng = np.random.default_rng(self.seed)
        targets = np.eye(2)[y]
        batch_size = self.settings.batch_size

        for _ in range(self.settings.epochs):
            order = rng.permutation(len(y))
            for start in range(0, len(order), batch_size):
                idx = order[start:start + batch_size]
                probs, cache = forward(state, X[idx])
                # d/dq of mean cross-entropy; the softmax backward completes it
                grad = -targets[idx] / np.maximum(probs, 1e-12) / len(idx)
                grads = backward(state, cache, grad)
                state = opt_step(state, grads, self.settings.lr, component='classifier')

        self.state = state
        return self

    def predict_proba(self, X: np.ndarray) -> np.ndarray:
        if self.state is None:
            raise DataError("Classifier has not been trained")
        probs, _ = forward(self.state, np.atleast_2d(np.asarray(X, dtype=float)))
        return probs

    def predict(self, X: np.ndarray) -> np.ndarray:
        return np.argmax(self.predict_proba(X), axis=1)


def minority_of(labels: Sequence[int]) -> int:
    """Less frequent label; label 1 on a tie."""
    labels = np.asarray(labels, dtype=int)
    ones = int(np.sum(labels == 1))
    zeros = labels.size - ones
    return 0 if zeros < ones else 1


def minority_f1(y_true: Sequence[int], y_pred: Sequence[int], positive: int) -> float:
    return prf(confusion_counts(y_true, y_pred, positive))[2]


@timed
def train_classifier(train_embeddings: np.ndarray, labels: Sequence[int], seed: int,
                     settings: Optional[ClassifierSettings] = None) -> Tuple[PerceptronClassifier, CVRecord]:
    """
    Select the hidden width by stratified CV, then retrain on all data.

    Folds are reduced to the minority class size when it is smaller than the
    requested count; with fewer than 2 minority examples CV is skipped and
    the middle grid width is used. Ties in mean F1 go to the earlier width
    in the grid.

    Args:
        train_embeddings: Frozen embeddings (N, d)
        labels: Binary labels
        seed: Seed for folds, initialization and batch order
        settings: Grid, folds and training hyperparameters

    Returns:
        (trained classifier, CV record)

    Raises:
        DataError: If a class is missing
    """
    settings = settings or ClassifierSettings()
    X = np.asarray(train_embeddings, dtype=float)
    y = np.asarray(labels, dtype=int)
    if len(np.unique(y)) != 2:
        raise DataError("Classifier training needs both classes in the training labels")

    positive = minority_of(y)
    smallest = int(min(np.sum(y == 0), np.sum(y == 1)))
    widths = list(settings.hidden_grid)
    warnings: List[str] = []

    folds = settings.cv_folds
    if smallest < folds:
        folds = smallest
        message = f"minority class has {smallest} examples; reducing CV folds to {folds}"
        warnings.append(message)
        logger.warning(message)

    fold_f1: Dict[int, List[float]] = {w: [] for w in widths}
    if folds >= 2:
        splitter = StratifiedKFold(n_splits=folds, shuffle=True, random_state=seed)
        for fold, (train_idx, val_idx) in enumerate(splitter.split(X, y)):
            for width in widths:
                model = PerceptronClassifier(width, settings, seed + fold).fit(X[train_idx], y[train_idx])
                fold_f1[width].append(minority_f1(y[val_idx], model.predict(X[val_idx]), positive))
        mean_f1 = {w: float(np.mean(scores)) for w, scores in fold_f1.items()}
        chosen = max(widths, key=lambda w: (mean_f1[w], -widths.index(w)))
    else:
        message = "too few minority examples for cross-validation; using the middle grid width"
        warnings.append(message)
        logger.warning(message)
        mean_f1 = {}
        chosen = widths[len(widths) // 2]

    logger.info(f"Selected hidden width {chosen} ({folds}-fold CV, minority F1 by width: {mean_f1})")
    classifier = PerceptronClassifier(chosen, settings, seed).fit(X, y)
    record = CVRecord(folds=folds, widths=widths, mean_f1=mean_f1, fold_f1=fold_f1,
                      chosen_width=chosen, warnings=warnings)
    return classifier, record
