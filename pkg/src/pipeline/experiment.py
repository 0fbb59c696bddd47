"""
Experiment orchestration - the two-phase protocol (encoder training, then a
perceptron on frozen embeddings), artifact writing and the C sweep.
"""

import json
import logging
import os
import time
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from joblib import Parallel, delayed

from src.analysis.distances import DistanceKind
from src.analysis.losses import exact_class_separation
from src.analysis.metrics import Projection, confusion_counts, overlap_report, pca_project, prf
from src.config import RunConfig
from src.data_collection.corpus import Dataset, describe_dataset, read_corpus
from src.data_collection.sampling import stratified_split
from src.errors import CarolError, ConfigError, DataError, stage_errors
from src.models.classifier import ClassifierSettings, train_classifier
from src.models.network import EncoderState, load_checkpoint, save_checkpoint
from src.pipeline.training import TRAINING_LOG_COLUMNS, TrainingHistory, embed_dataset, train_encoder
from src.utils.common import create_directories, save_data, timed

logger = logging.getLogger(__name__)

SWEEP_METRICS = ['f1', 'precision', 'recall', 'si', 'kdn', 'final_carol', 'final_recon']
OPTIMIZED_C_SELECTION = 'oracle-test-f1'


@dataclass
class RunReport:
    """
    Outcome of one run. ``wall_clock_seconds`` is kept in memory and printed,
    but left out of ``to_dict`` so serialized reports are reproducible.
    """
    config: Dict[str, Any]
    datasets: Dict[str, Any]
    epoch_losses: List[Dict[str, float]]
    metrics: Dict[str, Any] = field(default_factory=dict)
    overlap: Dict[str, Any] = field(default_factory=dict)
    class_separation: Dict[str, float] = field(default_factory=dict)
    cv: Dict[str, Any] = field(default_factory=dict)
    warnings: List[str] = field(default_factory=list)
    wall_clock_seconds: float = 0.0

    @property
    def final_losses(self) -> Dict[str, float]:
        return self.epoch_losses[-1] if self.epoch_losses else {}

    def to_dict(self) -> Dict[str, Any]:
        return {
            'config': self.config,
            'datasets': self.datasets,
            'epoch_losses': self.epoch_losses,
            'final_losses': self.final_losses,
            'metrics': self.metrics,
            'overlap': self.overlap,
            'class_separation': self.class_separation,
            'cv': self.cv,
            'warnings': self.warnings,
        }

    def summary_lines(self) -> List[str]:
        lines = [f"c={self.config['c']}", f"seed={self.config['seed']}"]
        for key in ('precision', 'recall', 'f1'):
            if key in self.metrics:
                lines.append(f"{key}={self.metrics[key]:.6f}")
        for key in ('si', 'kdn'):
            if key in self.overlap:
                lines.append(f"{key}={self.overlap[key]:.6f}")
        for key in ('carol', 'recon', 'total'):
            if key in self.final_losses:
                lines.append(f"final_{key}={self.final_losses[key]:.6f}")
        lines.append(f"wall_clock_seconds={self.wall_clock_seconds:.2f}")
        return lines


@dataclass
class RunArtifacts:
    """Arrays produced alongside a report; written by :func:`write_run_artifacts`."""
    history: Optional[TrainingHistory] = None
    state: Optional[EncoderState] = None
    train_embeddings: Optional[np.ndarray] = None
    train_labels: Optional[np.ndarray] = None
    test_embeddings: Optional[np.ndarray] = None
    test_labels: Optional[np.ndarray] = None
    projection: Optional[Projection] = None


def _jsonable(value: Any) -> Any:
    if isinstance(value, dict):
        return {str(k): _jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_jsonable(v) for v in value]
    if isinstance(value, np.generic):
        return value.item()
    if isinstance(value, np.ndarray):
        return value.tolist()
    return value


# ----------------------
# Data loading
# ----------------------

def load_datasets(cfg: RunConfig) -> Tuple[Dataset, Dataset]:
    """
    Training and test datasets: both files when test_path is set, otherwise a
    seeded stratified split of the training corpus.
    """
    with stage_errors('load_data'):
        if not cfg.train_path:
            raise ConfigError("train_path is required")
        train = read_corpus(cfg.train_path, cfg.feat_dim)
        if cfg.test_path:
            return train, read_corpus(cfg.test_path, cfg.feat_dim)
        return stratified_split(train, cfg.test_frac, cfg.seed)


def classifier_settings(cfg: RunConfig) -> ClassifierSettings:
    return ClassifierSettings(hidden_grid=cfg.hidden_grid, cv_folds=cfg.cv_folds,
                              epochs=cfg.clf_epochs, lr=cfg.clf_lr, batch_size=cfg.clf_batch)


# ----------------------
# Protocol stages
# ----------------------

def run_training(cfg: RunConfig) -> Tuple[RunReport, RunArtifacts]:
    """Train the encoder only; the report carries config, datasets and losses."""
    start = time.perf_counter()
    train, test = load_datasets(cfg)
    history = TrainingHistory()
    state = train_encoder(train, cfg, history)
    report = RunReport(
        config=cfg.to_dict(),
        datasets={'train': describe_dataset(train), 'test': describe_dataset(test)},
        epoch_losses=history.epochs,
        wall_clock_seconds=time.perf_counter() - start,
    )
    return report, RunArtifacts(history=history, state=state)


@timed
def run_experiment(cfg: RunConfig, state: Optional[EncoderState] = None) -> Tuple[RunReport, RunArtifacts]:
    """
    Full protocol: train_encoder -> embed train/test -> train_classifier ->
    test precision/recall/F1 -> SI/kDN on test embeddings.

    Args:
        cfg: Run configuration
        state: Pre-trained encoder; when given, encoder training is skipped

    Returns:
        (report, artifacts)
    """
    start = time.perf_counter()
    train, test = load_datasets(cfg)

    history = None
    if state is None:
        history = TrainingHistory()
        state = train_encoder(train, cfg, history)

    train_emb = embed_dataset(state, train)
    test_emb = embed_dataset(state, test)

    with stage_errors('train_classifier'):
        classifier, cv_record = train_classifier(train_emb, train.labels, cfg.seed, classifier_settings(cfg))

    with stage_errors('evaluate'):
        predictions = classifier.predict(test_emb)
        counts = confusion_counts(test.labels, predictions, positive=train.minority_label)
        precision, recall, f1 = prf(counts)

    with stage_errors('overlap'):
        overlap = overlap_report(test_emb, test.labels, cfg.k, cfg.overlap_distance_kind)
        interclass, intraclass, separation = exact_class_separation(test_emb, test.labels,
                                                                    cfg.overlap_distance_kind)
        projection = pca_project(test_emb, dims=2)

    report = RunReport(
        config=cfg.to_dict(),
        datasets={'train': describe_dataset(train), 'test': describe_dataset(test)},
        epoch_losses=history.epochs if history is not None else [],
        metrics={'precision': precision, 'recall': recall, 'f1': f1,
                 'positive_label': train.minority_label, 'confusion': counts.to_dict()},
        overlap=overlap.to_dict(),
        class_separation={'interclass': interclass, 'intraclass': intraclass, 'separation': separation},
        cv=cv_record.to_dict(),
        warnings=list(cv_record.warnings) + list(projection.warnings),
        wall_clock_seconds=time.perf_counter() - start,
    )
    logger.info(f"Run finished: f1={f1:.4f} si={overlap.si:.4f} kdn={overlap.kdn:.4f} "
                f"in {report.wall_clock_seconds:.1f}s")
    artifacts = RunArtifacts(history=history, state=state,
                             train_embeddings=train_emb, train_labels=train.labels,
                             test_embeddings=test_emb, test_labels=test.labels,
                             projection=projection)
    return report, artifacts


# ----------------------
# Artifacts
# ----------------------

def embeddings_frame(embeddings: np.ndarray, labels: Sequence[int]) -> pd.DataFrame:
    """Embeddings CSV layout: label, e0, ..., e{d-1}."""
    embeddings = np.atleast_2d(embeddings)
    frame = pd.DataFrame(embeddings, columns=[f"e{i}" for i in range(embeddings.shape[1])])
    frame.insert(0, 'label', np.asarray(labels, dtype=int))
    return frame


def read_embeddings(path: str) -> Tuple[np.ndarray, np.ndarray]:
    """
    Read an embeddings CSV written by :func:`embeddings_frame`.

    Raises:
        DataError: If the file is missing or malformed
    """
    if not os.path.exists(path):
        raise DataError(f"Embeddings file not found: {path}")
    try:
        frame = pd.read_csv(path, float_precision='round_trip')
    except (pd.errors.ParserError, pd.errors.EmptyDataError, UnicodeDecodeError) as e:
        raise DataError(f"Cannot parse embeddings file {path}: {e}") from e

    value_cols = [c for c in frame.columns if c != 'label']
    if 'label' not in frame.columns or not value_cols:
        raise DataError(f"{path} must have a 'label' column and at least one embedding column")
    values = frame[value_cols].apply(pd.to_numeric, errors='coerce').to_numpy(dtype=float)
    bad_rows = np.flatnonzero(~np.isfinite(values).all(axis=1))
    if bad_rows.size:
        raise DataError(f"{path}: non-numeric embedding value on data line {int(bad_rows[0]) + 2}")
    labels = frame['label'].to_numpy()
    if not np.isin(labels, [0, 1]).all():
        raise DataError(f"{path}: labels must be 0 or 1")
    return values, labels.astype(int)


def projection_frame(projection: Projection, labels: Sequence[int]) -> pd.DataFrame:
    """Projected points as columns x, y (then pc3, ...) plus label."""
    names = ['x', 'y'] + [f"pc{i + 1}" for i in range(2, projection.n_components)]
    frame = pd.DataFrame(projection.points, columns=names[:projection.n_components])
    frame['label'] = np.asarray(labels, dtype=int)
    return frame


def write_report(report: RunReport, path: str) -> str:
    create_directories([os.path.dirname(path)])
    with open(path, 'w', encoding='utf-8') as f:
        json.dump(_jsonable(report.to_dict()), f, indent=2, sort_keys=True)
        f.write('\n')
    logger.info(f"Saved run report to {path}")
    return path


def write_run_artifacts(report: RunReport, artifacts: RunArtifacts, output_dir: str,
                        checkpoint: bool = False) -> Dict[str, str]:
    """
    Write run_report.json plus whichever of training_log.csv, encoder.joblib,
    embeddings_{train,test}.csv and projection.csv the artifacts allow.

    Returns:
        Mapping of artifact name to path
    """
    with stage_errors('write_artifacts'):
        create_directories([output_dir])
        paths = {'run_report': write_report(report, os.path.join(output_dir, 'run_report.json'))}

        if artifacts.history is not None:
            log = pd.DataFrame(artifacts.history.steps, columns=TRAINING_LOG_COLUMNS)
            paths['training_log'] = save_data(log, os.path.join(output_dir, 'training_log.csv'))
        if checkpoint and artifacts.state is not None:
            paths['checkpoint'] = save_checkpoint(artifacts.state, os.path.join(output_dir, 'encoder.joblib'))
        if artifacts.train_embeddings is not None:
            paths['embeddings_train'] = save_data(
                embeddings_frame(artifacts.train_embeddings, artifacts.train_labels),
                os.path.join(output_dir, 'embeddings_train.csv'))
        if artifacts.test_embeddings is not None:
            paths['embeddings_test'] = save_data(
                embeddings_frame(artifacts.test_embeddings, artifacts.test_labels),
                os.path.join(output_dir, 'embeddings_test.csv'))
        if artifacts.projection is not None:
            paths['projection'] = save_data(
                projection_frame(artifacts.projection, artifacts.test_labels),
                os.path.join(output_dir, 'projection.csv'))
        return paths


def evaluate_checkpoint(cfg: RunConfig, checkpoint_path: str) -> Tuple[RunReport, RunArtifacts]:
    """Run the evaluation phase on a saved encoder."""
    with stage_errors('load_checkpoint'):
        state = load_checkpoint(checkpoint_path)
    return run_experiment(cfg, state=state)



# ----------------------
# C sweep
# ----------------------

@dataclass
class SweepResult:
    """
    Sweep outcome. ``best_by_distance`` maps each contrastive distance to the
    c with the highest mean test F1; ``best_c``/``best_distance`` is the
    overall highest cell.
    """
    table: pd.DataFrame
    means: pd.DataFrame
    best_c: Optional[float]
    best_distance: Optional[str] = None
    best_by_distance: Dict[str, float] = field(default_factory=dict)
    selection: str = OPTIMIZED_C_SELECTION


def _run_cell(cfg: RunConfig) -> Dict[str, Any]:
    row: Dict[str, Any] = {'distance': cfg.distance, 'c': cfg.c, 'seed': cfg.seed, 'status': 'ok', 'error': ''}
    cell = f"distance={cfg.distance} c={cfg.c} seed={cfg.seed}"
    try:
        report, _ = run_experiment(cfg)
    except CarolError as e:
        logger.warning(f"Sweep cell {cell} failed in stage {e.stage}: {e.message}")
        row.update({'status': 'failed', 'error': f"{e.__class__.__name__}[{e.stage}]: {e.message}"})
        row.update({metric: np.nan for metric in SWEEP_METRICS})
        return row
    except Exception as e:
        logger.exception(f"Sweep cell {cell} failed unexpectedly: {e}")
        row.update({'status': 'failed', 'error': f"{e.__class__.__name__}[unknown]: {e}"})
        row.update({metric: np.nan for metric in SWEEP_METRICS})
        return row

    row.update({
        'f1': report.metrics['f1'],
        'precision': report.metrics['precision'],
        'recall': report.metrics['recall'],
        'si': report.overlap['si'],
        'kdn': report.overlap['kdn'],
        'final_carol': report.final_losses.get('carol', np.nan),
        'final_recon': report.final_losses.get('recon', np.nan),
    })
    return row


@timed
def sweep_c(cfg_template: RunConfig, c_values: Sequence[float], seeds: Sequence[int],
            jobs: int = 1, distances: Optional[Sequence[str]] = None) -> SweepResult:
    """
    Run every (distance, c, seed) cell and summarize per (distance, c).

    Cells are independent; with jobs > 1 they run in a joblib worker pool.
    Rows are sorted by (distance, c, seed) so the table does not depend on
    completion order. A failed cell is recorded with status "failed" and the
    sweep goes on. Per distance, the best c is the one with the highest mean
    test F1 (oracle selection); ties go to the smaller c.

    Args:
        cfg_template: Configuration shared by all cells
        c_values: Values of c in [0, 1]
        seeds: Seeds
        jobs: Worker processes (joblib ``n_jobs``)
        distances: Contrastive distances to cross with c; defaults to the
            template's distance

    Returns:
        SweepResult

    Raises:
        ConfigError: If any c lies outside [0, 1], a distance is unknown or a list is empty
    """
    with stage_errors('config'):
        if not c_values or not seeds:
            raise ConfigError("sweep needs at least one c value and one seed")
        bad = [c for c in c_values if not 0.0 <= c <= 1.0]
        if bad:
            raise ConfigError(f"c values must lie in [0, 1], got {bad}")
        if distances is None:
            distances = [cfg_template.distance]
        if not distances:
            raise ConfigError("sweep needs at least one distance")
        kinds = list(dict.fromkeys(DistanceKind.from_name(d).value for d in distances))

    cells = [cfg_template.replace(distance=kind, c=float(c), seed=int(seed))
             for kind in kinds for c in c_values for seed in seeds]
    logger.info(f"Running C sweep: {len(kinds)} distance(s) x {len(c_values)} c values x "
                f"{len(seeds)} seeds with {jobs} job(s)")
    rows = Parallel(n_jobs=jobs)(delayed(_run_cell)(cell) for cell in cells)

    columns = ['distance', 'c', 'seed'] + SWEEP_METRICS + ['status', 'error']
    table = (pd.DataFrame(rows, columns=columns)
             .sort_values(['distance', 'c', 'seed'], kind='stable').reset_index(drop=True))
    means = (table[table['status'] == 'ok']
             .groupby(['distance', 'c'], as_index=False)[SWEEP_METRICS].mean()
             .sort_values(['distance', 'c']).reset_index(drop=True))

    best_by_distance = {
        str(kind): float(group.loc[group['f1'].idxmax(), 'c'])
        for kind, group in means.groupby('distance', sort=True)
    }
    best_c, best_distance = None, None
    if not means.empty:
        top = means.loc[means['f1'].idxmax()]
        best_c, best_distance = float(top['c']), str(top['distance'])
        for kind, c in best_by_distance.items():
            logger.info(f"Highest mean test F1 for {kind} at c={c} ({OPTIMIZED_C_SELECTION})")
    return SweepResult(table=table, means=means, best_c=best_c, best_distance=best_distance,
                       best_by_distance=best_by_distance)


def write_sweep(result: SweepResult, output_dir: str) -> Dict[str, str]:
    """Write sweep_table.csv and sweep_means.csv (the oracle-best c per distance flagged)."""
    with stage_errors('write_artifacts'):
        means = result.means.copy()
        means['optimized'] = [result.best_by_distance.get(kind) == c
                              for kind, c in zip(means['distance'], means['c'])]
        means['selection'] = result.selection
        return {
            'sweep_table': save_data(result.table, os.path.join(output_dir, 'sweep_table.csv')),
            'sweep_means': save_data(means, os.path.join(output_dir, 'sweep_means.csv')),
        }
