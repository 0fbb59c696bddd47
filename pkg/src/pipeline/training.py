"""
Encoder training with the combined objective and embedding of datasets.

Each optimizer step draws one reconstruction batch (noisy inputs, clean
targets) and one balanced contrastive sample of n documents per class from
the whole training set, weights the two gradient flows by (1 - c) and c,
and applies a single Adam update.
"""

import logging
from dataclasses import dataclass, field
from typing import Dict, List, Optional

import numpy as np

from src.analysis.losses import CarolConfig, LossBreakdown, carol_loss, combined_loss, exact_class_separation, recon_loss
from src.config import RunConfig
from src.data_collection.corpus import Dataset
from src.data_collection.sampling import NoiseConfig, add_noise, class_sample_indices
from src.errors import DimensionMismatchError, DivergenceError, stage_errors
from src.models.network import EncoderState, backward, encode, forward, init_encoder, opt_step
from src.utils.common import timed

logger = logging.getLogger(__name__)

SEPARATION_PER_CLASS = 50
TRAINING_LOG_COLUMNS = ['step', 'epoch', 'c', 'carol', 'recon', 'total']


@dataclass
class TrainingHistory:
    """Per-step loss rows and per-epoch summaries of one training run."""
    steps: List[Dict[str, float]] = field(default_factory=list)
    epochs: List[Dict[str, float]] = field(default_factory=list)

    def record_step(self, step: int, epoch: int, breakdown: LossBreakdown) -> None:
        self.steps.append({'step': step, 'epoch': epoch, 'c': breakdown.c, 'carol': breakdown.carol,
                           'recon': breakdown.recon, 'total': breakdown.total})

    def final_epoch(self) -> Dict[str, float]:
        return self.epochs[-1] if self.epochs else {}


def _streams(seed: int) -> Dict[str, np.random.Generator]:
    # independent streams: changing deletion_ratio must not perturb contrastive sampling
    names = ('order', 'noise', 'contrastive', 'separation')
    children = np.random.SeedSequence(seed).spawn(len(names))
    return {name: np.random.default_rng(child) for name, child in zip(names, children)}


def _separation_indices(ds: Dataset, rng: np.random.Generator) -> np.ndarray:
    per_class = min(SEPARATION_PER_CLASS, *(ds.class_counts.values()))
    picks = [rng.choice(ds.class_indices(label), size=per_class, replace=False) for label in (0, 1)]
    return np.sort(np.concatenate(picks))


def _check_finite(grads, component: str, step: int, breakdown: LossBreakdown) -> None:
    if not grads.is_finite():
        raise DivergenceError(f"Non-finite {component} gradient at step {step}",
                              component=component, breakdown=breakdown)


def _recon_step(state: EncoderState, ds: Dataset, batch: np.ndarray, noise: NoiseConfig,
                rng: np.random.Generator):
    noisy = np.vstack([add_noise(ds.docs[i], noise, rng=rng).features for i in batch])
    clean = np.vstack([ds.docs[i].features for i in batch])
    output, cache = forward(state, noisy)
    loss, grad_output = recon_loss(output, clean)
    return loss, backward(state, cache, grad_output)


def _contrastive_step(state: EncoderState, ds: Dataset, carol_cfg: CarolConfig,
                      rng: np.random.Generator):
    indices = np.concatenate([class_sample_indices(ds, label, carol_cfg.n, rng) for label in (0, 1)])
    features = np.vstack([ds.docs[i].features for i in indices])
    embeddings, cache = forward(state, features, n_layers=state.encoder_depth)
    loss, grad_embeddings = carol_loss(embeddings, ds.labels[indices], carol_cfg)
    return loss, backward(state, cache, grad_embeddings)


@timed
def train_encoder(ds: Dataset, cfg: RunConfig, history: Optional[TrainingHistory] = None,
                  state: Optional[EncoderState] = None) -> EncoderState:
    """
    Train the denoising autoencoder with total = c * carol + (1 - c) * recon.

    An epoch is ceil(|train| / recon_batch) steps over a seeded permutation
    of the training documents.

    Args:
        ds: Training dataset
        cfg: Run configuration
        history: Optional history receiving one row per step and per epoch
        state: Optional starting state (default: init_encoder(cfg.seed, ...))

    Returns:
        Final encoder state

    Raises:
        DivergenceError: On a non-finite loss or gradient, carrying the
            offending step's LossBreakdown when both components were computed
    """
    with stage_errors('train_encoder'):
        if ds.feat_dim != cfg.feat_dim:
            raise DimensionMismatchError(f"Dataset has feat_dim {ds.feat_dim}, config expects {cfg.feat_dim}")
        state = state if state is not None else init_encoder(cfg.seed, cfg.feat_dim, cfg.emb_dim)
        history = history if history is not None else TrainingHistory()

        rngs = _streams(cfg.seed)
        carol_cfg = CarolConfig(n=cfg.n, distance=cfg.distance_kind, seed=cfg.seed)
        noise = NoiseConfig(deletion_ratio=cfg.deletion_ratio, seed=cfg.seed)
        tracked = _separation_indices(ds, rngs['separation'])
        steps_per_epoch = -(-len(ds) // cfg.recon_batch)
        logger.info(f"Training encoder: {len(ds)} documents, {cfg.epochs} epochs x "
                    f"{steps_per_epoch} steps, c={cfg.c}, distance={cfg.distance}")

        step = 0
        for epoch in range(1, cfg.epochs + 1):
            order = rngs['order'].permutation(len(ds))
            epoch_rows = []
            for start in range(0, len(order), cfg.recon_batch):
                step += 1
                recon, recon_grads = _recon_step(state, ds, order[start:start + cfg.recon_batch],
                                                 noise, rngs['noise'])
                carol, carol_grads = _contrastive_step(state, ds, carol_cfg, rngs['contrastive'])
                breakdown = combined_loss(cfg.c, carol, recon)
                if not breakdown.is_finite():
                    raise DivergenceError(f"Non-finite loss at step {step}: {breakdown.to_dict()}",
                                          component='total', breakdown=breakdown)
                _check_finite(recon_grads, 'recon', step, breakdown)
                _check_finite(carol_grads, 'carol', step, breakdown)

                grads = carol_grads.scaled(cfg.c) + recon_grads.scaled(1.0 - cfg.c)
                state = opt_step(state, grads, cfg.lr, component='total')

                history.record_step(step, epoch, breakdown)
                epoch_rows.append(breakdown)
                logger.debug(f"step={step} epoch={epoch} carol={carol:.6f} recon={recon:.6f} "
                             f"total={breakdown.total:.6f}")

            interclass, intraclass, separation = exact_class_separation(
                encode(state, np.vstack([ds.docs[i].features for i in tracked])),
                ds.labels[tracked], cfg.distance_kind)
            summary = {
                'epoch': epoch,
                'c': cfg.c,
                'carol': float(np.mean([b.carol for b in epoch_rows])),
                'recon': float(np.mean([b.recon for b in epoch_rows])),
                'total': float(np.mean([b.total for b in epoch_rows])),
                'interclass': interclass,
                'intraclass': intraclass,
                'separation': separation,
            }
            history.epochs.append(summary)
            logger.info(f"epoch={epoch} carol={summary['carol']:.4f} recon={summary['recon']:.4f} "
                        f"total={summary['total']:.4f} separation={separation:.4f}")

        return state


def embed_dataset(state: EncoderState, ds: Dataset) -> np.ndarray:
    """
    Noise-free encoder output for every document, aligned with ds order.

    Raises:
        DimensionMismatchError: If the dataset feature width differs from the encoder input
    """
    with stage_errors('embed_dataset'):
        if ds.feat_dim != state.in_dim:
            raise DimensionMismatchError(f"Dataset has feat_dim {ds.feat_dim}, encoder expects {state.in_dim}")
        return encode(state, ds.feature_matrix())
