"""
Analysis Module - distance kernels, the contrastive and reconstruction
losses, and evaluation metrics.
"""

from .distances import DistanceKind, distance, distance_grad, pairwise_distances
from .losses import CarolConfig, LossBreakdown, carol_loss, combined_loss, exact_class_separation, recon_loss
from .metrics import confusion_counts, kdn, overlap_report, pca_project, prf, separability_index

__all__ = [
    'DistanceKind',
    'distance',
    'distance_grad',
    'pairwise_distances',
    'CarolConfig',
    'LossBreakdown',
    'carol_loss',
    'combined_loss',
    'exact_class_separation',
    'recon_loss',
    'confusion_counts',
    'kdn',
    'overlap_report',
    'pca_project',
    'prf',
    'separability_index',
]
