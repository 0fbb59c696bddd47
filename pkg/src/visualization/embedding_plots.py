"""
Plots for experiment outputs - 2-D embedding projections and C-sweep curves.
"""

import logging
import os
from typing import Dict, Optional

import matplotlib
matplotlib.use('Agg')
import matplotlib.pyplot as plt
import pandas as pd
import seaborn as sns

from src.errors import DataError, stage_errors

logger = logging.getLogger(__name__)

LABEL_NAMES = {0: 'class 0', 1: 'class 1'}
SWEEP_PLOT_COLUMNS = ('c', 'f1', 'si', 'kdn', 'final_carol', 'final_recon')


class EmbeddingVisualizer:
    """Writes PNG figures into one output directory."""

    def __init__(self, output_dir: str):
        self.output_dir = output_dir
        os.makedirs(self.output_dir, exist_ok=True)

        plt.style.use('default')
        sns.set_theme()

    def _save(self, fig, filename: str) -> str:
        path = os.path.join(self.output_dir, filename)
        fig.tight_layout()
        fig.savefig(path, dpi=150, bbox_inches='tight')
        plt.close(fig)
        logger.info(f"Saved figure to {path}")
        return path

    def plot_projection(self, projection: pd.DataFrame, title: Optional[str] = None,
                        filename: str = 'projection.png') -> str:
        """
        Scatter of projected points coloured by label.

        Args:
            projection: Frame with columns x, y and label
            title: Figure title
            filename: Output file name

        Returns:
            Path of the written PNG
        """
        with stage_errors('plot'):
            missing = {'x', 'label'} - set(projection.columns)
            if missing:
                raise DataError(f"Projection frame is missing columns {sorted(missing)}")
            frame = projection.copy()
            if 'y' not in frame.columns:
                # a single surviving component is drawn on a line
                frame['y'] = 0.0
            frame['class'] = frame['label'].map(LABEL_NAMES)

            fig, ax = plt.subplots(figsize=(8, 6))
            sns.scatterplot(data=frame, x='x', y='y', hue='class', style='class',
                            hue_order=list(LABEL_NAMES.values()), alpha=0.7, ax=ax)
            ax.set_title(title or 'Embedding projection (first two principal components)')
            ax.set_xlabel('PC 1')
            ax.set_ylabel('PC 2')
            return self._save(fig, filename)

    def plot_sweep(self, means: pd.DataFrame, best_c: Optional[Dict[str, float]] = None,
                   filename: str = 'sweep_plot.png') -> str:
        """
        C study: one row per contrastive distance. The left panel shows mean
        test F1, SI and kDN against c; the right panel shows the final
        reconstruction loss and the final contrastive loss (own axis) against c.

        Args:
            means: Per-(distance, c) means with columns c, f1, si, kdn,
                final_carol, final_recon and optionally distance
            best_c: Highest-mean-F1 c per distance, marked on the metric panels
            filename: Output file name

        Returns:
            Path of the written PNG
        """
        with stage_errors('plot'):
            if means.empty:
                raise DataError("No successful sweep cells to plot")
            missing = set(SWEEP_PLOT_COLUMNS) - set(means.columns)
            if missing:
                raise DataError(f"Sweep means are missing columns {sorted(missing)}")
            frame = means if 'distance' in means.columns else means.assign(distance='')
            groups = list(frame.groupby('distance', sort=True))
            best_c = best_c or {}

            fig, axes = plt.subplots(len(groups), 2, figsize=(14, 5 * len(groups)), squeeze=False)
            for (kind, group), (metric_ax, loss_ax) in zip(groups, axes):
                group = group.sort_values('c')
                suffix = f" ({kind})" if kind else ''
                for column, marker, label in (('f1', 'o', 'Minority F1'),
                                              ('si', 's', 'Separability Index'),
                                              ('kdn', '^', 'kDN')):
                    metric_ax.plot(group['c'], group[column], marker=marker, label=label)
                if kind in best_c:
                    metric_ax.axvline(best_c[kind], linestyle='--', color='grey', alpha=0.7,
                                      label=f"highest mean F1 (c={best_c[kind]:g})")
                metric_ax.set_title(f"Test metrics against c{suffix}")
                metric_ax.set_xlabel('c')
                metric_ax.set_ylabel('Mean over seeds')
                metric_ax.legend()
                metric_ax.grid(True)

                recon_line = loss_ax.plot(group['c'], group['final_recon'], marker='o',
                                          color='tab:blue', label='Reconstruction loss')
                carol_ax = loss_ax.twinx()
                carol_line = carol_ax.plot(group['c'], group['final_carol'], marker='s',
                                           color='tab:red', label='Contrastive loss')
                loss_ax.set_title(f"Final loss components against c{suffix}")
                loss_ax.set_xlabel('c')
                loss_ax.set_ylabel('Reconstruction loss')
                carol_ax.set_ylabel('Contrastive loss')
                lines = recon_line + carol_line
                loss_ax.legend(lines, [line.get_label() for line in lines])
                loss_ax.grid(True)
            return self._save(fig, filename)
