"""
plots.py - Figures for the importance and PCA reports.

  • plot_importance  horizontal bars of DT Gini importance
  • plot_scree       explained-variance ratio per component
  • plot_cumulative  cumulative explained variance with the variance targets
  • plot_loadings    signed loadings heatmap of the leading components

Rendering uses the non-interactive Agg backend; every figure is written
atomically and closed.
"""

from __future__ import annotations

import logging
from pathlib import Path
from typing import Sequence, Union

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .artifacts import atomic_path
from .classifiers import ImportanceReport
from .pca import PcaModel

logger = logging.getLogger("flow_ids.plots")

FIGURE_DPI = 150
FIGURE_SIZE = (6.4, 4.0)


def _save(fig, target: Union[str, Path]) -> Path:
    target = Path(target)
    fmt = target.suffix.lstrip(".") or "png"
    try:
        with atomic_path(target) as tmp:
            fig.savefig(tmp, dpi=FIGURE_DPI, format=fmt, bbox_inches="tight")
    finally:
        plt.close(fig)
    logger.debug("Figure written to %s", target)
    return target


def plot_importance(importance: ImportanceReport, target: Union[str, Path], top: int = 15) -> Path:
    entries = importance.entries[:top]
    names = [name for name, _ in entries][::-1]
    values = [value for _, value in entries][::-1]
    fig, ax = plt.subplots(figsize=(FIGURE_SIZE[0], max(2.0, 0.3 * len(entries) + 1)))
    ax.barh(np.arange(len(entries)), values, color="tab:blue")
    ax.set_yticks(np.arange(len(entries)))
    ax.set_yticklabels(names, fontsize=8)
    ax.set_xlabel("Gini importance")
    ax.set_title("Decision-tree feature importance")
    return _save(fig, target)


def plot_scree(model: PcaModel, target: Union[str, Path]) -> Path:
    ranks = np.arange(1, model.d_original + 1)
    fig, ax = plt.subplots(figsize=FIGURE_SIZE)
    ax.bar(ranks, model.explained_variance_ratio, color="tab:blue")
    ax.plot(ranks, model.explained_variance_ratio, color="black", marker="o", markersize=3)
    ax.set_xlabel("Component")
    ax.set_ylabel("Explained variance ratio")
    ax.set_title("Scree plot")
    return _save(fig, target)


def plot_cumulative(model: PcaModel, target: Union[str, Path],
                    variance_targets: Sequence[float] = ()) -> Path:
    ranks = np.arange(1, model.d_original + 1)
    fig, ax = plt.subplots(figsize=FIGURE_SIZE)
    ax.step(ranks, model.cumulative_ratio, where="mid", color="tab:blue")
    for level in sorted(variance_targets):
        ax.axhline(level, color="grey", linestyle=":", linewidth=0.8)
    ax.set_ylim(0.0, 1.02)
    ax.set_xlabel("Number of components")
    ax.set_ylabel("Cumulative explained variance")
    ax.set_title("Cumulative explained variance")
    return _save(fig, target)


def plot_loadings(model: PcaModel, target: Union[str, Path], top_m: int = 3) -> Path:
    top_m = max(1, min(top_m, model.d_original))
    loadings = model.components[:, :top_m]
    bound = float(np.abs(loadings).max()) or 1.0
    fig, ax = plt.subplots(figsize=(2.0 + 1.2 * top_m, max(3.0, 0.18 * model.d_original + 1)))
    image = ax.imshow(loadings, aspect="auto", cmap="coolwarm", vmin=-bound, vmax=bound)
    ax.set_xticks(np.arange(top_m))
    ax.set_xticklabels([f"PC{i + 1}" for i in range(top_m)])
    ax.set_yticks(np.arange(model.d_original))
    ax.set_yticklabels(model.feature_names, fontsize=6)
    fig.colorbar(image, ax=ax, label="Loading")
    ax.set_title("Component loadings")
    return _save(fig, target)
