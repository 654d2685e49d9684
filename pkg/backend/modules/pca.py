"""
pca.py - Principal component analysis on the population covariance.

  • pca_fit         eigendecomposition of the d×d covariance, all components kept
  • select_components  smallest k reaching a cumulative variance target
  • transform / inverse_transform
  • scree_report / loadings_report  tables for plotting
  • save_model / load_model  versioned JSON artifact
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd
from scipy import linalg

from .artifacts import write_json
from .errors import DimensionError, PcaError

logger = logging.getLogger("flow_ids.pca")

MODEL_FORMAT_VERSION = 1

# Cumulative-ratio slack so that a target equal to a partial sum is met.
CUMULATIVE_TOLERANCE = 1e-10


@dataclass(frozen=True)
class PcaModel:
    """
    Fitted principal components.

    Attributes:
        mean:        d-vector subtracted before projection.
        components:  d×d orthonormal matrix, columns by descending eigenvalue.
        eigenvalues: d non-negative, non-increasing.
        explained_variance_ratio: eigenvalue / trace, sums to 1.
        feature_names: Column names of the fitted matrix.
    """
    mean: np.ndarray
    components: np.ndarray
    eigenvalues: np.ndarray
    explained_variance_ratio: np.ndarray
    feature_names: Tuple[str, ...]

    @property
    def d_original(self) -> int:
        return self.components.shape[0]

    @property
    def cumulative_ratio(self) -> np.ndarray:
        return np.minimum(np.cumsum(self.explained_variance_ratio), 1.0)


def _sign_convention(components: np.ndarray) -> np.ndarray:
    """Flip each column so its largest-magnitude entry is positive."""
    pivots = np.argmax(np.abs(components), axis=0)
    signs = np.sign(components[pivots, np.arange(components.shape[1])])
    signs[signs == 0] = 1.0
    return components * signs


def pca_fit(X: np.ndarray, feature_names: Optional[Sequence[str]] = None) -> PcaModel:
    """
    Fit PCA on a finite N×d matrix (N ≥ 2).

    Raises:
        PcaError: fewer than two rows, non-finite entries or zero total variance.
    """
    X = np.asarray(X, dtype=float)
    if X.ndim != 2:
        raise DimensionError(f"expected a 2-D matrix, got shape {X.shape}")
    n, d = X.shape
    if n < 2:
        raise PcaError(f"PCA needs at least 2 rows, got {n}")
    if not np.isfinite(X).all():
        raise PcaError("PCA input contains NaN or infinite values")
    names = tuple(feature_names) if feature_names is not None else tuple(f"x{i}" for i in range(d))
    if len(names) != d:
        raise DimensionError(f"{len(names)} feature names for {d} columns")

    mean = X.mean(axis=0)
    centered = X - mean
    cov = centered.T @ centered / n
    cov = (cov + cov.T) / 2

    eigenvalues, vectors = linalg.eigh(cov)
    # eigh returns ascending order
    eigenvalues = np.clip(eigenvalues[::-1], 0.0, None)
    vectors = _sign_convention(vectors[:, ::-1])

    trace = float(np.trace(cov))
    if trace <= 0:
        raise PcaError("total variance is zero; every column is constant")
    ratios = eigenvalues / trace

    logger.info("PCA fitted on %d×%d; first component explains %.4f", n, d, ratios[0])
    return PcaModel(mean=mean, components=vectors, eigenvalues=eigenvalues,
                    explained_variance_ratio=ratios, feature_names=names)


def select_components(model: PcaModel, variance_target: float) -> int:
    """Smallest k whose cumulative explained-variance ratio reaches the target."""
    if not 0 < variance_target <= 1:
        raise PcaError(f"variance target must be in (0, 1], got {variance_target}")
    cumulative = np.cumsum(model.explained_variance_ratio)
    reached = np.flatnonzero(cumulative >= variance_target - CUMULATIVE_TOLERANCE)
    k = int(reached[0]) + 1 if reached.size else model.d_original
    logger.debug("variance target %.2f → %d components", variance_target, k)
    return k


def _check_k(model: PcaModel, k: Optional[int]) -> int:
    k = model.d_original if k is None else k
    if not 1 <= k <= model.d_original:
        raise DimensionError(f"k must be in [1, {model.d_original}], got {k}")
    return k


def transform(model: PcaModel, X: np.ndarray, k: Optional[int] = None) -> np.ndarray:
    """Project onto the first k components: (X − mean)·components[:, :k]."""
    X = np.asarray(X, dtype=float)
    if X.ndim != 2 or X.shape[1] != model.d_original:
        raise DimensionError(f"PCA fitted on {model.d_original} columns, got shape {X.shape}")
    k = _check_k(model, k)
    return (X - model.mean) @ model.components[:, :k]


def inverse_transform(model: PcaModel, scores: np.ndarray) -> np.ndarray:
    scores = np.asarray(scores, dtype=float)
    k = _check_k(model, scores.shape[1] if scores.ndim == 2 else None)
    return scores @ model.components[:, :k].T + model.mean


def component_names(k: int) -> list:
    return [f"pc{i + 1:02d}" for i in range(k)]


# ══════════════════════════════════════════════════════════
#  Reports
# ══════════════════════════════════════════════════════════


def scree_report(model: PcaModel) -> pd.DataFrame:
    return pd.DataFrame({
        "component": np.arange(1, model.d_original + 1),
        "eigenvalue": model.eigenvalues,
        "ratio": model.explained_variance_ratio,
        "cumulative_ratio": model.cumulative_ratio,
    })


def loadings_report(model: PcaModel, top_m: int = 3) -> pd.DataFrame:
    """
    Signed loadings of the first top_m components, long format.

    Within each component rows are sorted by |loading| descending, then by
    column position.
    """
    if not 1 <= top_m <= model.d_original:
        raise PcaError(f"top_m must be in [1, {model.d_original}], got {top_m}")
    rows = []
    for c in range(top_m):
        loadings = model.components[:, c]
        order = sorted(range(model.d_original), key=lambda i: (-abs(loadings[i]), i))
        for rank, i in enumerate(order, start=1):
            rows.append({
                "component": c + 1,
                "rank": rank,
                "feature": model.feature_names[i],
                "loading": float(loadings[i]),
            })
    return pd.DataFrame(rows, columns=["component", "rank", "feature", "loading"])


# ══════════════════════════════════════════════════════════
#  Persistence
# ══════════════════════════════════════════════════════════


def save_model(model: PcaModel, target: Union[str, Path]) -> Path:
    return write_json({
        "format": "pca",
        "version": MODEL_FORMAT_VERSION,
        "feature_names": list(model.feature_names),
        "mean": model.mean,
        "components": model.components,
        "eigenvalues": model.eigenvalues,
        "explained_variance_ratio": model.explained_variance_ratio,
    }, target)


def load_model(path: Union[str, Path]) -> PcaModel:
    with open(path, encoding="utf-8") as f:
        payload = json.load(f)
    if payload.get("format") != "pca" or payload.get("version") != MODEL_FORMAT_VERSION:
        raise PcaError(f"{path}: not a version-{MODEL_FORMAT_VERSION} PCA model")
    return PcaModel(
        mean=np.asarray(payload["mean"], dtype=float),
        components=np.asarray(payload["components"], dtype=float),
        eigenvalues=np.asarray(payload["eigenvalues"], dtype=float),
        explained_variance_ratio=np.asarray(payload["explained_variance_ratio"], dtype=float),
        feature_names=tuple(payload["feature_names"]),
    )
