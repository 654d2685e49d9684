"""
classifiers.py - Six classifier families behind one fit/predict contract.

  • DT   CART decision tree, Gini impurity
  • RF   Random forest, bootstrap + random feature subsets per split
  • KNN  k-nearest neighbours, Euclidean, brute force or k-d tree
  • LDA  Linear discriminant analysis, pooled ridge covariance
  • QDA  Quadratic discriminant analysis, per-class ridge covariance
  • SVM  Linear one-vs-rest SVM, mini-batch subgradient descent

fit() validates the inputs, times the fit and wraps the estimator in a
TrainedModel; predict() checks dimensions and times the inference.
save_model() and load_model() round-trip a fitted model through a
versioned joblib artifact.
"""

from __future__ import annotations

import logging
import pickle
import time
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Any, Dict, List, Literal, Optional, Sequence, Tuple, Union

import joblib
import numpy as np
import pandas as pd
from pydantic import BaseModel, Field, model_validator
from scipy import linalg
from scipy.spatial import cKDTree
from scipy.spatial.distance import cdist
from scipy.special import logsumexp

from .artifacts import atomic_path
from .errors import DimensionError, ModelError
from .metrics import EvalReport, MetricsCalculator

logger = logging.getLogger("flow_ids.classifiers")

# Split scores closer than this are treated as equal.
TIE_TOLERANCE = 1e-12
CLASSIFIER_FORMAT_VERSION = 1


class ModelFamily(str, Enum):
    DT = "dt"
    RF = "rf"
    KNN = "knn"
    LDA = "lda"
    QDA = "qda"
    SVM_LINEAR = "svm_linear"

    @property
    def label(self) -> str:
        return {
            "dt": "DT", "rf": "RF", "knn": "k-NN",
            "lda": "LDA", "qda": "QDA", "svm_linear": "SVM",
        }[self.value]


class ModelSpec(BaseModel):
    """Family plus hyperparameters; fields irrelevant to the family are ignored."""
    family: ModelFamily = ModelFamily.DT
    max_depth: Optional[int] = Field(30, ge=1)
    min_samples_split: int = Field(2, ge=2)
    n_estimators: int = Field(100, ge=1)
    bootstrap: bool = True
    max_features: Union[Literal["sqrt"], int, None] = "sqrt"
    n_neighbors: int = Field(5, ge=1)
    knn_algorithm: Literal["auto", "brute", "kd_tree"] = "auto"
    ridge: float = Field(1e-6, ge=0)
    svm_epochs: int = Field(20, ge=1)
    svm_reg: Optional[float] = Field(None, gt=0)
    svm_batch_size: int = Field(32, ge=1)
    seed: int = 0

    @model_validator(mode="after")
    def _check_family(self) -> "ModelSpec":
        if isinstance(self.max_features, int) and self.max_features < 1:
            raise ValueError("max_features must be 'sqrt', None or a positive integer")
        return self

    @classmethod
    def for_family(cls, family: Union[str, ModelFamily], **overrides) -> "ModelSpec":
        return cls(family=ModelFamily(family), **overrides)


# ══════════════════════════════════════════════════════════
#  1. Decision tree (CART)
# ══════════════════════════════════════════════════════════


class DecisionTree:
    """
    Binary CART tree stored as parallel node arrays.

    A split sends x[feature] <= threshold left. Candidate thresholds are
    midpoints of consecutive distinct sorted values; the chosen split
    maximises Σ left_counts²/n_left + Σ right_counts²/n_right (equivalently
    minimises weighted Gini), ties going to the lowest feature and then the
    lowest threshold. An impure node is split whenever some threshold
    separates its rows, zero-gain splits included; impurity never rises.
    """

    def __init__(self, n_classes: int, max_depth: Optional[int] = 30,
                 min_samples_split: int = 2, max_features: Optional[int] = None,
                 rng: Optional[np.random.Generator] = None):
        self.n_classes = n_classes
        self.max_depth = max_depth
        self.min_samples_split = min_samples_split
        self.max_features = max_features
        self.rng = rng
        self.feature: List[int] = []
        self.threshold: List[float] = []
        self.left: List[int] = []
        self.right: List[int] = []
        self.value: List[np.ndarray] = []
        self.importances: Optional[np.ndarray] = None

    def _new_node(self, counts: np.ndarray) -> int:
        self.feature.append(-1)
        self.threshold.append(0.0)
        self.left.append(-1)
        self.right.append(-1)
        self.value.append(counts)
        return len(self.feature) - 1

    def _candidate_features(self, d: int) -> np.ndarray:
        if self.max_features is None or self.max_features >= d:
            return np.arange(d)
        return np.sort(self.rng.choice(d, self.max_features, replace=False))

    def _best_split(self, X: np.ndarray, y: np.ndarray, counts: np.ndarray):
        """Return (feature, threshold, impurity decrease × n) or None."""
        n = len(y)
        parent_score = float((counts.astype(float) ** 2).sum() / n)
        n_left = np.arange(1, n, dtype=float)
        n_right = n - n_left
        best = None
        for f in self._candidate_features(X.shape[1]):
            order = np.argsort(X[:, f], kind="stable")
            xs = X[order, f]
            valid = xs[:-1] < xs[1:]
            if not valid.any():
                continue
            onehot = np.zeros((n, self.n_classes))
            onehot[np.arange(n), y[order]] = 1.0
            left = np.cumsum(onehot, axis=0)[:-1]
            right = counts - left
            score = (left ** 2).sum(axis=1) / n_left + (right ** 2).sum(axis=1) / n_right
            score = np.where(valid, score, -np.inf)
            top = float(score.max())
            if best is not None and top <= best[0] + TIE_TOLERANCE:
                continue
            i = int(np.flatnonzero(score >= top - TIE_TOLERANCE)[0])
            threshold = (xs[i] + xs[i + 1]) / 2
            if not xs[i] <= threshold < xs[i + 1]:
                threshold = xs[i]
            best = (top, int(f), float(threshold))
        if best is None:
            return None
        return best[1], best[2], max(best[0] - parent_score, 0.0)

    def fit(self, X: np.ndarray, y: np.ndarray) -> "DecisionTree":
        d = X.shape[1]
        self.importances = np.zeros(d)
        root = self._new_node(np.bincount(y, minlength=self.n_classes))
        stack = [(root, np.arange(len(y)), 0)]
        while stack:
            node, idx, depth = stack.pop()
            counts = self.value[node]
            n = len(idx)
            if (n < self.min_samples_split or counts.max() == n
                    or (self.max_depth is not None and depth >= self.max_depth)):
                continue
            split = self._best_split(X[idx], y[idx], counts)
            if split is None:
                continue
            f, threshold, decrease = split
            goes_left = X[idx, f] <= threshold
            left_idx, right_idx = idx[goes_left], idx[~goes_left]
            self.feature[node] = f
            self.threshold[node] = threshold
            self.left[node] = self._new_node(np.bincount(y[left_idx], minlength=self.n_classes))
            self.right[node] = self._new_node(np.bincount(y[right_idx], minlength=self.n_classes))
            self.importances[f] += decrease
            stack.append((self.right[node], right_idx, depth + 1))
            stack.append((self.left[node], left_idx, depth + 1))

        self._feature = np.asarray(self.feature, dtype=np.int64)
        self._threshold = np.asarray(self.threshold, dtype=float)
        self._left = np.asarray(self.left, dtype=np.int64)
        self._right = np.asarray(self.right, dtype=np.int64)
        self._leaf_label = np.asarray([int(np.argmax(v)) for v in self.value], dtype=np.int64)
        return self

    @property
    def node_count(self) -> int:
        return len(self.feature)

    def apply(self, X: np.ndarray) -> np.ndarray:
        """Leaf index reached by every row."""
        node = np.zeros(X.shape[0], dtype=np.int64)
        active = self._feature[node] >= 0
        while active.any():
            rows = np.flatnonzero(active)
            current = node[rows]
            goes_left = X[rows, self._feature[current]] <= self._threshold[current]
            node[rows] = np.where(goes_left, self._left[current], self._right[current])
            active[rows] = self._feature[node[rows]] >= 0
        return node

    def predict(self, X: np.ndarray) -> np.ndarray:
        return self._leaf_label[self.apply(X)]

    def normalized_importances(self) -> np.ndarray:
        total = self.importances.sum()
        return self.importances / total if total > 0 else np.zeros_like(self.importances)


# ══════════════════════════════════════════════════════════
#  2. Random forest
# ══════════════════════════════════════════════════════════


class RandomForest:
    """Bagged CART trees; majority vote, ties to the lowest label."""

    def __init__(self, n_classes: int, n_estimators: int = 100, bootstrap: bool = True,
                 max_features: Union[str, int, None] = "sqrt", max_depth: Optional[int] = 30,
                 min_samples_split: int = 2, seed: int = 0):
        self.n_classes = n_classes
        self.n_estimators = n_estimators
        self.bootstrap = bootstrap
        self.max_features = max_features
        self.max_depth = max_depth
        self.min_samples_split = min_samples_split
        self.seed = seed
        self.trees: List[DecisionTree] = []

    def _features_per_split(self, d: int) -> Optional[int]:
        if self.max_features == "sqrt":
            return max(1, int(np.sqrt(d)))
        return self.max_features

    def fit(self, X: np.ndarray, y: np.ndarray) -> "RandomForest":
        n, d = X.shape
        m = self._features_per_split(d)
        streams = np.random.SeedSequence(self.seed).spawn(self.n_estimators)
        self.trees = []
        for stream in streams:
            rng = np.random.default_rng(stream)
            rows = rng.integers(0, n, n) if self.bootstrap else np.arange(n)
            tree = DecisionTree(self.n_classes, self.max_depth, self.min_samples_split, m, rng)
            self.trees.append(tree.fit(X[rows], y[rows]))
        return self

    def predict(self, X: np.ndarray) -> np.ndarray:
        votes = np.zeros((X.shape[0], self.n_classes), dtype=np.int64)
        rows = np.arange(X.shape[0])
        for tree in self.trees:
            votes[rows, tree.predict(X)] += 1
        return np.argmax(votes, axis=1)

    def normalized_importances(self) -> np.ndarray:
        mean = np.mean([t.normalized_importances() for t in self.trees], axis=0)
        total = mean.sum()
        return mean / total if total > 0 else mean


# ══════════════════════════════════════════════════════════
#  3. k-nearest neighbours
# ══════════════════════════════════════════════════════════


def _nearest(d2: np.ndarray, ids: np.ndarray, k: int) -> np.ndarray:
    """Positions of the k entries ordered by (distance, reference index)."""
    return np.lexsort((ids, d2))[:k]


class KNearestNeighbors:
    """
    Lazy learner: fit stores the reference set, predict scans it.

    Neighbours are ordered by (distance, reference row index). Vote ties
    go to the tied class whose member appears nearest. The k-d tree path
    only proposes candidates; distances are recomputed exactly so both
    paths return the same labels.
    """

    # Upper bound on the floats held by one brute-force distance block.
    BLOCK_FLOATS = 1 << 22

    def __init__(self, n_classes: int, n_neighbors: int = 5, algorithm: str = "auto"):
        self.n_classes = n_classes
        self.n_neighbors = n_neighbors
        self.algorithm = algorithm
        self.X: Optional[np.ndarray] = None
        self.y: Optional[np.ndarray] = None
        self._tree: Optional[cKDTree] = None

    def fit(self, X: np.ndarray, y: np.ndarray) -> "KNearestNeighbors":
        self.X = np.ascontiguousarray(X, dtype=float)
        self.y = np.asarray(y, dtype=np.int64)
        if self.resolved_algorithm == "kd_tree":
            self._tree = cKDTree(self.X)
        return self

    @property
    def resolved_algorithm(self) -> str:
        if self.algorithm != "auto":
            return self.algorithm
        n, d = self.X.shape
        return "kd_tree" if d <= 20 and n >= 2000 else "brute"

    def kneighbors(self, Q: np.ndarray) -> np.ndarray:
        """Index matrix (rows of Q × k) of the nearest reference rows."""
        k = min(self.n_neighbors, self.X.shape[0])
        if self._tree is not None:
            return self._kneighbors_tree(Q, k)
        return self._kneighbors_brute(Q, k)

    def _kneighbors_brute(self, Q: np.ndarray, k: int) -> np.ndarray:
        """Query rows × reference rows in blocks, keeping a running k-best per query."""
        n = self.X.shape[0]
        ref_block = max(1, min(n, self.BLOCK_FLOATS // 2))
        rows = max(1, self.BLOCK_FLOATS // (ref_block + k))
        out = np.empty((Q.shape[0], k), dtype=np.int64)
        for start in range(0, Q.shape[0], rows):
            q = Q[start:start + rows]
            best_d = np.empty((q.shape[0], 0))
            best_i = np.empty((q.shape[0], 0), dtype=np.int64)
            for ref in range(0, n, ref_block):
                ids = np.arange(ref, min(n, ref + ref_block))
                d2 = np.hstack([best_d, cdist(q, self.X[ids], "sqeuclidean")])
                idx = np.hstack([best_i, np.broadcast_to(ids, (q.shape[0], ids.size))])
                keep = min(k, d2.shape[1])
                kth = np.partition(d2, keep - 1, axis=1)[:, keep - 1]
                best_d = np.empty((q.shape[0], keep))
                best_i = np.empty((q.shape[0], keep), dtype=np.int64)
                for i in range(q.shape[0]):
                    cand = np.flatnonzero(d2[i] <= kth[i])
                    pos = cand[_nearest(d2[i, cand], idx[i, cand], keep)]
                    best_d[i], best_i[i] = d2[i, pos], idx[i, pos]
            out[start:start + q.shape[0]] = best_i
        return out

    def _kneighbors_tree(self, Q: np.ndarray, k: int) -> np.ndarray:
        dist, _ = self._tree.query(Q, k=k)
        radius = np.asarray(dist).reshape(Q.shape[0], -1)[:, -1]
        balls = self._tree.query_ball_point(Q, radius * (1 + 1e-9) + 1e-12)
        out = np.empty((Q.shape[0], k), dtype=np.int64)
        for i, ball in enumerate(balls):
            cand = np.asarray(sorted(ball), dtype=np.int64)
            d2 = cdist(Q[i:i + 1], self.X[cand], "sqeuclidean")[0]
            out[i] = cand[_nearest(d2, cand, k)]
        return out

    def predict(self, Q: np.ndarray) -> np.ndarray:
        neighbors = self.y[self.kneighbors(np.asarray(Q, dtype=float))]
        m, k = neighbors.shape
        rows = np.arange(m)
        counts = np.zeros((m, self.n_classes), dtype=np.int64)
        np.add.at(counts, (rows[:, None], neighbors), 1)
        first_seen = np.full((m, self.n_classes), k, dtype=np.int64)
        for j in reversed(range(k)):
            first_seen[rows, neighbors[:, j]] = j
        return np.argmax(counts * (k + 1) - first_seen, axis=1)


# ══════════════════════════════════════════════════════════
#  4. Gaussian discriminants (LDA / QDA)
# ══════════════════════════════════════════════════════════


def _ridge(cov: np.ndarray, coefficient: float) -> float:
    d = cov.shape[0]
    trace = float(np.trace(cov))
    return coefficient * trace / d if trace > 0 else coefficient


class LinearDiscriminant:
    """
    δ_k(x) = xᵀΣ⁻¹μ_k − ½μ_kᵀΣ⁻¹μ_k + ln π_k with one pooled covariance
    Σ (÷N) plus a ridge of ridge·trace/d on the diagonal.
    """

    def __init__(self, n_classes: int, ridge: float = 1e-6):
        self.n_classes = n_classes
        self.ridge = ridge

    def fit(self, X: np.ndarray, y: np.ndarray) -> "LinearDiscriminant":
        n, d = X.shape
        counts = np.bincount(y, minlength=self.n_classes)
        self.present = counts > 0
        self.means = np.zeros((self.n_classes, d))
        scatter = np.zeros((d, d))
        for c in np.flatnonzero(self.present):
            Xc = X[y == c]
            self.means[c] = Xc.mean(axis=0)
            centered = Xc - self.means[c]
            scatter += centered.T @ centered
        cov = scatter / n
        self.covariance = cov + _ridge(cov, self.ridge) * np.eye(d)
        with np.errstate(divide="ignore"):
            self.log_priors = np.log(counts / n)
        try:
            factor = linalg.cho_factor(self.covariance, lower=True)
        except linalg.LinAlgError as exc:
            raise ModelError(f"LDA covariance is singular: {exc}") from None
        self.coef = linalg.cho_solve(factor, self.means.T).T
        self.intercept = -0.5 * np.sum(self.coef * self.means, axis=1) + self.log_priors
        return self

    def decision_function(self, X: np.ndarray) -> np.ndarray:
        scores = X @ self.coef.T + self.intercept
        scores[:, ~self.present] = -np.inf
        return scores

    def predict(self, X: np.ndarray) -> np.ndarray:
        return np.argmax(self.decision_function(X), axis=1)


class QuadraticDiscriminant:
    """
    δ_k(x) = −½ ln|Σ_k| − ½(x−μ_k)ᵀΣ_k⁻¹(x−μ_k) + ln π_k with a per-class
    covariance (÷n_k) and per-class ridge.
    """

    def __init__(self, n_classes: int, ridge: float = 1e-6):
        self.n_classes = n_classes
        self.ridge = ridge

    def fit(self, X: np.ndarray, y: np.ndarray) -> "QuadraticDiscriminant":
        n, d = X.shape
        counts = np.bincount(y, minlength=self.n_classes)
        self.present = counts > 0
        with np.errstate(divide="ignore"):
            self.log_priors = np.log(counts / n)
        self.means = np.zeros((self.n_classes, d))
        self.cholesky: List[Optional[np.ndarray]] = [None] * self.n_classes
        self.log_dets = np.zeros(self.n_classes)
        for c in np.flatnonzero(self.present):
            Xc = X[y == c]
            self.means[c] = Xc.mean(axis=0)
            centered = Xc - self.means[c]
            cov = centered.T @ centered / len(Xc)
            cov = cov + _ridge(cov, self.ridge) * np.eye(d)
            try:
                L = linalg.cholesky(cov, lower=True)
            except linalg.LinAlgError as exc:
                raise ModelError(f"QDA covariance of class {c} is singular: {exc}") from None
            self.cholesky[c] = L
            self.log_dets[c] = 2.0 * np.sum(np.log(np.diag(L)))
        return self

    def decision_function(self, X: np.ndarray) -> np.ndarray:
        scores = np.full((X.shape[0], self.n_classes), -np.inf)
        for c in np.flatnonzero(self.present):
            z = linalg.solve_triangular(self.cholesky[c], (X - self.means[c]).T, lower=True)
            mahalanobis = np.sum(z ** 2, axis=0)
            scores[:, c] = -0.5 * self.log_dets[c] - 0.5 * mahalanobis + self.log_priors[c]
        return scores

    def predict(self, X: np.ndarray) -> np.ndarray:
        return np.argmax(self.decision_function(X), axis=1)


# ══════════════════════════════════════════════════════════
#  5. Linear SVM (one-vs-rest)
# ══════════════════════════════════════════════════════════


class LinearSVM:
    """
    One-vs-rest linear SVM trained by projected mini-batch subgradient
    descent on λ/2‖w‖² + mean hinge loss, bias folded into w. After each
    epoch the averaged iterate replaces the model only if it lowers the
    objective, so `history` never increases.
    """

    def __init__(self, n_classes: int, epochs: int = 20, reg: Optional[float] = None,
                 batch_size: int = 32, seed: int = 0):
        self.n_classes = n_classes
        self.epochs = epochs
        self.reg = reg
        self.batch_size = batch_size
        self.seed = seed
        self.history: List[float] = []

    @staticmethod
    def _augment(X: np.ndarray) -> np.ndarray:
        return np.hstack([X, np.ones((X.shape[0], 1))])

    def fit(self, X: np.ndarray, y: np.ndarray) -> "LinearSVM":
        n = X.shape[0]
        Xa = self._augment(X)
        lam = self.reg if self.reg is not None else 1.0 / n
        self.lam = lam
        self.present = np.bincount(y, minlength=self.n_classes) > 0
        # targets: +1 for the class, −1 for the rest; one column per class
        targets = np.where(y[:, None] == np.arange(self.n_classes)[None, :], 1.0, -1.0)
        W = np.zeros((self.n_classes, Xa.shape[1]))
        W_avg = np.zeros_like(W)
        radius = 1.0 / np.sqrt(lam)
        rng = np.random.default_rng(self.seed)
        step = 0
        self.history = []
        for _ in range(self.epochs):
            order = rng.permutation(n)
            for start in range(0, n, self.batch_size):
                batch = order[start:start + self.batch_size]
                step += 1
                eta = 1.0 / (lam * step)
                t = targets[batch]
                margins = t * (Xa[batch] @ W.T)
                violated = (margins < 1.0) * t
                W = (1.0 - eta * lam) * W + (eta / len(batch)) * (violated.T @ Xa[batch])
                norms = np.linalg.norm(W, axis=1, keepdims=True)
                W *= np.minimum(1.0, radius / np.maximum(norms, 1e-300))
                W_avg += (W - W_avg) / step
            kept = self.weights if self.history else None
            self.weights = W_avg.copy()
            score = self.objective(X, y)
            if kept is not None and score > self.history[-1]:
                self.weights, score = kept, self.history[-1]
            self.history.append(score)
        return self

    def objective(self, X: np.ndarray, y: np.ndarray) -> float:
        """Sum over present classes of λ/2‖w‖² + mean hinge loss."""
        Xa = self._augment(X)
        targets = np.where(y[:, None] == np.arange(self.n_classes)[None, :], 1.0, -1.0)
        hinge = np.maximum(0.0, 1.0 - targets * (Xa @ self.weights.T)).mean(axis=0)
        reg = 0.5 * self.lam * np.sum(self.weights ** 2, axis=1)
        return float(np.sum((reg + hinge)[self.present]))

    def decision_function(self, X: np.ndarray) -> np.ndarray:
        scores = self._augment(X) @ self.weights.T
        scores[:, ~self.present] = -np.inf
        return scores

    def predict(self, X: np.ndarray) -> np.ndarray:
        return np.argmax(self.decision_function(X), axis=1)


class ConstantClassifier:
    """Predicts the single class seen during fit."""

    def __init__(self, label: int):
        self.label = label

    def fit(self, X: np.ndarray, y: np.ndarray) -> "ConstantClassifier":
        return self

    def predict(self, X: np.ndarray) -> np.ndarray:
        return np.full(X.shape[0], self.label, dtype=np.int64)


# ══════════════════════════════════════════════════════════
#  Public contract
# ══════════════════════════════════════════════════════════


@dataclass(frozen=True)
class TrainedModel:
    family: ModelFamily
    estimator: object
    n_classes: int
    n_features: int
    train_time_s: float
    feature_names: Tuple[str, ...] = ()


@dataclass(frozen=True)
class ImportanceReport:
    """(feature, importance) pairs, descending; importances sum to 1."""
    entries: Tuple[Tuple[str, float], ...]

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame(list(self.entries), columns=["feature", "importance"])

    def top(self, n: int) -> List[str]:
        return [name for name, _ in self.entries[:n]]


def _build(spec: ModelSpec, n_classes: int):
    family = spec.family
    if family is ModelFamily.DT:
        return DecisionTree(n_classes, spec.max_depth, spec.min_samples_split)
    if family is ModelFamily.RF:
        return RandomForest(n_classes, spec.n_estimators, spec.bootstrap, spec.max_features,
                            spec.max_depth, spec.min_samples_split, spec.seed)
    if family is ModelFamily.KNN:
        return KNearestNeighbors(n_classes, spec.n_neighbors, spec.knn_algorithm)
    if family is ModelFamily.LDA:
        return LinearDiscriminant(n_classes, spec.ridge)
    if family is ModelFamily.QDA:
        return QuadraticDiscriminant(n_classes, spec.ridge)
    return LinearSVM(n_classes, spec.svm_epochs, spec.svm_reg, spec.svm_batch_size, spec.seed)


def _check_matrix(X: np.ndarray) -> np.ndarray:
    X = np.asarray(X, dtype=float)
    if X.ndim != 2:
        raise DimensionError(f"expected a 2-D matrix, got shape {X.shape}")
    if not np.isfinite(X).all():
        raise DimensionError("input contains NaN or infinite values")
    return X


def fit(spec: ModelSpec, X: np.ndarray, y: np.ndarray, n_classes: Optional[int] = None,
        feature_names: Optional[Sequence[str]] = None) -> TrainedModel:
    """
    Fit one model.

    Args:
        n_classes: Size of the label registry (default: max(y) + 1).

    Raises:
        DimensionError: shape mismatch or non-finite input.
        ModelError: empty training set, labels outside the registry or a
            singular covariance.
    """
    X = _check_matrix(X)
    y = np.asarray(y, dtype=np.int64)
    if y.shape != (X.shape[0],):
        raise DimensionError(f"{X.shape[0]} rows but {y.shape} labels")
    if X.shape[0] == 0:
        raise ModelError("cannot fit on an empty training set")
    n_classes = int(y.max()) + 1 if n_classes is None else n_classes
    if y.min() < 0 or y.max() >= n_classes:
        raise ModelError(f"labels must lie in [0, {n_classes})")
    names = tuple(feature_names) if feature_names is not None else tuple(
        f"x{i}" for i in range(X.shape[1]))

    present = np.unique(y)
    start = time.perf_counter()
    if len(present) == 1:
        estimator = ConstantClassifier(int(present[0]))
    else:
        estimator = _build(spec, n_classes).fit(X, y)
    elapsed = time.perf_counter() - start
    logger.info("%s fitted on %d×%d in %.3fs", spec.family.label, X.shape[0], X.shape[1], elapsed)
    return TrainedModel(spec.family, estimator, n_classes, X.shape[1], elapsed, names)


def predict(model: TrainedModel, X: np.ndarray) -> Tuple[np.ndarray, float]:
    """Labels for every row plus the wall-clock inference time."""
    X = _check_matrix(X)
    if X.shape[1] != model.n_features:
        raise DimensionError(f"model expects {model.n_features} columns, got {X.shape[1]}")
    start = time.perf_counter()
    labels = model.estimator.predict(X)
    return np.asarray(labels, dtype=np.int64), time.perf_counter() - start


def posteriors(model: TrainedModel, X: np.ndarray) -> np.ndarray:
    """Class posterior probabilities of an LDA or QDA model."""
    estimator = model.estimator
    if not isinstance(estimator, (LinearDiscriminant, QuadraticDiscriminant)):
        raise ModelError(f"posteriors need an LDA/QDA model, got {model.family.label}")
    scores = estimator.decision_function(_check_matrix(X))
    return np.exp(scores - logsumexp(scores, axis=1, keepdims=True))


def hinge_objective(model: TrainedModel, X: np.ndarray, y: np.ndarray) -> float:
    if not isinstance(model.estimator, LinearSVM):
        raise ModelError(f"hinge objective needs a linear SVM, got {model.family.label}")
    return model.estimator.objective(_check_matrix(X), np.asarray(y, dtype=np.int64))


def gini_importance(model: TrainedModel) -> ImportanceReport:
    """
    Normalized impurity decrease per feature (RF: mean over trees).

    Raises:
        ModelError: the model is not a tree ensemble or tree.
    """
    estimator = model.estimator
    if isinstance(estimator, (DecisionTree, RandomForest)):
        values = estimator.normalized_importances()
    elif isinstance(estimator, ConstantClassifier) and model.family in (ModelFamily.DT, ModelFamily.RF):
        values = np.zeros(model.n_features)
    else:
        raise ModelError(f"Gini importance needs a DT or RF model, got {model.family.label}")
    order = sorted(range(len(values)), key=lambda i: (-values[i], i))
    return ImportanceReport(tuple((model.feature_names[i], float(values[i])) for i in order))


def refit_on_top_features(train, test, importance: ImportanceReport, n_top: int = 6,
                          spec: Optional[ModelSpec] = None) -> Tuple[TrainedModel, EvalReport]:
    """
    Refit a DT on the n_top most important columns and evaluate on test.

    train/test are Datasets sharing feature names with the importance report.
    """
    names = list(train.feature_names)
    if not 1 <= n_top <= len(names):
        raise DimensionError(f"n_top must be in [1, {len(names)}], got {n_top}")
    # keep the original column order so tie-breaking matches a plain fit
    columns = sorted(names.index(name) for name in importance.top(n_top))
    chosen = [names[i] for i in columns]
    spec = spec or ModelSpec(family=ModelFamily.DT)
    model = fit(spec, train.X[:, columns], train.y, train.n_classes, chosen)
    labels, infer_time = predict(model, test.X[:, columns])
    report = MetricsCalculator.calculate(test.y, labels, test.class_names, test.benign_label)
    report.train_time_s = model.train_time_s
    report.infer_time_s = infer_time
    logger.info("Refit on top %d features (%s): accuracy %.4f",
                n_top, ", ".join(chosen), report.accuracy)
    return model, report


# ══════════════════════════════════════════════════════════
#  Persistence
# ══════════════════════════════════════════════════════════


def save_model(model: TrainedModel, target: Union[str, Path],
               preprocess: Optional[Dict[str, Any]] = None) -> Path:
    """
    Write a versioned joblib artifact holding the fitted model.

    Args:
        preprocess: Fitted transforms the model expects its input to go
            through first (e.g. {"scaler": ..., "pca": ..., "n_components": k}).
    """
    payload = {
        "format": "classifier",
        "version": CLASSIFIER_FORMAT_VERSION,
        "family": model.family.value,
        "model": model,
        "preprocess": dict(preprocess or {}),
    }
    with atomic_path(target) as tmp:
        joblib.dump(payload, tmp, compress=3)
    logger.debug("Saved %s model to %s", model.family.label, target)
    return Path(target)


def load_model(path: Union[str, Path]) -> Tuple[TrainedModel, Dict[str, Any]]:
    """
    Read an artifact written by save_model.

    Raises:
        ModelError: not a classifier artifact of the current version.
    """
    try:
        payload = joblib.load(path)
    except (OSError, EOFError, ValueError, KeyError, pickle.UnpicklingError) as exc:
        raise ModelError(f"{path}: unreadable model artifact: {exc}") from None
    if (not isinstance(payload, dict) or payload.get("format") != "classifier"
            or payload.get("version") != CLASSIFIER_FORMAT_VERSION
            or not isinstance(payload.get("model"), TrainedModel)):
        raise ModelError(f"{path}: not a version-{CLASSIFIER_FORMAT_VERSION} classifier artifact")
    return payload["model"], payload["preprocess"]
