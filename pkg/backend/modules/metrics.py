"""
metrics.py - Classification metrics from a confusion matrix.

Builds an EvalReport (per-class and support-weighted precision, recall,
F1, accuracy and the benign false-positive rate) and a comparison utility
that lines several reports up as table rows.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence

import numpy as np
import pandas as pd


def confusion_matrix(y_true: np.ndarray, y_pred: np.ndarray, n_classes: int) -> np.ndarray:
    """C×C counts, rows = truth, columns = prediction."""
    y_true = np.asarray(y_true, dtype=np.int64)
    y_pred = np.asarray(y_pred, dtype=np.int64)
    flat = np.bincount(y_true * n_classes + y_pred, minlength=n_classes * n_classes)
    return flat.reshape(n_classes, n_classes)


def _safe_ratio(num: np.ndarray, den: np.ndarray):
    """num/den with 0 where den == 0; also returns the zero-denominator mask."""
    num = np.asarray(num, dtype=float)
    den = np.asarray(den, dtype=float)
    zero = den == 0
    out = np.divide(num, den, out=np.zeros_like(num), where=~zero)
    return out, zero


@dataclass
class EvalReport:
    """
    Metrics of one model on one labelled set.

    Attributes:
        confusion:   C×C integer matrix, rows = truth.
        class_names: Label index → name.
        precision, recall, f1, support: Per-class arrays.
        weighted_precision, weighted_recall, weighted_f1: Support-weighted.
        accuracy:    trace / N; equals weighted_recall up to rounding.
        fpr_benign:  Benign rows predicted as any attack / benign rows, or
                     None when there is no benign class or no benign rows.
        undefined_precision: Classes never predicted (precision reported 0).
        undefined_f1: Classes whose precision + recall is 0 (F1 reported 0).
    """
    confusion: np.ndarray
    class_names: Sequence[str]
    precision: np.ndarray
    recall: np.ndarray
    f1: np.ndarray
    support: np.ndarray
    weighted_precision: float
    weighted_recall: float
    weighted_f1: float
    accuracy: float
    fpr_benign: Optional[float]
    undefined_precision: List[str] = field(default_factory=list)
    undefined_f1: List[str] = field(default_factory=list)
    train_time_s: float = 0.0
    infer_time_s: float = 0.0

    @property
    def n(self) -> int:
        return int(self.confusion.sum())

    def per_class_table(self) -> pd.DataFrame:
        """Per-attack breakdown: one row per class."""
        return pd.DataFrame({
            "class": list(self.class_names),
            "precision": self.precision,
            "recall": self.recall,
            "f1": self.f1,
            "support": self.support.astype(np.int64),
        })

    def summary(self) -> Dict[str, object]:
        return {
            "accuracy": self.accuracy,
            "precision": self.weighted_precision,
            "recall": self.weighted_recall,
            "f1": self.weighted_f1,
            "fpr": self.fpr_benign,
        }

    def to_dict(self) -> dict:
        return {
            "classes": list(self.class_names),
            "confusion": self.confusion.tolist(),
            "per_class": self.per_class_table().to_dict(orient="records"),
            "accuracy": self.accuracy,
            "weighted_precision": self.weighted_precision,
            "weighted_recall": self.weighted_recall,
            "weighted_f1": self.weighted_f1,
            "fpr_benign": self.fpr_benign,
            "undefined_precision": list(self.undefined_precision),
            "undefined_f1": list(self.undefined_f1),
            "train_time_s": self.train_time_s,
            "infer_time_s": self.infer_time_s,
        }


class MetricsCalculator:
    """
    Computes EvalReports from label vectors or confusion matrices.
    """

    @staticmethod
    def from_confusion(confusion: np.ndarray, class_names: Sequence[str],
                       benign_label: Optional[int] = 0) -> EvalReport:
        """
        Derive every metric from a confusion matrix.

        Zero denominators yield 0 and the class is listed in the matching
        undefined_* field.

        Raises:
            ValueError: empty matrix.
        """
        confusion = np.asarray(confusion, dtype=np.int64)
        total = int(confusion.sum())
        if total == 0:
            raise ValueError("cannot evaluate an empty set")
        tp = np.diag(confusion)
        support = confusion.sum(axis=1)
        predicted = confusion.sum(axis=0)

        precision, no_pred = _safe_ratio(tp, predicted)
        recall, _ = _safe_ratio(tp, support)
        f1, no_f1 = _safe_ratio(2 * precision * recall, precision + recall)

        weights = support / total
        accuracy = float(tp.sum() / total)

        fpr = None
        if benign_label is not None and support[benign_label] > 0:
            benign_row = confusion[benign_label]
            fpr = float((benign_row.sum() - benign_row[benign_label]) / benign_row.sum())

        names = list(class_names)
        return EvalReport(
            confusion=confusion,
            class_names=names,
            precision=precision,
            recall=recall,
            f1=f1,
            support=support,
            weighted_precision=float(np.dot(weights, precision)),
            weighted_recall=float(np.dot(weights, recall)),
            weighted_f1=float(np.dot(weights, f1)),
            accuracy=accuracy,
            fpr_benign=fpr,
            undefined_precision=[names[i] for i in np.flatnonzero(no_pred & (support > 0))],
            undefined_f1=[names[i] for i in np.flatnonzero(no_f1 & (support > 0))],
        )

    @staticmethod
    def calculate(y_true: np.ndarray, y_pred: np.ndarray, class_names: Sequence[str],
                  benign_label: Optional[int] = 0) -> EvalReport:
        cm = confusion_matrix(y_true, y_pred, len(class_names))
        return MetricsCalculator.from_confusion(cm, class_names, benign_label)

    @staticmethod
    def average(reports: Sequence[EvalReport]) -> Dict[str, float]:
        """Fold-mean of the summary metrics; times are summed."""
        fprs = [r.fpr_benign for r in reports if r.fpr_benign is not None]
        return {
            "accuracy": float(np.mean([r.accuracy for r in reports])),
            "precision": float(np.mean([r.weighted_precision for r in reports])),
            "recall": float(np.mean([r.weighted_recall for r in reports])),
            "f1": float(np.mean([r.weighted_f1 for r in reports])),
            "fpr": float(np.mean(fprs)) if fprs else None,
            "train_time_s": float(sum(r.train_time_s for r in reports)),
            "infer_time_s": float(sum(r.infer_time_s for r in reports)),
        }

    @staticmethod
    def compare(results: Dict[str, EvalReport]) -> List[dict]:
        """
        Build a comparison table across several models.

        Args:
            results: {model_name: report, …}

        Returns:
            List of dicts suitable for tabular display, one per model; metric
            columns are percentages, times stay in seconds.
        """
        comparison = []
        for name, report in results.items():
            comparison.append({
                "model": name,
                "precision": 100 * report.weighted_precision,
                "recall": 100 * report.weighted_recall,
                "f1": 100 * report.weighted_f1,
                "fpr": None if report.fpr_benign is None else 100 * report.fpr_benign,
                "train_time_s": report.train_time_s,
                "infer_time_s": report.infer_time_s,
            })
        return comparison
