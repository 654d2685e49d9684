"""
evaluation.py - Model evaluation, PCA variance sweep and model comparison.

  • evaluate          one model on one labelled set → EvalReport
  • variance_sweep    k-fold CV of Scaler → PCA cut → model per variance target
  • compare_models    every family on train/test, with or without PCA
  • check_thresholds  acceptance checks over named metrics
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from .classifiers import ModelFamily, ModelSpec, TrainedModel, fit, predict
from .dataset import Dataset, Scaler, stratified_kfold, zscore_fit
from .errors import DimensionError
from .metrics import EvalReport, MetricsCalculator
from .pca import PcaModel, component_names, pca_fit, select_components, transform

logger = logging.getLogger("flow_ids.evaluation")

DEFAULT_TARGETS = (0.50, 0.60, 0.70, 0.80, 0.90, 0.95, 0.99)
DEFAULT_FAMILIES = (
    ModelFamily.DT, ModelFamily.RF, ModelFamily.KNN,
    ModelFamily.LDA, ModelFamily.QDA, ModelFamily.SVM_LINEAR,
)


def evaluate(model: TrainedModel, test: Dataset) -> EvalReport:
    """
    Predict test and score it against the truth.

    Raises:
        DimensionError: empty test set or column mismatch.
    """
    if len(test) == 0:
        raise DimensionError("cannot evaluate on an empty test set")
    labels, infer_time = predict(model, test.X)
    report = MetricsCalculator.calculate(test.y, labels, test.class_names, test.benign_label)
    report.train_time_s = model.train_time_s
    report.infer_time_s = infer_time
    return report


# ══════════════════════════════════════════════════════════
#  Variance sweep
# ══════════════════════════════════════════════════════════


@dataclass
class SweepResult:
    """
    Attributes:
        table:   target, n_components, fold-mean n_components and mean metrics.
        timing:  target, summed train / inference seconds over folds.
        dropped_classes: Classes removed from CV for having fewer rows than folds.
    """
    table: pd.DataFrame
    timing: pd.DataFrame
    dropped_classes: List[str] = field(default_factory=list)


def _drop_rare(ds: Dataset, k: int) -> Tuple[Dataset, List[str]]:
    counts = ds.class_counts()
    rare = [c for c in range(ds.n_classes) if 0 < counts[c] < k]
    if not rare:
        return ds, []
    names = [ds.class_names[c] for c in rare]
    logger.warning("variance_sweep: dropping class(es) with fewer than %d rows: %s",
                   k, ", ".join(names))
    keep = np.flatnonzero(~np.isin(ds.y, rare))
    return ds.subset(keep, f"drop_rare_classes k={k}"), names


def variance_sweep(train: Dataset, targets: Sequence[float] = DEFAULT_TARGETS, k: int = 5,
                   seed: int = 0, spec: Optional[ModelSpec] = None,
                   drop_rare_classes: bool = True) -> SweepResult:
    """
    Cross-validated accuracy per PCA variance target.

    Each fold fits its own Scaler and PCA on the fold-train rows, cuts the
    components at every target and trains a model (DT by default) on the
    projected rows. Metrics are fold means; times are fold sums. The
    n_components column comes from a PCA on the whole (scaled) train set.
    """
    spec = spec or ModelSpec(family=ModelFamily.DT, seed=seed)
    targets = sorted(float(t) for t in targets)
    dropped: List[str] = []
    if drop_rare_classes:
        train, dropped = _drop_rare(train, k)

    full_scaler = zscore_fit(train)
    full_pca = pca_fit(full_scaler.apply(train.X), train.feature_names)
    overall_k = {t: select_components(full_pca, t) for t in targets}

    reports: Dict[float, List[EvalReport]] = {t: [] for t in targets}
    fold_k: Dict[float, List[int]] = {t: [] for t in targets}
    for fold, (fit_idx, val_idx) in enumerate(stratified_kfold(train, k, seed)):
        scaler = zscore_fit(train.X[fit_idx])
        Z_fit = scaler.apply(train.X[fit_idx])
        Z_val = scaler.apply(train.X[val_idx])
        pca = pca_fit(Z_fit, train.feature_names)
        for t in targets:
            kc = select_components(pca, t)
            fold_k[t].append(kc)
            model = fit(spec, transform(pca, Z_fit, kc), train.y[fit_idx], train.n_classes)
            labels, infer_time = predict(model, transform(pca, Z_val, kc))
            report = MetricsCalculator.calculate(
                train.y[val_idx], labels, train.class_names, train.benign_label)
            report.train_time_s = model.train_time_s
            report.infer_time_s = infer_time
            reports[t].append(report)
        logger.info("variance_sweep: fold %d/%d done", fold + 1, k)

    rows, timing = [], []
    for t in targets:
        mean = MetricsCalculator.average(reports[t])
        rows.append({
            "variance_target": t,
            "n_components": overall_k[t],
            "n_components_fold_mean": float(np.mean(fold_k[t])),
            "accuracy": mean["accuracy"],
            "precision": mean["precision"],
            "recall": mean["recall"],
            "f1": mean["f1"],
            "fpr": mean["fpr"],
        })
        timing.append({
            "variance_target": t,
            "train_time_s": mean["train_time_s"],
            "infer_time_s": mean["infer_time_s"],
            "total_time_s": mean["train_time_s"] + mean["infer_time_s"],
        })
        logger.info("variance %.2f → %d components, accuracy %.4f",
                    t, overall_k[t], mean["accuracy"])
    return SweepResult(pd.DataFrame(rows), pd.DataFrame(timing), dropped)


# ══════════════════════════════════════════════════════════
#  Model comparison
# ══════════════════════════════════════════════════════════


@dataclass
class ComparisonResult:
    """
    Attributes:
        with_pca:     Whether the features were projected.
        n_components: Components kept (None without PCA).
        reports:      family → EvalReport on the test set.
        table:        One metric row per family (percentages).
        timing:       One timing row per family (seconds).
        breakdown:    Per-class table of the breakdown family, if it ran.
        models:       family → fitted model.
        scaler:       Scaler fitted on train.
        pca:          PCA fitted on the scaled train split (with_pca only).
    """
    with_pca: bool
    n_components: Optional[int]
    reports: Dict[ModelFamily, EvalReport]
    table: pd.DataFrame
    timing: pd.DataFrame
    breakdown: Optional[pd.DataFrame] = None
    models: Dict[ModelFamily, TrainedModel] = field(default_factory=dict)
    scaler: Optional[Scaler] = None
    pca: Optional[PcaModel] = None


def default_specs(seed: int = 0) -> List[ModelSpec]:
    return [ModelSpec(family=f, seed=seed) for f in DEFAULT_FAMILIES]


def compare_models(train: Dataset, test: Dataset, with_pca: bool,
                   variance_target: float = 0.80, specs: Optional[Sequence[ModelSpec]] = None,
                   scaler: Optional[Scaler] = None,
                   breakdown_family: ModelFamily = ModelFamily.KNN) -> ComparisonResult:
    """
    Fit every spec on train and evaluate on test.

    The Scaler is fitted on train unless one is passed in, so that the
    with-PCA and without-PCA arms can share it.
    """
    specs = list(specs) if specs is not None else default_specs()
    scaler = scaler or zscore_fit(train)
    Z_train = scaler.apply(train.X)
    Z_test = scaler.apply(test.X)
    names = list(train.feature_names)
    n_components = None
    pca = None
    if with_pca:
        pca = pca_fit(Z_train, train.feature_names)
        n_components = select_components(pca, variance_target)
        Z_train = transform(pca, Z_train, n_components)
        Z_test = transform(pca, Z_test, n_components)
        names = component_names(n_components)
        logger.info("compare_models: %.2f variance → %d components", variance_target, n_components)

    projected_test = test.with_matrix(Z_test, names, "compare_models projection")
    reports: Dict[ModelFamily, EvalReport] = {}
    models: Dict[ModelFamily, TrainedModel] = {}
    for spec in specs:
        models[spec.family] = fit(spec, Z_train, train.y, train.n_classes, names)
        reports[spec.family] = evaluate(models[spec.family], projected_test)

    rows = MetricsCalculator.compare({f.label: r for f, r in reports.items()})
    table = pd.DataFrame([{k: v for k, v in row.items() if not k.endswith("_time_s")} for row in rows])
    timing = pd.DataFrame([
        {"model": row["model"], "train_time_s": row["train_time_s"], "infer_time_s": row["infer_time_s"]}
        for row in rows
    ])
    breakdown = reports[breakdown_family].per_class_table() if breakdown_family in reports else None
    return ComparisonResult(with_pca, n_components, reports, table, timing, breakdown,
                            models, scaler, pca)


def compare_both(train: Dataset, test: Dataset, variance_target: float = 0.80,
                 specs: Optional[Sequence[ModelSpec]] = None,
                 breakdown_family: ModelFamily = ModelFamily.KNN
                 ) -> Tuple[ComparisonResult, ComparisonResult]:
    """Run the with-PCA and without-PCA arms on one shared Scaler."""
    scaler = zscore_fit(train)
    with_pca = compare_models(train, test, True, variance_target, specs, scaler, breakdown_family)
    without = compare_models(train, test, False, variance_target, specs, scaler, breakdown_family)
    return with_pca, without


# ══════════════════════════════════════════════════════════
#  Acceptance thresholds
# ══════════════════════════════════════════════════════════


def check_thresholds(observed: Dict[str, Optional[float]],
                     thresholds: Dict[str, float]) -> List[str]:
    """
    Compare observed metrics to "min_<metric>" / "max_<metric>" bounds.

    Returns:
        One message per violated or unmeasured bound; empty when all pass.
    """
    violations = []
    for key, bound in sorted(thresholds.items()):
        kind, _, metric = key.partition("_")
        if kind not in ("min", "max") or not metric:
            raise ValueError(f"threshold '{key}' must look like min_<metric> or max_<metric>")
        value = observed.get(metric)
        if value is None:
            violations.append(f"{metric}: not measured (bound {kind} {bound})")
        elif kind == "min" and value < bound:
            violations.append(f"{metric}: {value:.6g} < {bound}")
        elif kind == "max" and value > bound:
            violations.append(f"{metric}: {value:.6g} > {bound}")
    return violations
