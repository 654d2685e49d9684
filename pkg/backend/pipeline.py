"""
pipeline.py - Facade orchestrating the toolkit modules.

Provides a single entry-point class that coordinates packet ingest, flow
extraction, feature export, dataset preparation, the PCA variance sweep,
model comparison, feature importance, PCA reports, synthetic data and the
acceptance suite. Every run writes its resolved configuration beside its
outputs.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Tuple

from config import RunConfig, write_resolved
from modules.artifacts import write_csv, write_json
from modules.classifiers import (
    ImportanceReport,
    ModelFamily,
    fit,
    gini_importance,
    refit_on_top_features,
)
from modules.classifiers import save_model as save_classifier
from modules.dataset import (
    ColumnSchema,
    Dataset,
    drop_excluded,
    load_csv,
    stratified_split,
    write_split_manifest,
    zscore_fit,
)
from modules.evaluation import (
    ComparisonResult,
    SweepResult,
    check_thresholds,
    compare_both,
    evaluate,
    variance_sweep,
)
from modules.features import finalize_all, write_features_csv
from modules.flow_extraction import extract_flows
from modules.packet_ingest import load_packets
from modules.pca import (
    component_names,
    loadings_report,
    pca_fit,
    save_model,
    scree_report,
    select_components,
    transform,
)
from modules.plots import plot_cumulative, plot_importance, plot_loadings, plot_scree
from modules.synth import (
    SCENARIOS,
    check_manifest,
    gen_blobs,
    gen_flow_scenarios,
    one_nn_loo_accuracy,
    write_scenario,
)

logger = logging.getLogger("flow_ids.pipeline")

# Output file names
SPLIT_MANIFEST = "split_manifest.json"
SWEEP_CSV = "variance_sweep.csv"
SWEEP_TIMING_CSV = "variance_sweep_timing.csv"
WITH_PCA_CSV = "comparison_with_pca.csv"
WITH_PCA_TIMING_CSV = "comparison_with_pca_timing.csv"
WITHOUT_PCA_CSV = "comparison_without_pca.csv"
WITHOUT_PCA_TIMING_CSV = "comparison_without_pca_timing.csv"
BREAKDOWN_CSV = "per_class_breakdown.csv"
REPORTS_JSON = "comparison_reports.json"
IMPORTANCE_CSV = "importance.csv"
IMPORTANCE_REFIT_JSON = "importance_refit.json"
SCREE_CSV = "scree.csv"
SCREE_JSON = "scree.json"
LOADINGS_CSV = "loadings.csv"
LOADINGS_JSON = "loadings.json"
IMPORTANCE_PNG = "importance.png"
SCREE_PNG = "scree.png"
CUMULATIVE_PNG = "cumulative_variance.png"
LOADINGS_PNG = "loadings.png"
PCA_MODEL_JSON = "pca_model.json"
ACCEPTANCE_JSON = "acceptance.json"
MODELS_DIR = "models"


@dataclass
class CheckResult:
    name: str
    passed: bool
    detail: str = ""


@dataclass
class AcceptanceResult:
    checks: List[CheckResult] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def add(self, name: str, problems: Sequence[str]) -> None:
        self.checks.append(CheckResult(name, not problems, "; ".join(problems)))

    def to_dict(self) -> dict:
        return {
            "passed": self.passed,
            "checks": [{"name": c.name, "passed": c.passed, "detail": c.detail} for c in self.checks],
        }


class Pipeline:
    """
    Top-level facade for the DoS flow toolkit.

    Usage:
        pipe = Pipeline(load_run_config(overrides=["seed=3"]))
        pipe.extract("capture.pcap", "out/flows.csv")
        outputs = pipe.run_pipeline(["out/flows.csv"])
    """

    def __init__(self, config: Optional[RunConfig] = None):
        self.config = config or RunConfig()
        self.out_dir = Path(self.config.output_dir)

    def _out(self, name: str) -> Path:
        return self.out_dir / name

    def _model_path(self, name: str) -> Path:
        return self.out_dir / MODELS_DIR / f"{name}.joblib"

    def write_config(self) -> Path:
        return write_resolved(self.config, self.out_dir)

    # ── Flow Extraction ──────────────────────────────────

    def extract(self, source: str, target: Optional[str] = None) -> Dict[str, Any]:
        """
        pcap or fixture → flows CSV.

        Returns:
            Summary counters {packets_read, packets_in, dropped, flows, rows, ...}.
        """
        cfg = self.config.flow_config()
        packets, parse_stats = load_packets(source)
        closed, table_stats = extract_flows(packets, cfg)
        rows = finalize_all(closed, cfg)
        target = Path(target) if target else self._out("flows.csv")
        written = write_features_csv(rows, target)
        summary = {
            **{f"parse_{k}": v for k, v in parse_stats.to_dict().items()},
            **table_stats.to_dict(),
            "rows": written,
            "output": str(target),
        }
        logger.info("extract %s: %d packets in, %d dropped, %d flows → %s",
                    source, table_stats.packets_in, table_stats.packets_dropped, written, target)
        return summary

    # ── Dataset ──────────────────────────────────────────

    def load(self, paths: Optional[Sequence[str]] = None) -> Dataset:
        paths = list(paths or self.config.inputs)
        if not paths:
            raise ValueError("no input CSV given")
        ds = load_csv(paths, ColumnSchema.named(self.config.schema_name))
        return drop_excluded(ds)

    def split(self, ds: Dataset) -> Tuple[Dataset, Dataset, Dataset]:
        cfg = self.config
        if len(cfg.split_fractions) != 3:
            raise ValueError("split_fractions must name train, validation and test parts")
        parts = stratified_split(ds, cfg.split_fractions, cfg.seed)
        write_split_manifest(parts, cfg.split_fractions, cfg.seed, self._out(SPLIT_MANIFEST))
        return parts

    # ── Analyses ─────────────────────────────────────────

    def run_sweep(self, train: Dataset) -> SweepResult:
        cfg = self.config
        result = variance_sweep(train, cfg.variance_targets, cfg.folds, cfg.seed,
                                cfg.model_spec(cfg.sweep_family), cfg.drop_rare_classes)
        write_csv(result.table, self._out(SWEEP_CSV))
        write_csv(result.timing, self._out(SWEEP_TIMING_CSV))
        return result

    def run_compare(self, train: Dataset, test: Dataset) -> Tuple[ComparisonResult, ComparisonResult]:
        cfg = self.config
        with_pca, without = compare_both(train, test, cfg.compare_variance,
                                         cfg.model_specs(), cfg.breakdown_family)
        write_csv(with_pca.table, self._out(WITH_PCA_CSV))
        write_csv(with_pca.timing, self._out(WITH_PCA_TIMING_CSV))
        write_csv(without.table, self._out(WITHOUT_PCA_CSV))
        write_csv(without.timing, self._out(WITHOUT_PCA_TIMING_CSV))
        if with_pca.breakdown is not None:
            write_csv(with_pca.breakdown, self._out(BREAKDOWN_CSV))
        write_json({
            "with_pca": {"n_components": with_pca.n_components,
                         **{f.value: r.to_dict() for f, r in with_pca.reports.items()}},
            "without_pca": {f.value: r.to_dict() for f, r in without.reports.items()},
        }, self._out(REPORTS_JSON))
        for arm, result in (("with_pca", with_pca), ("without_pca", without)):
            preprocess = {"scaler": result.scaler, "pca": result.pca,
                          "n_components": result.n_components}
            for family, model in result.models.items():
                save_classifier(model, self._model_path(f"{arm}_{family.value}"), preprocess)
        return with_pca, without

    def run_importance(self, train: Dataset, test: Dataset) -> ImportanceReport:
        cfg = self.config
        model = fit(cfg.model_spec(ModelFamily.DT), train.X, train.y, train.n_classes,
                    train.feature_names)
        save_classifier(model, self._model_path("importance_dt"))
        importance = gini_importance(model)
        write_csv(importance.to_frame(), self._out(IMPORTANCE_CSV))
        plot_importance(importance, self._out(IMPORTANCE_PNG))
        n_top = min(cfg.importance_top, train.n_features)
        refit, report = refit_on_top_features(train, test, importance, n_top,
                                              cfg.model_spec(ModelFamily.DT))
        save_classifier(refit, self._model_path("importance_refit_dt"))
        write_json({"features": importance.top(n_top), "report": report.to_dict()},
                   self._out(IMPORTANCE_REFIT_JSON))
        logger.info("Top features: %s", ", ".join(importance.top(n_top)))
        return importance

    def run_pca_report(self, train: Dataset):
        model = pca_fit(zscore_fit(train).apply(train.X), train.feature_names)
        scree = scree_report(model)
        write_csv(scree, self._out(SCREE_CSV))
        write_json(scree.to_dict(orient="records"), self._out(SCREE_JSON))
        top_m = min(self.config.loadings_top, model.d_original)
        loadings = loadings_report(model, top_m)
        write_csv(loadings, self._out(LOADINGS_CSV))
        write_json(loadings.to_dict(orient="records"), self._out(LOADINGS_JSON))
        plot_scree(model, self._out(SCREE_PNG))
        plot_cumulative(model, self._out(CUMULATIVE_PNG), self.config.variance_targets)
        plot_loadings(model, self._out(LOADINGS_PNG), top_m)
        save_model(model, self._out(PCA_MODEL_JSON))
        return model

    def run_pipeline(self, paths: Optional[Sequence[str]] = None) -> Dict[str, Any]:
        """load → drop_excluded → split → every task in config.tasks."""
        ds = self.load(paths)
        train, _, test = self.split(ds)
        results: Dict[str, Any] = {}
        tasks = self.config.tasks
        if "sweep" in tasks:
            results["sweep"] = self.run_sweep(train)
        if "compare" in tasks:
            results["compare"] = self.run_compare(train, test)
        if "importance" in tasks:
            results["importance"] = self.run_importance(train, test)
        if "pca-report" in tasks:
            results["pca-report"] = self.run_pca_report(train)
        self.write_config()
        return results

    # ── Synthetic Data ───────────────────────────────────

    def synth_blobs(self, target: Optional[str] = None) -> Path:
        ds = gen_blobs(self.config.blob_spec())
        target = Path(target) if target else self._out("blobs.csv")
        return write_csv(ds.to_frame(), target)

    def synth_flows(self, names: Optional[Sequence[str]] = None) -> List[Path]:
        names = list(names or SCENARIOS)
        return [
            write_scenario(gen_flow_scenarios(name, self.config.seed), self.out_dir,
                           self.config.scenario_format)
            for name in names
        ]

    # ── Acceptance ───────────────────────────────────────

    def accept(self) -> AcceptanceResult:
        """
        Flow-scenario manifests plus the synthetic end-to-end checks.

        The end-to-end part checks the blob set against the 1-NN
        leave-one-out floor, sweeps its training split and evaluates a DT
        on the 0.95-variance projection of the test split against
        config.thresholds.
        """
        cfg = self.config
        result = AcceptanceResult()
        flow_cfg = cfg.flow_config()
        for name in SCENARIOS:
            scenario = gen_flow_scenarios(name, cfg.seed)
            closed, stats = extract_flows(scenario.packets, flow_cfg)
            rows = finalize_all(closed, flow_cfg)
            result.add(f"scenario:{name}", check_manifest(scenario.manifest, closed, stats, rows))

        blobs = gen_blobs(cfg.blob_spec())
        separability = one_nn_loo_accuracy(blobs)
        result.add("blobs:one_nn_leave_one_out",
                   [] if separability >= cfg.separability_floor
                   else [f"1-NN LOO accuracy: {separability:.6f} < {cfg.separability_floor}"])
        train, _, test = stratified_split(blobs, cfg.split_fractions, cfg.seed)
        sweep = variance_sweep(train, cfg.variance_targets, cfg.folds, cfg.seed,
                               cfg.model_spec(ModelFamily.DT), cfg.drop_rare_classes)
        counts = list(sweep.table["n_components"])
        monotone = all(a <= b for a, b in zip(counts, counts[1:]))
        result.add("sweep:n_components_non_decreasing",
                   [] if monotone else [f"component counts {counts}"])

        scaler = zscore_fit(train)
        pca = pca_fit(scaler.apply(train.X), train.feature_names)
        k = select_components(pca, 0.95)
        Z_train = transform(pca, scaler.apply(train.X), k)
        Z_test = transform(pca, scaler.apply(test.X), k)
        names = component_names(k)
        model = fit(cfg.model_spec(ModelFamily.DT), Z_train, train.y, train.n_classes, names)
        report = evaluate(model, test.with_matrix(Z_test, names, "accept projection"))
        result.add("blobs:dt_at_0.95_variance", check_thresholds(report.summary(), cfg.thresholds))

        write_json({**result.to_dict(), "sweep": sweep.table.to_dict(orient="records")},
                   self._out(ACCEPTANCE_JSON))
        self.write_config()
        return result
