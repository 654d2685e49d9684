"""
config.py - Default constants, logging setup and run configuration.

This module centralizes every configurable parameter of the toolkit.
A RunConfig is resolved from, in increasing precedence:
  • the defaults below
  • a flat key=value config file (# comments, comma-separated lists)
  • environment variables FLOWIDS_<KEY>
  • --set key=value flags on the command line
"""

import logging
import os
from pathlib import Path
from typing import Dict, Iterable, List, Literal, Mapping, Optional

from pydantic import BaseModel, Field, ValidationError, field_validator

from modules.artifacts import write_text
from modules.classifiers import ModelFamily, ModelSpec
from modules.errors import ConfigError
from modules.flow_extraction import FlowConfig
from modules.synth import BlobSpec

# ──────────────────────────────────────────────
# Pipeline Defaults
# ──────────────────────────────────────────────
DEFAULT_SEED = 0
DEFAULT_SPLIT_FRACTIONS = [0.50, 0.25, 0.25]   # train / validation / test
DEFAULT_FOLDS = 5
DEFAULT_VARIANCE_TARGETS = [0.50, 0.60, 0.70, 0.80, 0.90, 0.95, 0.99]
DEFAULT_COMPARE_VARIANCE = 0.80
DEFAULT_IMPORTANCE_TOP = 6
DEFAULT_LOADINGS_TOP = 3
DEFAULT_TASKS = ["sweep", "compare", "importance", "pca-report"]
DEFAULT_THRESHOLDS = {"min_accuracy": 0.95}
DEFAULT_SEPARABILITY_FLOOR = 0.99   # 1-NN leave-one-out on the blob set

ENV_PREFIX = "FLOWIDS_"
RESOLVED_CONFIG_FILE = "resolved_config.txt"

_FLOW = FlowConfig()
_MODEL = ModelSpec()
_BLOBS = BlobSpec()

# ──────────────────────────────────────────────
# Logging Configuration
# ──────────────────────────────────────────────
LOG_FORMAT = "%(asctime)s | %(levelname)-7s | %(name)s | %(message)s"


def setup_logging() -> logging.Logger:
    """Configure and return the root toolkit logger (safe to call repeatedly)."""
    logger = logging.getLogger("flow_ids")
    level = os.getenv(ENV_PREFIX + "LOG_LEVEL", "INFO")
    logger.setLevel(getattr(logging, level.upper(), logging.INFO))
    if logger.handlers:
        return logger

    # Console handler
    console = logging.StreamHandler()
    console.setFormatter(logging.Formatter(LOG_FORMAT))
    logger.addHandler(console)

    # File handler, skipped on read-only filesystems
    try:
        log_file = os.getenv(ENV_PREFIX + "LOG_FILE", "flow_ids.log")
        file_handler = logging.FileHandler(log_file, mode="a", encoding="utf-8")
        file_handler.setFormatter(logging.Formatter(LOG_FORMAT))
        logger.addHandler(file_handler)
    except OSError:
        logger.debug("File logging disabled (read-only filesystem)")

    return logger


# ──────────────────────────────────────────────
# Run Configuration
# ──────────────────────────────────────────────


class RunConfig(BaseModel):
    """Fully resolved settings of one command; every field is a flat key."""
    # paths
    inputs: List[str] = []
    output_dir: str = "out"
    schema_name: Literal["dictionary", "open", "lycos"] = "dictionary"

    # flow extraction
    udp_timeout_us: int = Field(_FLOW.udp_timeout_us, gt=0)
    tcp_timeout_us: int = Field(_FLOW.tcp_timeout_us, gt=0)
    terminated_retention_us: int = Field(_FLOW.terminated_retention_us, ge=0)
    activity_threshold_us: int = Field(_FLOW.activity_threshold_us, gt=0)
    ooo_tolerance_us: int = Field(_FLOW.ooo_tolerance_us, ge=0)
    subflow_gap_us: int = Field(_FLOW.subflow_gap_us, gt=0)
    bulk_min_packets: int = Field(_FLOW.bulk_min_packets, ge=2)
    bulk_max_gap_us: int = Field(_FLOW.bulk_max_gap_us, gt=0)
    sweep_interval_packets: int = Field(_FLOW.sweep_interval_packets, ge=0)
    label: str = _FLOW.label

    # dataset / evaluation
    seed: int = DEFAULT_SEED
    split_fractions: List[float] = list(DEFAULT_SPLIT_FRACTIONS)
    folds: int = Field(DEFAULT_FOLDS, ge=2)
    variance_targets: List[float] = list(DEFAULT_VARIANCE_TARGETS)
    compare_variance: float = Field(DEFAULT_COMPARE_VARIANCE, gt=0, le=1)
    drop_rare_classes: bool = True
    families: List[ModelFamily] = list(ModelFamily)
    breakdown_family: ModelFamily = ModelFamily.KNN
    sweep_family: ModelFamily = ModelFamily.DT
    importance_top: int = Field(DEFAULT_IMPORTANCE_TOP, ge=1)
    loadings_top: int = Field(DEFAULT_LOADINGS_TOP, ge=1)
    tasks: List[Literal["sweep", "compare", "importance", "pca-report"]] = list(DEFAULT_TASKS)
    thresholds: Dict[str, float] = dict(DEFAULT_THRESHOLDS)
    separability_floor: float = Field(DEFAULT_SEPARABILITY_FLOOR, gt=0, le=1)

    # model hyperparameters
    max_depth: int = Field(_MODEL.max_depth, ge=1)
    min_samples_split: int = Field(_MODEL.min_samples_split, ge=2)
    n_estimators: int = Field(_MODEL.n_estimators, ge=1)
    n_neighbors: int = Field(_MODEL.n_neighbors, ge=1)
    knn_algorithm: Literal["auto", "brute", "kd_tree"] = _MODEL.knn_algorithm
    ridge: float = Field(_MODEL.ridge, ge=0)
    svm_epochs: int = Field(_MODEL.svm_epochs, ge=1)

    # synthetic data
    blob_n_per_class: int = Field(_BLOBS.n_per_class, ge=1)
    blob_n_classes: int = Field(_BLOBS.n_classes, ge=1)
    blob_d: int = Field(_BLOBS.d, ge=1)
    blob_n_informative: int = Field(_BLOBS.n_informative, ge=1)
    blob_separation: float = Field(_BLOBS.separation, ge=0)
    blob_noise: float = Field(_BLOBS.noise, gt=0)
    blob_seed: int = _BLOBS.seed
    scenario_format: Literal["fixture", "pcap"] = "fixture"

    @field_validator("inputs", "split_fractions", "variance_targets", "families", "tasks",
                     mode="before")
    @classmethod
    def _split_list(cls, value):
        if isinstance(value, str):
            return [item.strip() for item in value.split(",") if item.strip()]
        return value

    @field_validator("thresholds", mode="before")
    @classmethod
    def _split_mapping(cls, value):
        if isinstance(value, str):
            pairs = [item.split(":", 1) for item in value.split(",") if item.strip()]
            if any(len(pair) != 2 for pair in pairs):
                raise ValueError("thresholds must look like name:value,name:value")
            return {name.strip(): val.strip() for name, val in pairs}
        return value

    def flow_config(self) -> FlowConfig:
        return FlowConfig(**{name: getattr(self, name) for name in FlowConfig.model_fields})

    def model_spec(self, family: ModelFamily) -> ModelSpec:
        return ModelSpec(
            family=family,
            max_depth=self.max_depth,
            min_samples_split=self.min_samples_split,
            n_estimators=self.n_estimators,
            n_neighbors=self.n_neighbors,
            knn_algorithm=self.knn_algorithm,
            ridge=self.ridge,
            svm_epochs=self.svm_epochs,
            seed=self.seed,
        )

    def model_specs(self) -> List[ModelSpec]:
        return [self.model_spec(f) for f in self.families]

    def blob_spec(self) -> BlobSpec:
        return BlobSpec(
            n_per_class=self.blob_n_per_class,
            n_classes=self.blob_n_classes,
            d=self.blob_d,
            n_informative=self.blob_n_informative,
            separation=self.blob_separation,
            noise=self.blob_noise,
            seed=self.blob_seed,
        )


def _format_value(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, ModelFamily):
        return value.value
    if isinstance(value, dict):
        return ",".join(f"{k}:{_format_value(v)}" for k, v in sorted(value.items()))
    if isinstance(value, (list, tuple)):
        return ",".join(_format_value(v) for v in value)
    return str(value)


def parse_key_values(lines: Iterable[str], source: str) -> Dict[str, str]:
    """Read `key = value` lines; blank lines and # comments are skipped."""
    values = {}
    for line_no, raw in enumerate(lines, start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        key, sep, value = line.partition("=")
        if not sep or not key.strip():
            raise ConfigError(f"{source}:{line_no}: expected key=value, got '{line}'")
        values[key.strip()] = value.strip()
    return values


def _check_keys(values: Mapping[str, str], source: str) -> None:
    unknown = sorted(set(values) - set(RunConfig.model_fields))
    if unknown:
        raise ConfigError(f"{source}: unknown key(s): {', '.join(unknown)}")


def load_run_config(path: Optional[str] = None, overrides: Iterable[str] = (),
                    env: Optional[Mapping[str, str]] = None, **explicit) -> RunConfig:
    """
    Resolve a RunConfig from defaults, file, environment and overrides.

    Args:
        path:      Optional key=value config file.
        overrides: "key=value" strings from --set flags.
        env:       Environment mapping (default os.environ).
        explicit:  Values set by dedicated CLI flags; applied last.

    Raises:
        ConfigError: unknown key, malformed line or invalid value.
    """
    env = os.environ if env is None else env
    values: Dict[str, object] = {}
    if path:
        with open(path, encoding="utf-8") as f:
            from_file = parse_key_values(f, path)
        _check_keys(from_file, path)
        values.update(from_file)
    for name in RunConfig.model_fields:
        env_value = env.get(ENV_PREFIX + name.upper())
        if env_value is not None:
            values[name] = env_value
    from_flags = parse_key_values(overrides, "--set")
    _check_keys(from_flags, "--set")
    values.update(from_flags)
    values.update({k: v for k, v in explicit.items() if v is not None})
    try:
        return RunConfig.model_validate(values)
    except ValidationError as exc:
        raise ConfigError(f"invalid configuration: {exc}") from None


def dump_resolved(cfg: RunConfig) -> str:
    """Serialize every field as sorted key=value lines (re-loadable)."""
    lines = [f"{name}={_format_value(getattr(cfg, name))}" for name in sorted(RunConfig.model_fields)]
    return "\n".join(lines) + "\n"


def write_resolved(cfg: RunConfig, out_dir) -> Path:
    return write_text(dump_resolved(cfg), Path(out_dir) / RESOLVED_CONFIG_FILE)


# Create logger on import
logger = setup_logging()
