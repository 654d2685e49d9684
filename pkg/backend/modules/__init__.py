"""
DoS Flow Toolkit Core Modules
─────────────────────────────
Exports the main classes and entry points used by the pipeline facade.
"""

from .packet_ingest import PacketRecord, ParseStats, load_packets, parse_fixture, parse_pcap
from .flow_extraction import CloseReason, FlowConfig, FlowTable, extract_flows
from .features import FEATURE_NAMES, feature_dictionary, finalize, write_features_csv
from .dataset import ColumnSchema, Dataset, drop_excluded, load_csv, stratified_kfold, stratified_split
from .pca import PcaModel, pca_fit, select_components, transform
from .classifiers import ModelFamily, ModelSpec, TrainedModel, fit, gini_importance, predict
from .metrics import EvalReport, MetricsCalculator
from .evaluation import compare_models, evaluate, variance_sweep
from .synth import BlobSpec, gen_blobs, gen_flow_scenarios

__all__ = [
    "PacketRecord",
    "ParseStats",
    "load_packets",
    "parse_fixture",
    "parse_pcap",
    "CloseReason",
    "FlowConfig",
    "FlowTable",
    "extract_flows",
    "FEATURE_NAMES",
    "feature_dictionary",
    "finalize",
    "write_features_csv",
    "ColumnSchema",
    "Dataset",
    "drop_excluded",
    "load_csv",
    "stratified_kfold",
    "stratified_split",
    "PcaModel",
    "pca_fit",
    "select_components",
    "transform",
    "ModelFamily",
    "ModelSpec",
    "TrainedModel",
    "fit",
    "gini_importance",
    "predict",
    "EvalReport",
    "MetricsCalculator",
    "compare_models",
    "evaluate",
    "variance_sweep",
    "BlobSpec",
    "gen_blobs",
    "gen_flow_scenarios",
]
