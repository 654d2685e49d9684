"""
dataset.py - Feature table loading, column exclusion, stratified splits,
Z-score scaling and stratified k-fold indices.

A Dataset is an immutable bundle of a numeric matrix, integer labels and
the name registries for both; every transform returns a new Dataset and
appends a line to its provenance log.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd
from pydantic import BaseModel

from .artifacts import write_json
from .errors import DimensionError, SchemaError, StratificationError
from .features import FEATURE_NAMES, IDENTIFICATION_COLUMNS, LABEL_COLUMN

logger = logging.getLogger("flow_ids.dataset")

BENIGN = "benign"

# Always-null URG columns of the published flow files.
URG_COLUMNS = ["fwd_urg_cnt", "bwd_urg_cnt", "flag_urg"]
DEFAULT_EXCLUDED = URG_COLUMNS + IDENTIFICATION_COLUMNS

# Column names of the LYCOS-IDS2017 CSVs that differ from the dictionary.
LYCOS_COLUMN_MAPPING = {
    "src_addr": "src_ip",
    "dst_addr": "dst_ip",
    "ip_prot": "protocol",
}


class ColumnSchema(BaseModel):
    """
    How CSV headers map onto dataset columns.

    Attributes:
        known_columns: Accepted names after mapping; None = feature dictionary.
        accept_any:    Accept every column (synthetic / third-party tables).
        mapping:       Source header → canonical name renames.
        label_column:  Name of the class column (after mapping).
        excluded:      Columns removed by drop_excluded.
    """
    known_columns: Optional[List[str]] = None
    accept_any: bool = False
    mapping: Dict[str, str] = {}
    label_column: str = LABEL_COLUMN
    excluded: List[str] = list(DEFAULT_EXCLUDED)

    @classmethod
    def dictionary(cls) -> "ColumnSchema":
        return cls()

    @classmethod
    def open(cls) -> "ColumnSchema":
        return cls(accept_any=True)

    @classmethod
    def lycos(cls) -> "ColumnSchema":
        return cls(mapping=dict(LYCOS_COLUMN_MAPPING))

    @classmethod
    def named(cls, name: str) -> "ColumnSchema":
        factories = {"dictionary": cls.dictionary, "open": cls.open, "lycos": cls.lycos}
        if name not in factories:
            raise SchemaError(f"unknown schema '{name}'; choose from {sorted(factories)}")
        return factories[name]()


@dataclass(frozen=True)
class Provenance:
    sources: Tuple[str, ...] = ()
    transforms: Tuple[str, ...] = ()
    dropped_nonfinite: int = 0
    duplicate_rows: int = 0
    dropped_null_columns: Tuple[str, ...] = ()

    def add(self, entry: str) -> "Provenance":
        return replace(self, transforms=self.transforms + (entry,))


@dataclass(frozen=True)
class Dataset:
    """
    Numeric feature matrix plus labels.

    Attributes:
        X:             N×d float matrix, finite.
        y:             N integer labels, each < len(class_names).
        feature_names: d column names.
        class_names:   label index → class string; "benign" is index 0 when present.
        provenance:    Source files and transform log.
    """
    X: np.ndarray
    y: np.ndarray
    feature_names: Tuple[str, ...]
    class_names: Tuple[str, ...]
    provenance: Provenance = field(default_factory=Provenance)
    excluded: Tuple[str, ...] = tuple(DEFAULT_EXCLUDED)

    def __post_init__(self):
        if self.X.ndim != 2 or self.X.shape[1] != len(self.feature_names):
            raise DimensionError(
                f"X has shape {self.X.shape} but {len(self.feature_names)} feature names")
        if self.y.shape != (self.X.shape[0],):
            raise DimensionError(f"y has shape {self.y.shape}, expected ({self.X.shape[0]},)")
        if self.y.size and (self.y.min() < 0 or self.y.max() >= len(self.class_names)):
            raise DimensionError("label outside the class registry")

    def __len__(self) -> int:
        return self.X.shape[0]

    @property
    def n_features(self) -> int:
        return self.X.shape[1]

    @property
    def n_classes(self) -> int:
        return len(self.class_names)

    @property
    def benign_label(self) -> Optional[int]:
        if self.class_names and self.class_names[0].lower() == BENIGN:
            return 0
        return None

    def class_counts(self) -> np.ndarray:
        return np.bincount(self.y, minlength=self.n_classes)

    def subset(self, indices: np.ndarray, note: Optional[str] = None) -> "Dataset":
        indices = np.asarray(indices, dtype=np.int64)
        prov = self.provenance.add(note) if note else self.provenance
        return replace(self, X=self.X[indices], y=self.y[indices], provenance=prov)

    def with_matrix(self, X: np.ndarray, feature_names: Sequence[str], note: str) -> "Dataset":
        return replace(self, X=X, feature_names=tuple(feature_names),
                       provenance=self.provenance.add(note))

    def to_frame(self) -> pd.DataFrame:
        frame = pd.DataFrame(self.X, columns=list(self.feature_names))
        frame[LABEL_COLUMN] = [self.class_names[i] for i in self.y]
        return frame


# ══════════════════════════════════════════════════════════
#  Loading
# ══════════════════════════════════════════════════════════


def _intern_labels(labels: pd.Series) -> Tuple[np.ndarray, Tuple[str, ...]]:
    """First-seen order, with benign forced to index 0."""
    names = [str(v) for v in pd.unique(labels.astype(str))]
    benign = [n for n in names if n.lower() == BENIGN]
    if benign:
        names.remove(benign[0])
        names.insert(0, benign[0])
    index = {name: i for i, name in enumerate(names)}
    y = labels.astype(str).map(index).to_numpy(dtype=np.int64)
    return y, tuple(names)


def _looks_headerless(columns: Sequence[str]) -> bool:
    for col in columns:
        try:
            float(str(col))
        except ValueError:
            return False
    return True


def load_csv(paths: Union[str, Path, Sequence[Union[str, Path]]],
             schema: Optional[ColumnSchema] = None) -> Dataset:
    """
    Load one or more feature CSVs into a Dataset.

    Columns that are entirely null are removed first; rows with any NaN or
    infinite entry are then dropped and counted. Duplicate rows are counted
    but kept.

    Raises:
        SchemaError: empty file, missing header, missing label column or a
            column the schema cannot place.
    """
    schema = schema or ColumnSchema.dictionary()
    if isinstance(paths, (str, Path)):
        paths = [paths]
    frames = []
    for path in paths:
        try:
            frame = pd.read_csv(path, low_memory=False)
        except pd.errors.EmptyDataError:
            raise SchemaError(f"{path}: empty file") from None
        if _looks_headerless(frame.columns):
            raise SchemaError(f"{path}: missing header row")
        frame.columns = [str(c).strip() for c in frame.columns]
        frame = frame.rename(columns=schema.mapping)
        frames.append(frame)
    frame = pd.concat(frames, ignore_index=True) if len(frames) > 1 else frames[0]
    if frame.empty:
        raise SchemaError(f"{', '.join(map(str, paths))}: no data rows")

    label_col = schema.label_column
    if label_col not in frame.columns:
        raise SchemaError(f"label column '{label_col}' not found", [label_col])
    if not schema.accept_any:
        known = set(schema.known_columns or FEATURE_NAMES)
        unknown = [c for c in frame.columns if c not in known and c != label_col]
        if unknown:
            raise SchemaError(f"unmappable column(s): {', '.join(unknown)}", unknown)

    feature_cols = [c for c in frame.columns if c != label_col]
    numeric = pd.DataFrame(index=frame.index)
    for col in feature_cols:
        series = frame[col]
        if col in IDENTIFICATION_COLUMNS and not pd.api.types.is_numeric_dtype(series):
            codes, _ = pd.factorize(series, sort=False)
            numeric[col] = codes.astype(float)
        else:
            numeric[col] = pd.to_numeric(series, errors="coerce").astype(float)

    null_cols = [c for c in feature_cols if numeric[c].isna().all()]
    if null_cols:
        logger.info("Dropping all-null columns: %s", ", ".join(null_cols))
        numeric = numeric.drop(columns=null_cols)

    values = numeric.to_numpy(dtype=float)
    finite = np.isfinite(values).all(axis=1) & frame[label_col].notna().to_numpy()
    dropped = int((~finite).sum())
    duplicates = int(numeric.assign(_label=frame[label_col]).duplicated().sum())
    if dropped:
        logger.info("Dropped %d row(s) with NaN/Inf entries", dropped)

    y, class_names = _intern_labels(frame.loc[finite, label_col])
    provenance = Provenance(
        sources=tuple(str(p) for p in paths),
        transforms=(f"load_csv rows={len(frame)} kept={int(finite.sum())}",),
        dropped_nonfinite=dropped,
        duplicate_rows=duplicates,
        dropped_null_columns=tuple(null_cols),
    )
    ds = Dataset(
        X=values[finite],
        y=y,
        feature_names=tuple(numeric.columns),
        class_names=class_names,
        provenance=provenance,
        excluded=tuple(schema.excluded),
    )
    logger.info("Loaded %d rows × %d features, %d classes from %d file(s)",
                len(ds), ds.n_features, ds.n_classes, len(paths))
    return ds


def drop_excluded(ds: Dataset, excluded: Optional[Sequence[str]] = None) -> Dataset:
    """Remove the URG-flag and identification columns (or the given list)."""
    excluded = list(ds.excluded if excluded is None else excluded)
    present = [c for c in excluded if c in ds.feature_names]
    absent = [c for c in excluded if c not in ds.feature_names]
    if absent:
        logger.debug("drop_excluded: already absent: %s", ", ".join(absent))
    if not present:
        return ds
    keep = [i for i, name in enumerate(ds.feature_names) if name not in present]
    logger.info("drop_excluded: removed %s", ", ".join(present))
    return ds.with_matrix(ds.X[:, keep], [ds.feature_names[i] for i in keep],
                          f"drop_excluded {','.join(present)}")


# ══════════════════════════════════════════════════════════
#  Splitting
# ══════════════════════════════════════════════════════════


def allocate_counts(n: int, fractions: Sequence[float]) -> List[int]:
    """
    Largest-remainder allocation of n rows over fractions.

    Leftover rows go to the largest fractional parts; ties favour the
    earlier part (train, then validation, then test).
    """
    quotas = [n * f for f in fractions]
    counts = [int(np.floor(q)) for q in quotas]
    remainders = [q - c for q, c in zip(quotas, counts)]
    order = sorted(range(len(fractions)), key=lambda i: (-remainders[i], i))
    for i in order[: n - sum(counts)]:
        counts[i] += 1
    return counts


def _check_fractions(fractions: Sequence[float]) -> None:
    if any(f < 0 for f in fractions) or abs(sum(fractions) - 1.0) > 1e-9:
        raise ValueError(f"split fractions must be non-negative and sum to 1, got {tuple(fractions)}")


def stratified_split(ds: Dataset, fractions: Sequence[float] = (0.50, 0.25, 0.25),
                     seed: int = 0) -> Tuple[Dataset, ...]:
    """
    Per-class seeded shuffle, then contiguous cuts.

    Returns:
        One Dataset per fraction (train, validation, test for the default).

    Raises:
        StratificationError: a registered class has no rows.
    """
    _check_fractions(fractions)
    counts = ds.class_counts()
    empty = [ds.class_names[c] for c in range(ds.n_classes) if counts[c] == 0]
    if empty:
        raise StratificationError(f"class(es) with no rows: {', '.join(empty)}")

    rng = np.random.default_rng(seed)
    parts: List[List[np.ndarray]] = [[] for _ in fractions]
    for c in range(ds.n_classes):
        members = rng.permutation(np.flatnonzero(ds.y == c))
        start = 0
        for i, size in enumerate(allocate_counts(len(members), fractions)):
            parts[i].append(members[start:start + size])
            start += size

    names = ["train", "validation", "test"] + [f"part{i}" for i in range(3, len(fractions))]
    splits = []
    for i, chunks in enumerate(parts):
        idx = np.sort(np.concatenate(chunks)) if chunks else np.empty(0, dtype=np.int64)
        splits.append(ds.subset(idx, f"stratified_split seed={seed} part={names[i]}"))
    logger.info("Split %d rows → %s", len(ds), " / ".join(str(len(s)) for s in splits))
    return tuple(splits)


def split_manifest(splits: Sequence[Dataset], fractions: Sequence[float], seed: int) -> dict:
    names = ["train", "validation", "test"] + [f"part{i}" for i in range(3, len(splits))]
    class_names = splits[0].class_names
    return {
        "seed": seed,
        "fractions": list(fractions),
        "classes": list(class_names),
        "counts": {
            name: {cls: int(n) for cls, n in zip(class_names, part.class_counts())}
            for name, part in zip(names, splits)
        },
        "totals": {name: len(part) for name, part in zip(names, splits)},
    }


def write_split_manifest(splits: Sequence[Dataset], fractions: Sequence[float],
                         seed: int, target: Union[str, Path]) -> Path:
    return write_json(split_manifest(splits, fractions, seed), target)


def stratified_kfold(ds: Dataset, k: int = 5, seed: int = 0) -> List[Tuple[np.ndarray, np.ndarray]]:
    """
    Stratified k-fold (train, validate) index pairs.

    Each class is shuffled and dealt round-robin across folds, continuing
    the rotation from the previous class so fold sizes stay balanced too.

    Raises:
        StratificationError: a class present in ds has fewer than k rows
            (classes with no rows at all are ignored).
    """
    if k < 2:
        raise ValueError("k must be at least 2")
    counts = ds.class_counts()
    small = [f"{ds.class_names[c]} ({counts[c]})" for c in range(ds.n_classes) if 0 < counts[c] < k]
    if small:
        raise StratificationError(f"classes smaller than k={k}: {', '.join(small)}")

    rng = np.random.default_rng(seed)
    fold_of = np.empty(len(ds), dtype=np.int64)
    offset = 0
    for c in range(ds.n_classes):
        members = rng.permutation(np.flatnonzero(ds.y == c))
        fold_of[members] = (offset + np.arange(len(members))) % k
        offset += len(members)

    all_idx = np.arange(len(ds))
    return [(all_idx[fold_of != f], all_idx[fold_of == f]) for f in range(k)]


# ══════════════════════════════════════════════════════════
#  Z-score scaling
# ══════════════════════════════════════════════════════════


@dataclass(frozen=True)
class Scaler:
    """
    Column means and population standard deviations of a training matrix.

    Zero-variance columns store std 1 and are mapped to 0 on apply.
    """
    mean: np.ndarray
    std: np.ndarray
    constant: np.ndarray

    def apply(self, X: np.ndarray) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        if X.ndim != 2 or X.shape[1] != self.mean.shape[0]:
            raise DimensionError(f"scaler fitted on {self.mean.shape[0]} columns, got shape {X.shape}")
        Z = (X - self.mean) / self.std
        Z[:, self.constant] = 0.0
        return Z

    def invert(self, Z: np.ndarray) -> np.ndarray:
        return np.asarray(Z, dtype=float) * self.std + self.mean


def zscore_fit(train: Union[Dataset, np.ndarray]) -> Scaler:
    X = train.X if isinstance(train, Dataset) else np.asarray(train, dtype=float)
    if X.ndim != 2 or X.shape[0] == 0:
        raise DimensionError("cannot fit a scaler on an empty matrix")
    mean = X.mean(axis=0)
    std = X.std(axis=0)
    constant = std == 0
    return Scaler(mean=mean, std=np.where(constant, 1.0, std), constant=constant)


def zscore_apply(scaler: Scaler, ds: Dataset) -> Dataset:
    return ds.with_matrix(scaler.apply(ds.X), ds.feature_names, "zscore")
