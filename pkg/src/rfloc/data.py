"""Dataset container, CSV ingestion, normalization, splits and folds.

A sample is an 8-value received-power fingerprint (4 receivers x 2
polarizations, dBm) with an optional 2-D position label in meters.
Canonical CSV columns are r1x, r1y, r2x, r2y, r3x, r3y, r4x, r4y and,
when labeled, x and y.
"""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, CsvParseError, DataError, SchemaError
from .nn import Rng

log = logging.getLogger(__name__)

FEATURE_COLUMNS = ("r1x", "r1y", "r2x", "r2y", "r3x", "r3y", "r4x", "r4y")
LABEL_COLUMNS = ("x", "y")
NUM_FEATURES = len(FEATURE_COLUMNS)
STD_FLOOR = 1e-8


@dataclass
class Dataset:
    """Immutable-by-convention bundle of fingerprints and optional labels."""

    name: str
    features: np.ndarray  # (n, 8) float64
    labels: np.ndarray | None = None  # (n, 2) float64 or None

    def __post_init__(self):
        self.features = np.ascontiguousarray(self.features, dtype=np.float64)
        if self.features.ndim != 2 or self.features.shape[1] != NUM_FEATURES:
            raise DataError(
                f"dataset {self.name!r}: features must be (n, {NUM_FEATURES}), "
                f"got {self.features.shape}"
            )
        if len(self.features) == 0:
            raise DataError(f"dataset {self.name!r} is empty")
        if not np.all(np.isfinite(self.features)):
            raise DataError(f"dataset {self.name!r} contains non-finite features")
        if self.labels is not None:
            self.labels = np.ascontiguousarray(self.labels, dtype=np.float64)
            if self.labels.shape != (len(self.features), 2):
                raise DataError(
                    f"dataset {self.name!r}: labels must be (n, 2), got {self.labels.shape}"
                )
            if not np.all(np.isfinite(self.labels)):
                raise DataError(f"dataset {self.name!r} contains non-finite labels")

    @property
    def labeled(self) -> bool:
        return self.labels is not None

    def __len__(self) -> int:
        return len(self.features)

    def subset(self, indices, name: str | None = None) -> "Dataset":
        idx = np.asarray(indices)
        return Dataset(
            name if name is not None else self.name,
            self.features[idx],
            self.labels[idx] if self.labeled else None,
        )

    def without_labels(self) -> "Dataset":
        return Dataset(self.name, self.features, None)


# ---------------------------------------------------------------- CSV I/O

def _resolve_columns(header: list[str], mapping: dict | None):
    """Map canonical column names to indices in the file header.

    mapping overrides canonical -> actual column name; an explicit None
    drops a label column (features cannot be dropped).
    """
    mapping = mapping or {}
    positions = {h: i for i, h in enumerate(header)}
    feat_idx = []
    for col in FEATURE_COLUMNS:
        actual = mapping.get(col, col)
        if actual is None:
            raise SchemaError(f"feature column {col!r} cannot be dropped")
        if actual not in positions:
            raise SchemaError(f"missing required column {actual!r} (for {col!r})")
        feat_idx.append(positions[actual])
    label_idx = []
    for col in LABEL_COLUMNS:
        actual = mapping.get(col, col)
        if actual is not None and actual in positions:
            label_idx.append(positions[actual])
    labeled = len(label_idx) == len(LABEL_COLUMNS)
    return feat_idx, label_idx if labeled else None


def load_csv(path, mapping: dict | None = None, name: str | None = None) -> Dataset:
    """Load a fingerprint CSV.

    Rows with any non-finite value are dropped with a logged count;
    non-numeric cells raise CsvParseError with their line number.
    """
    name = name or str(path)
    try:
        fh = open(path, newline="")
    except OSError as e:
        raise DataError(f"cannot open {path}: {e}") from e
    with fh:
        reader = csv.reader(fh)
        header = None
        feats, labels = [], []
        dropped = 0
        for row in reader:
            if not row or (row[0].startswith("#")):
                continue
            if header is None:
                header = [h.strip() for h in row]
                feat_idx, label_idx = _resolve_columns(header, mapping)
                continue
            values = []
            for i in feat_idx + (label_idx or []):
                if i >= len(row):
                    raise CsvParseError(f"{path}: line {reader.line_num}: too few columns")
                cell = row[i].strip()
                try:
                    values.append(float(cell))
                except ValueError:
                    raise CsvParseError(
                        f"{path}: line {reader.line_num}, column {header[i]!r}: "
                        f"not a number: {cell!r}"
                    ) from None
            if not all(np.isfinite(v) for v in values):
                dropped += 1
                continue
            feats.append(values[:NUM_FEATURES])
            if label_idx:
                labels.append(values[NUM_FEATURES:])
        if header is None:
            raise DataError(f"{path}: no header row")
    if dropped:
        log.warning("%s: dropped %d rows with non-finite values", path, dropped)
    if not feats:
        raise DataError(f"{path}: no usable data rows")
    return Dataset(
        name,
        np.array(feats, dtype=np.float64),
        np.array(labels, dtype=np.float64) if label_idx else None,
    )


def write_csv(dataset: Dataset, path, run_id: str | None = None) -> None:
    """Write a dataset using shortest round-trip float representations."""
    with open(path, "w", newline="") as fh:
        if run_id:
            fh.write(f"# run: {run_id}\n")
        writer = csv.writer(fh)
        header = list(FEATURE_COLUMNS) + (list(LABEL_COLUMNS) if dataset.labeled else [])
        writer.writerow(header)
        for i in range(len(dataset)):
            row = [repr(float(v)) for v in dataset.features[i]]
            if dataset.labeled:
                row += [repr(float(v)) for v in dataset.labels[i]]
            writer.writerow(row)


# ---------------------------------------------------------------- normalization

@dataclass
class NormStats:
    """Per-feature z-score statistics fitted on source training data."""

    mean: np.ndarray  # (8,)
    std: np.ndarray  # (8,), floored at STD_FLOOR

    def __post_init__(self):
        self.mean = np.ascontiguousarray(self.mean, dtype=np.float64)
        self.std = np.ascontiguousarray(self.std, dtype=np.float64)
        if self.mean.shape != (NUM_FEATURES,) or self.std.shape != (NUM_FEATURES,):
            raise ConfigError("normalization stats must have one entry per feature")
        if not (np.all(np.isfinite(self.mean)) and np.all(np.isfinite(self.std))):
            raise ConfigError("normalization stats must be finite")
        if np.any(self.std <= 0.0):
            raise ConfigError("normalization std must be positive")


def fit_normalizer(dataset: Dataset) -> NormStats:
    mean = dataset.features.mean(axis=0)
    std = dataset.features.std(axis=0)
    if np.any(std < STD_FLOOR):
        log.warning(
            "%s: constant feature column(s) %s; std floored at %g",
            dataset.name,
            np.flatnonzero(std < STD_FLOOR).tolist(),
            STD_FLOOR,
        )
        std = np.maximum(std, STD_FLOOR)
    return NormStats(mean, std)


def normalize_features(features: np.ndarray, stats: NormStats) -> np.ndarray:
    return (features - stats.mean) / stats.std


def apply_normalizer(dataset: Dataset, stats: NormStats) -> Dataset:
    return Dataset(dataset.name, normalize_features(dataset.features, stats), dataset.labels)


# ---------------------------------------------------------------- splits

def split_train_test(dataset: Dataset, ratio: float = 0.8, seed: int = 0):
    """Seeded shuffle, then floor(n * ratio) samples for training."""
    if not 0.0 < ratio < 1.0:
        raise ConfigError(f"split ratio must lie in (0, 1), got {ratio}")
    n = len(dataset)
    perm = Rng(seed).stream("split").permutation(n)
    n_train = int(n * ratio)
    if n_train == 0 or n_train == n:
        raise DataError(f"split of {n} samples at ratio {ratio} leaves an empty side")
    train = dataset.subset(perm[:n_train], f"{dataset.name}-train")
    test = dataset.subset(perm[n_train:], f"{dataset.name}-test")
    return train, test


@dataclass
class FoldAssignment:
    """Round-robin assignment of shuffled samples to folds."""

    fold_of_sample: np.ndarray  # (n,) int
    n_folds: int

    def val_indices(self, fold: int) -> np.ndarray:
        self._check(fold)
        return np.flatnonzero(self.fold_of_sample == fold)

    def train_indices(self, fold: int) -> np.ndarray:
        self._check(fold)
        return np.flatnonzero(self.fold_of_sample != fold)

    def _check(self, fold: int) -> None:
        if not 0 <= fold < self.n_folds:
            raise ConfigError(f"fold {fold} out of range [0, {self.n_folds})")


def make_folds(dataset: Dataset, n_folds: int = 5, seed: int = 0) -> FoldAssignment:
    n = len(dataset)
    if n_folds < 2:
        raise ConfigError(f"need at least 2 folds, got {n_folds}")
    if n < n_folds:
        raise DataError(f"cannot split {n} samples into {n_folds} folds")
    perm = Rng(seed).stream("folds").permutation(n)
    fold_of = np.empty(n, dtype=np.int64)
    fold_of[perm] = np.arange(n) % n_folds
    return FoldAssignment(fold_of, n_folds)
