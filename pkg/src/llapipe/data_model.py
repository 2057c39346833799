"""Tabular dataset representation, CSV ingestion, splitting, and meta-features.

A dataset is a tuple of typed feature columns plus a categorical target.
Numeric columns store float64 with NaN marking missing cells; categorical
columns store python strings with None marking missing cells. Datasets are
immutable after construction, so operators and concurrent readers can share
them freely.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .errors import (
    DuplicateColumnName,
    EmptyDataset,
    MissingTargetColumn,
    SplitTooSmall,
)
from . import errors

NUMERIC = "numeric"
CATEGORICAL = "categorical"

STATE_DIM = 12

# Index layout of the meta-feature (state) vector.
F_LOG10_ROWS = 0
F_N_COLS = 1
F_FRAC_MISSING = 2
F_FRAC_CATEGORICAL = 3
F_MEAN_ABS_SKEW = 4
F_MAX_ABS_SKEW = 5
F_FRAC_OUTLIER_CELLS = 6
F_MEAN_ABS_CORRELATION = 7
F_N_CLASSES = 8
F_MAJORITY_FRACTION = 9
F_FRAC_ZERO_VARIANCE = 10
F_PIPELINE_LENGTH = 11

META_FEATURE_NAMES = (
    "log10_n_rows",
    "n_cols",
    "frac_missing",
    "frac_categorical",
    "mean_abs_skewness",
    "max_abs_skewness",
    "frac_outlier_cells",
    "mean_abs_pairwise_correlation",
    "n_classes",
    "majority_class_fraction",
    "frac_zero_variance_cols",
    "pipeline_length_so_far",
)


def _frozen(arr: np.ndarray) -> np.ndarray:
    arr.flags.writeable = False
    return arr


@dataclass(frozen=True)
class Column:
    """One feature column: numeric (float64, NaN=missing) or categorical
    (object array of str, None=missing)."""

    name: str
    kind: str
    values: np.ndarray

    def __post_init__(self):
        if self.kind not in (NUMERIC, CATEGORICAL):
            raise ValueError(f"unknown column kind {self.kind!r}")
        if self.kind == NUMERIC:
            vals = _frozen(np.asarray(self.values, dtype=np.float64))
        else:
            vals = _frozen(np.asarray(self.values, dtype=object))
        object.__setattr__(self, "values", vals)

    @property
    def missing_mask(self) -> np.ndarray:
        if self.kind == NUMERIC:
            return np.isnan(self.values)
        return np.array([v is None for v in self.values], dtype=bool)

    def non_missing(self) -> np.ndarray:
        return self.values[~self.missing_mask]


@dataclass(frozen=True)
class Dataset:
    """Immutable tabular dataset: feature columns plus a categorical target."""

    columns: tuple[Column, ...]
    target: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "columns", tuple(self.columns))
        target = _frozen(np.asarray(self.target, dtype=object))
        object.__setattr__(self, "target", target)
        n = len(target)
        names = [c.name for c in self.columns]
        if len(set(names)) != len(names):
            raise DuplicateColumnName("feature column names must be unique")
        for c in self.columns:
            if len(c.values) != n:
                raise ValueError(
                    f"column {c.name!r} has {len(c.values)} rows, expected {n}"
                )
        if any(v is None for v in target):
            raise errors.TargetHasMissing("target column contains missing values")

    @property
    def n_rows(self) -> int:
        return len(self.target)

    @property
    def n_cols(self) -> int:
        return len(self.columns)

    @property
    def column_names(self) -> tuple[str, ...]:
        return tuple(c.name for c in self.columns)

    def column(self, name: str) -> Column:
        for c in self.columns:
            if c.name == name:
                return c
        raise KeyError(name)

    def numeric_columns(self) -> tuple[Column, ...]:
        return tuple(c for c in self.columns if c.kind == NUMERIC)

    def categorical_columns(self) -> tuple[Column, ...]:
        return tuple(c for c in self.columns if c.kind == CATEGORICAL)

    def has_missing(self) -> bool:
        return any(c.missing_mask.any() for c in self.columns)

    def with_columns(self, columns: Iterable[Column]) -> "Dataset":
        return Dataset(tuple(columns), self.target)

    def take(self, indices: np.ndarray) -> "Dataset":
        idx = np.asarray(indices, dtype=np.intp)
        cols = tuple(
            Column(c.name, c.kind, c.values[idx].copy()) for c in self.columns
        )
        return Dataset(cols, self.target[idx].copy())


@dataclass(frozen=True)
class SplitSpec:
    """Train/validation/test fractions plus the shuffle seed."""

    train_fraction: float = 0.6
    val_fraction: float = 0.2
    test_fraction: float = 0.2
    seed: int = 0

    def __post_init__(self):
        fracs = (self.train_fraction, self.val_fraction, self.test_fraction)
        if any(f <= 0 for f in fracs):
            raise ValueError("split fractions must be positive")
        if abs(sum(fracs) - 1.0) > 1e-9:
            raise ValueError("split fractions must sum to 1")


def _parse_numeric(text: str) -> float | None:
    """Return the finite float value of `text`, or None when it is not a
    plain number (inf/nan spellings count as non-numeric)."""
    try:
        value = float(text)
    except ValueError:
        return None
    return value if math.isfinite(value) else None


def load_csv(path: str, target_column: str) -> Dataset:
    """Load an RFC-4180-style CSV with a header row.

    Empty cells become missing. A column is numeric when every non-empty cell
    parses as a finite real number; anything else is categorical. The target
    column is kept as categorical labels and may not contain empty cells.
    """
    try:
        fh = open(path, newline="", encoding="utf-8")
    except FileNotFoundError:
        raise
    with fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise EmptyDataset(f"{path}: no header row")
        rows = [row for row in reader]
    if len(set(header)) != len(header):
        raise DuplicateColumnName(f"{path}: duplicate column names in header")
    if target_column not in header:
        raise MissingTargetColumn(
            f"{path}: target column {target_column!r} not in header"
        )
    if not rows:
        raise EmptyDataset(f"{path}: no data rows")

    n_cols = len(header)
    cells: list[list[str]] = []
    for row in rows:
        padded = list(row[:n_cols]) + [""] * (n_cols - len(row))
        cells.append(padded)

    target_idx = header.index(target_column)
    target_raw = [row[target_idx].strip() for row in cells]
    if any(v == "" for v in target_raw):
        raise errors.TargetHasMissing(
            f"{path}: target column {target_column!r} has empty cells"
        )
    target = np.array(target_raw, dtype=object)

    columns = []
    for j, name in enumerate(header):
        if j == target_idx:
            continue
        raw = [row[j].strip() for row in cells]
        parsed = [_parse_numeric(v) if v != "" else None for v in raw]
        numeric = all(p is not None for v, p in zip(raw, parsed) if v != "")
        if numeric:
            vals = np.array(
                [p if p is not None else np.nan for p in parsed], dtype=np.float64
            )
            columns.append(Column(name, NUMERIC, vals))
        else:
            vals = np.array([v if v != "" else None for v in raw], dtype=object)
            columns.append(Column(name, CATEGORICAL, vals))
    return Dataset(tuple(columns), target)


def override_column_kinds(
    d: Dataset,
    categorical: Sequence[str] = (),
    numeric: Sequence[str] = (),
) -> Dataset:
    """Force the kind of named columns, overriding the parse-based inference.

    Numeric -> categorical keeps the decimal text of each cell; categorical ->
    numeric parses cells, turning unparseable ones into missing.
    """
    cat = set(categorical)
    num = set(numeric)
    if cat & num:
        raise ValueError("a column cannot be forced both categorical and numeric")
    out = []
    for c in d.columns:
        if c.name in cat and c.kind == NUMERIC:
            vals = np.array(
                [None if np.isnan(v) else repr(float(v)) for v in c.values],
                dtype=object,
            )
            out.append(Column(c.name, CATEGORICAL, vals))
        elif c.name in num and c.kind == CATEGORICAL:
            parsed = [
                _parse_numeric(v) if v is not None else None for v in c.values
            ]
            vals = np.array(
                [p if p is not None else np.nan for p in parsed], dtype=np.float64
            )
            out.append(Column(c.name, NUMERIC, vals))
        else:
            out.append(c)
    return d.with_columns(out)


def _allocate(n: int, fractions: Sequence[float]) -> list[int]:
    """Largest-remainder allocation of n items over fractions (sums to n)."""
    raw = [n * f for f in fractions]
    counts = [int(math.floor(r)) for r in raw]
    remainder = n - sum(counts)
    order = sorted(range(len(fractions)), key=lambda i: (-(raw[i] - counts[i]), i))
    for i in order[:remainder]:
        counts[i] += 1
    return counts


def split(d: Dataset, spec: SplitSpec) -> tuple[Dataset, Dataset, Dataset]:
    """Seeded, class-stratified row partition into (train, val, test)."""
    rng = np.random.default_rng(spec.seed)
    fracs = (spec.train_fraction, spec.val_fraction, spec.test_fraction)
    buckets: list[list[int]] = [[], [], []]
    for cls in sorted(set(d.target.tolist())):
        idx = np.flatnonzero(d.target == cls)
        rng.shuffle(idx)
        counts = _allocate(len(idx), fracs)
        start = 0
        for b, cnt in enumerate(counts):
            buckets[b].extend(idx[start : start + cnt].tolist())
            start += cnt
    parts = [np.array(sorted(b), dtype=np.intp) for b in buckets]
    if any(len(p) == 0 for p in parts):
        raise SplitTooSmall("one of the splits would be empty")
    train = d.take(parts[0])
    if len(set(train.target.tolist())) != len(set(d.target.tolist())):
        raise SplitTooSmall("training split would lose a class")
    return train, d.take(parts[1]), d.take(parts[2])


def _skewness(values: np.ndarray) -> float:
    """Fisher-Pearson moment skewness g1; 0 for < 3 values or zero variance.

    Values are sorted before the moment sums so the result is bit-identical
    under row permutations.
    """
    v = np.sort(values[~np.isnan(values)])
    if len(v) < 3:
        return 0.0
    m = v.mean()
    m2 = ((v - m) ** 2).mean()
    if m2 <= 0:
        return 0.0
    m3 = ((v - m) ** 3).mean()
    return float(m3 / m2**1.5)


def _outlier_count(values: np.ndarray) -> tuple[int, int]:
    """(outliers, non-missing count) under the 1.5*IQR fence rule."""
    v = values[~np.isnan(values)]
    if len(v) == 0:
        return 0, 0
    q1, q3 = np.percentile(v, [25.0, 75.0])
    iqr = q3 - q1
    lo, hi = q1 - 1.5 * iqr, q3 + 1.5 * iqr
    return int(((v < lo) | (v > hi)).sum()), len(v)


def _mean_abs_correlation(d: Dataset) -> float:
    numeric = d.numeric_columns()
    if len(numeric) < 2:
        return 0.0
    # Mean-impute per column so the Pearson matrix is defined with missing
    # cells present; zero-variance pairs contribute 0.
    mat = np.empty((d.n_rows, len(numeric)), dtype=np.float64)
    for j, c in enumerate(numeric):
        col = c.values.copy()
        mask = np.isnan(col)
        if mask.all():
            col[:] = 0.0
        elif mask.any():
            col[mask] = col[~mask].mean()
        mat[:, j] = col
    with np.errstate(invalid="ignore", divide="ignore"):
        corr = np.corrcoef(mat, rowvar=False)
    corr = np.nan_to_num(corr, nan=0.0)
    iu = np.triu_indices(len(numeric), k=1)
    return float(np.abs(corr[iu]).mean())


def _distinct_non_missing(c: Column) -> int:
    if c.kind == NUMERIC:
        return len(np.unique(c.non_missing()))
    return len(set(c.non_missing().tolist()))


def compute_meta_features(d: Dataset, pipeline_len: int) -> np.ndarray:
    """Deterministic 12-dim statistical summary of a dataset.

    Every entry is finite; fraction entries lie in [0, 1]. The vector is a
    pure function of the dataset content and the pipeline length, and is
    invariant to row order.
    """
    if d.n_rows == 0:
        raise EmptyDataset("cannot summarize an empty dataset")
    vec = np.zeros(STATE_DIM, dtype=np.float64)
    n_cols = d.n_cols
    vec[F_LOG10_ROWS] = math.log10(d.n_rows)
    vec[F_N_COLS] = float(n_cols)
    if n_cols > 0:
        total_cells = d.n_rows * n_cols
        missing = sum(int(c.missing_mask.sum()) for c in d.columns)
        vec[F_FRAC_MISSING] = missing / total_cells
        vec[F_FRAC_CATEGORICAL] = len(d.categorical_columns()) / n_cols
        vec[F_FRAC_ZERO_VARIANCE] = (
            sum(1 for c in d.columns if _distinct_non_missing(c) <= 1) / n_cols
        )
    skews = [abs(_skewness(c.values)) for c in d.numeric_columns()]
    if skews:
        vec[F_MEAN_ABS_SKEW] = float(np.mean(skews))
        vec[F_MAX_ABS_SKEW] = float(np.max(skews))
    outliers = 0
    numeric_cells = 0
    for c in d.numeric_columns():
        o, n = _outlier_count(c.values)
        outliers += o
        numeric_cells += n
    if numeric_cells > 0:
        vec[F_FRAC_OUTLIER_CELLS] = outliers / numeric_cells
    vec[F_MEAN_ABS_CORRELATION] = _mean_abs_correlation(d)
    classes, counts = np.unique(d.target, return_counts=True)
    vec[F_N_CLASSES] = float(len(classes))
    vec[F_MAJORITY_FRACTION] = float(counts.max() / d.n_rows)
    vec[F_PIPELINE_LENGTH] = float(pipeline_len)
    return vec


@dataclass(frozen=True)
class DatasetSummary:
    """Human-readable statistics block used for advisor prompts."""

    n_rows: int
    n_cols: int
    has_missing: bool
    n_numeric: int
    n_categorical: int
    skewed_columns: tuple[str, ...]
    outlier_columns: tuple[tuple[str, float], ...]  # (name, percent of cells)


def summarize_dataset(d: Dataset, skew_threshold: float = 1.0) -> DatasetSummary:
    skewed = tuple(
        c.name for c in d.numeric_columns() if abs(_skewness(c.values)) > skew_threshold
    )
    outlier_cols = []
    for c in d.numeric_columns():
        o, n = _outlier_count(c.values)
        if n > 0 and o > 0:
            outlier_cols.append((c.name, 100.0 * o / n))
    return DatasetSummary(
        n_rows=d.n_rows,
        n_cols=d.n_cols,
        has_missing=d.has_missing(),
        n_numeric=len(d.numeric_columns()),
        n_categorical=len(d.categorical_columns()),
        skewed_columns=skewed,
        outlier_columns=tuple(outlier_cols),
    )
