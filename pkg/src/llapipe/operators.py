"""The 26-operator preparation vocabulary and its apply semantics.

Every operator fits on the dataset it receives and transforms that same
dataset (leakage control belongs to the evaluator, not here). All operators
are pure functions of (dataset, seed); only RandomTreesEmbedding actually
consumes the seed.

Structurally impossible applications (e.g. PCA with missing cells) raise
InapplicableOperator, which callers treat as a penalized no-op. Operators
whose domain is simply absent (e.g. an imputer on complete data) return the
dataset unchanged.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .data_model import CATEGORICAL, NUMERIC, Column, Dataset
from .errors import DegenerateOutput, InapplicableOperator

MAX_PIPELINE_LEN = 9

# Feature-expanding operators refuse to grow past this column count so that
# repeated applications stay tractable.
MAX_OUTPUT_COLUMNS = 256

BLANK_ID = -1

IMPUTER = "Imputer"
ENCODER = "Encoder"
FEATURE_PREPROCESSING = "FeaturePreprocessing"
FEATURE_ENGINEERING = "FeatureEngineering"
FEATURE_SELECTION = "FeatureSelection"
BLANK = "Blank"


@dataclass(frozen=True)
class OperatorSpec:
    id: int
    name: str
    type: str
    # True when the output depends on the seed argument.
    deterministic_given_seed: bool = False


REGISTRY: tuple[OperatorSpec, ...] = (
    OperatorSpec(0, "ImputerCatPrim", IMPUTER),
    OperatorSpec(1, "ImputerMean", IMPUTER),
    OperatorSpec(2, "ImputerMedian", IMPUTER),
    OperatorSpec(3, "ImputerNum", IMPUTER),
    OperatorSpec(4, "LabelEncoder", ENCODER),
    OperatorSpec(5, "OneHotEncoder", ENCODER),
    OperatorSpec(6, "MinMaxScaler", FEATURE_PREPROCESSING),
    OperatorSpec(7, "MaxAbsScaler", FEATURE_PREPROCESSING),
    OperatorSpec(8, "RobustScaler", FEATURE_PREPROCESSING),
    OperatorSpec(9, "StandardScaler", FEATURE_PREPROCESSING),
    OperatorSpec(10, "QuantileTransformer", FEATURE_PREPROCESSING),
    OperatorSpec(11, "LogTransformer", FEATURE_PREPROCESSING),
    OperatorSpec(12, "PowerTransformer", FEATURE_PREPROCESSING),
    OperatorSpec(13, "Normalizer", FEATURE_PREPROCESSING),
    OperatorSpec(14, "KBinsDiscretizerOrdinal", FEATURE_PREPROCESSING),
    OperatorSpec(15, "PolynomialFeatures", FEATURE_ENGINEERING),
    OperatorSpec(16, "InteractionFeatures", FEATURE_ENGINEERING),
    OperatorSpec(17, "PCA_AUTO", FEATURE_ENGINEERING),
    OperatorSpec(18, "PCA_LAPACK", FEATURE_ENGINEERING),
    OperatorSpec(19, "PCA_ARPACK", FEATURE_ENGINEERING),
    OperatorSpec(20, "IncrementalPCA", FEATURE_ENGINEERING),
    OperatorSpec(21, "KernelPCA", FEATURE_ENGINEERING),
    OperatorSpec(22, "TruncatedSVD", FEATURE_ENGINEERING),
    OperatorSpec(23, "RandomTreesEmbedding", FEATURE_ENGINEERING, True),
    OperatorSpec(24, "VarianceThreshold", FEATURE_SELECTION),
    OperatorSpec(BLANK_ID, "BlankOperation", BLANK),
)

BY_ID = {spec.id: spec for spec in REGISTRY}
_BY_NORMALIZED_NAME = {
    "".join(spec.name.split()).casefold(): spec for spec in REGISTRY
}


def operator_name(op_id: int) -> str:
    return BY_ID[op_id].name


def operator_id(name: str) -> int:
    """Resolve an operator name case- and whitespace-insensitively."""
    key = "".join(name.split()).casefold()
    if key not in _BY_NORMALIZED_NAME:
        raise KeyError(name)
    return _BY_NORMALIZED_NAME[key].id


@dataclass(frozen=True)
class Pipeline:
    """Ordered operator sequence, at most MAX_PIPELINE_LEN long."""

    ops: tuple[int, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "ops", tuple(int(o) for o in self.ops))
        if len(self.ops) > MAX_PIPELINE_LEN:
            raise ValueError(f"pipeline longer than {MAX_PIPELINE_LEN}")
        for o in self.ops:
            if o not in BY_ID:
                raise KeyError(f"unknown operator id {o}")

    def __len__(self) -> int:
        return len(self.ops)

    def names(self) -> tuple[str, ...]:
        return tuple(operator_name(o) for o in self.ops)


def _unique_name(existing: set[str], base: str) -> str:
    if base not in existing:
        return base
    k = 2
    while f"{base}_{k}" in existing:
        k += 1
    return f"{base}_{k}"


def _check_width(n_cols: int, op_name: str) -> None:
    if n_cols > MAX_OUTPUT_COLUMNS:
        raise InapplicableOperator(
            f"{op_name} would produce {n_cols} columns (limit {MAX_OUTPUT_COLUMNS})"
        )


def _require_dense_numeric(d: Dataset, op_name: str) -> np.ndarray:
    """Matrix view for operators that need a complete numeric dataset."""
    if d.categorical_columns():
        raise InapplicableOperator(f"{op_name} requires all-numeric columns")
    if d.has_missing():
        raise InapplicableOperator(f"{op_name} requires no missing cells")
    if d.n_cols == 0:
        raise DegenerateOutput(f"{op_name} received zero feature columns")
    return np.column_stack([c.values for c in d.columns])


def _map_numeric(d: Dataset, fn) -> Dataset:
    """Apply fn(values) -> values to each numeric column, keep the rest."""
    out = []
    for c in d.columns:
        if c.kind == NUMERIC:
            out.append(Column(c.name, NUMERIC, fn(c.values)))
        else:
            out.append(c)
    return d.with_columns(out)


# --- imputers ---------------------------------------------------------------


def _mode_categorical(values: np.ndarray) -> str | None:
    present = [v for v in values if v is not None]
    if not present:
        return None
    uniq, counts = np.unique(np.array(present, dtype=object), return_counts=True)
    return str(uniq[np.argmax(counts)])


def _mode_numeric(values: np.ndarray) -> float:
    v = values[~np.isnan(values)]
    if len(v) == 0:
        return 0.0
    uniq, counts = np.unique(v, return_counts=True)
    return float(uniq[np.argmax(counts)])


def _impute_numeric(d: Dataset, stat) -> Dataset:
    def fill(values):
        mask = np.isnan(values)
        if not mask.any():
            return values
        out = values.copy()
        present = values[~mask]
        out[mask] = stat(present) if len(present) else 0.0
        return out

    return _map_numeric(d, fill)


def _apply_imputer_cat_prim(d: Dataset, seed: int) -> Dataset:
    """Most-frequent imputation for categorical columns."""
    out = []
    for c in d.columns:
        if c.kind == CATEGORICAL and c.missing_mask.any():
            mode = _mode_categorical(c.values)
            vals = np.array(
                [mode if v is None else v for v in c.values], dtype=object
            )
            out.append(Column(c.name, CATEGORICAL, vals))
        else:
            out.append(c)
    return d.with_columns(out)


def _apply_imputer_mean(d: Dataset, seed: int) -> Dataset:
    return _impute_numeric(d, lambda v: float(v.mean()))


def _apply_imputer_median(d: Dataset, seed: int) -> Dataset:
    return _impute_numeric(d, lambda v: float(np.median(v)))


def _apply_imputer_num(d: Dataset, seed: int) -> Dataset:
    """Most-frequent imputation for numeric columns."""
    return _impute_numeric(d, lambda v: _mode_numeric(np.asarray(v)))


# --- encoders ---------------------------------------------------------------


def _apply_label_encoder(d: Dataset, seed: int) -> Dataset:
    out = []
    for c in d.columns:
        if c.kind != CATEGORICAL:
            out.append(c)
            continue
        cats = sorted(set(v for v in c.values if v is not None))
        code = {v: float(i) for i, v in enumerate(cats)}
        vals = np.array(
            [code[v] if v is not None else np.nan for v in c.values],
            dtype=np.float64,
        )
        out.append(Column(c.name, NUMERIC, vals))
    return d.with_columns(out)


def _apply_one_hot_encoder(d: Dataset, seed: int) -> Dataset:
    out = []
    names = set(d.column_names)
    for c in d.columns:
        if c.kind != CATEGORICAL:
            out.append(c)
            continue
        names.discard(c.name)
        cats = sorted(set(v for v in c.values if v is not None))
        for cat in cats:
            col_name = _unique_name(names, f"{c.name}={cat}")
            names.add(col_name)
            vals = np.array(
                [1.0 if v == cat else 0.0 for v in c.values], dtype=np.float64
            )
            out.append(Column(col_name, NUMERIC, vals))
    _check_width(len(out), "OneHotEncoder")
    if not out:
        raise DegenerateOutput("OneHotEncoder produced zero feature columns")
    return d.with_columns(out)


# --- feature preprocessing --------------------------------------------------


def _apply_minmax(d: Dataset, seed: int) -> Dataset:
    def scale(values):
        present = values[~np.isnan(values)]
        if len(present) == 0:
            return values
        lo, hi = present.min(), present.max()
        if hi == lo:
            out = values.copy()
            out[~np.isnan(values)] = 0.0
            return out
        return (values - lo) / (hi - lo)

    return _map_numeric(d, scale)


def _apply_maxabs(d: Dataset, seed: int) -> Dataset:
    def scale(values):
        present = values[~np.isnan(values)]
        if len(present) == 0:
            return values
        m = np.abs(present).max()
        return values if m == 0 else values / m

    return _map_numeric(d, scale)


def _apply_robust(d: Dataset, seed: int) -> Dataset:
    def scale(values):
        present = values[~np.isnan(values)]
        if len(present) == 0:
            return values
        med = np.median(present)
        q1, q3 = np.percentile(present, [25.0, 75.0])
        iqr = q3 - q1
        return (values - med) / iqr if iqr > 0 else values - med

    return _map_numeric(d, scale)


def _apply_standard(d: Dataset, seed: int) -> Dataset:
    def scale(values):
        present = values[~np.isnan(values)]
        if len(present) == 0:
            return values
        mean = present.mean()
        std = present.std()
        return (values - mean) / std if std > 0 else values - mean

    return _map_numeric(d, scale)


def _average_ranks(values: np.ndarray) -> np.ndarray:
    """1-based average ranks (ties share the mean of their positions)."""
    order = np.argsort(values, kind="stable")
    ranks = np.empty(len(values), dtype=np.float64)
    sorted_vals = values[order]
    i = 0
    n = len(values)
    while i < n:
        j = i
        while j + 1 < n and sorted_vals[j + 1] == sorted_vals[i]:
            j += 1
        ranks[order[i : j + 1]] = (i + j) / 2.0 + 1.0
        i = j + 1
    return ranks


def _apply_quantile(d: Dataset, seed: int) -> Dataset:
    def transform(values):
        mask = ~np.isnan(values)
        present = values[mask]
        out = values.copy()
        if len(present) == 0:
            return out
        if len(present) == 1:
            out[mask] = 0.0
            return out
        ranks = _average_ranks(present)
        out[mask] = (ranks - 1.0) / (len(present) - 1.0)
        return out

    return _map_numeric(d, transform)


def _apply_log(d: Dataset, seed: int) -> Dataset:
    def transform(values):
        present = values[~np.isnan(values)]
        if len(present) == 0:
            return values
        shift = min(float(present.min()), 0.0)
        return np.log1p(values - shift)

    return _map_numeric(d, transform)


def _yeo_johnson(x: np.ndarray, lam: float) -> np.ndarray:
    out = np.empty_like(x)
    pos = x >= 0
    if abs(lam) > 1e-12:
        out[pos] = ((x[pos] + 1.0) ** lam - 1.0) / lam
    else:
        out[pos] = np.log1p(x[pos])
    neg = ~pos
    if abs(lam - 2.0) > 1e-12:
        out[neg] = -(((-x[neg] + 1.0) ** (2.0 - lam)) - 1.0) / (2.0 - lam)
    else:
        out[neg] = -np.log1p(-x[neg])
    return out


POWER_LAMBDA_GRID = np.linspace(-2.0, 2.0, 41)


def _apply_power(d: Dataset, seed: int) -> Dataset:
    def transform(values):
        mask = ~np.isnan(values)
        present = values[mask]
        if len(present) < 2 or np.all(present == present[0]):
            return values
        const = np.sum(np.sign(present) * np.log1p(np.abs(present)))
        best_lam, best_ll = None, -np.inf
        n = len(present)
        for lam in POWER_LAMBDA_GRID:
            with np.errstate(over="ignore", invalid="ignore"):
                psi = _yeo_johnson(present, float(lam))
            if not np.all(np.isfinite(psi)):
                continue
            var = psi.var()
            if var <= 0:
                continue
            ll = -0.5 * n * np.log(var) + (lam - 1.0) * const
            if ll > best_ll:
                best_ll, best_lam = ll, float(lam)
        if best_lam is None:
            return values
        out = values.copy()
        out[mask] = _yeo_johnson(present, best_lam)
        return out

    return _map_numeric(d, transform)


def _apply_normalizer(d: Dataset, seed: int) -> Dataset:
    numeric = d.numeric_columns()
    if not numeric:
        return d
    mat = np.column_stack([c.values for c in numeric])
    filled = np.nan_to_num(mat, nan=0.0)
    # max-scaled norm so rows of extreme magnitude neither underflow nor
    # overflow; zero rows stay zero
    absmax = np.abs(filled).max(axis=1)
    safe = np.where(absmax > 0, absmax, 1.0)
    unit_norms = np.sqrt(((filled / safe[:, None]) ** 2).sum(axis=1))
    unit_norms = np.where(unit_norms > 0, unit_norms, 1.0)
    scaled = mat / safe[:, None] / unit_norms[:, None]
    out = []
    j = 0
    for c in d.columns:
        if c.kind == NUMERIC:
            out.append(Column(c.name, NUMERIC, scaled[:, j].copy()))
            j += 1
        else:
            out.append(c)
    return d.with_columns(out)


def _apply_kbins(d: Dataset, seed: int) -> Dataset:
    def transform(values):
        mask = ~np.isnan(values)
        present = values[mask]
        out = values.copy()
        if len(present) == 0:
            return out
        edges = np.unique(np.percentile(present, [20.0, 40.0, 60.0, 80.0]))
        out[mask] = np.searchsorted(edges, present, side="right").astype(np.float64)
        return out

    return _map_numeric(d, transform)


# --- feature engineering ----------------------------------------------------


def _append_products(d: Dataset, include_squares: bool, op_name: str) -> Dataset:
    numeric = d.numeric_columns()
    k = len(numeric)
    if k == 0:
        return d
    n_new = k * (k + 1) // 2 if include_squares else k * (k - 1) // 2
    _check_width(d.n_cols + n_new, op_name)
    out = list(d.columns)
    names = set(d.column_names)
    for i in range(k):
        start = i if include_squares else i + 1
        for j in range(start, k):
            a, b = numeric[i], numeric[j]
            base = f"{a.name}^2" if i == j else f"{a.name}*{b.name}"
            name = _unique_name(names, base)
            names.add(name)
            out.append(Column(name, NUMERIC, a.values * b.values))
    return d.with_columns(out)


def _apply_polynomial(d: Dataset, seed: int) -> Dataset:
    return _append_products(d, include_squares=True, op_name="PolynomialFeatures")


def _apply_interactions(d: Dataset, seed: int) -> Dataset:
    return _append_products(d, include_squares=False, op_name="InteractionFeatures")


def _svd_flip(components: np.ndarray) -> np.ndarray:
    """Fix the sign of each component so its largest-|.| entry is positive."""
    flipped = components.copy()
    for i in range(flipped.shape[0]):
        j = int(np.argmax(np.abs(flipped[i])))
        if flipped[i, j] < 0:
            flipped[i] = -flipped[i]
    return flipped


def pca_fit(x: np.ndarray, variance_target: float = 0.95):
    """Centered full-SVD PCA keeping the fewest components reaching the
    variance target. Returns (components, scores)."""
    mean = x.mean(axis=0)
    centered = x - mean
    u, s, vt = np.linalg.svd(centered, full_matrices=False)
    var = s**2
    total = var.sum()
    if total <= 0:
        m = 1
    else:
        ratios = np.cumsum(var) / total
        m = int(np.searchsorted(ratios, variance_target - 1e-12) + 1)
        m = min(m, x.shape[1])
    components = _svd_flip(vt[:m])
    return components, centered @ components.T


def _pca_dataset(d: Dataset, op_name: str) -> Dataset:
    x = _require_dense_numeric(d, op_name)
    components, scores = pca_fit(x)
    cols = tuple(
        Column(f"pc{i + 1}", NUMERIC, scores[:, i].copy())
        for i in range(scores.shape[1])
    )
    return d.with_columns(cols)


def _apply_pca(d: Dataset, seed: int) -> Dataset:
    return _pca_dataset(d, "PCA")


def _apply_kernel_pca(d: Dataset, seed: int) -> Dataset:
    x = _require_dense_numeric(d, "KernelPCA")
    gamma = 1.0 / x.shape[1]
    sq = (x**2).sum(axis=1)
    dist = sq[:, None] + sq[None, :] - 2.0 * (x @ x.T)
    kernel = np.exp(-gamma * np.maximum(dist, 0.0))
    n = kernel.shape[0]
    ones = np.full((n, n), 1.0 / n)
    centered = kernel - ones @ kernel - kernel @ ones + ones @ kernel @ ones
    eigvals, eigvecs = np.linalg.eigh(centered)
    order = np.argsort(eigvals)[::-1]
    eigvals, eigvecs = eigvals[order], eigvecs[:, order]
    keep = int((eigvals > 1e-10).sum())
    if keep == 0:
        raise DegenerateOutput("KernelPCA found no informative components")
    keep = min(keep, 8)
    vecs = _svd_flip(eigvecs[:, :keep].T).T
    scores = vecs * np.sqrt(eigvals[:keep])[None, :]
    cols = tuple(
        Column(f"kpc{i + 1}", NUMERIC, scores[:, i].copy()) for i in range(keep)
    )
    return d.with_columns(cols)


def _apply_truncated_svd(d: Dataset, seed: int) -> Dataset:
    x = _require_dense_numeric(d, "TruncatedSVD")
    m = min(x.shape[1] - 1, 8)
    if m < 1:
        raise DegenerateOutput("TruncatedSVD would keep zero components")
    u, s, vt = np.linalg.svd(x, full_matrices=False)
    components = _svd_flip(vt[:m])
    scores = x @ components.T
    cols = tuple(
        Column(f"svd{i + 1}", NUMERIC, scores[:, i].copy()) for i in range(m)
    )
    return d.with_columns(cols)


N_EMBED_TREES = 8
EMBED_TREE_DEPTH = 3


def _grow_tree(x: np.ndarray, rows: np.ndarray, depth: int, rng) -> list:
    """Random-split tree; returns nested (feature, threshold, left, right) or
    a leaf marker. Leaves are dicts so ids can be assigned after growth."""
    if depth == 0 or len(rows) < 2:
        return ["leaf", None]
    feature = int(rng.integers(x.shape[1]))
    col = x[rows, feature]
    lo, hi = float(col.min()), float(col.max())
    if lo == hi:
        return ["leaf", None]
    threshold = float(rng.uniform(lo, hi))
    left_rows = rows[col <= threshold]
    right_rows = rows[col > threshold]
    left = _grow_tree(x, left_rows, depth - 1, rng)
    right = _grow_tree(x, right_rows, depth - 1, rng)
    return ["split", feature, threshold, left, right]


def _assign_leaf_ids(node: list, counter: list[int]) -> None:
    if node[0] == "leaf":
        node[1] = counter[0]
        counter[0] += 1
    else:
        _assign_leaf_ids(node[3], counter)
        _assign_leaf_ids(node[4], counter)


def _leaf_of(node: list, row: np.ndarray) -> int:
    while node[0] == "split":
        node = node[3] if row[node[1]] <= node[2] else node[4]
    return node[1]


def _apply_random_trees_embedding(d: Dataset, seed: int) -> Dataset:
    x = _require_dense_numeric(d, "RandomTreesEmbedding")
    rng = np.random.default_rng(seed)
    cols: list[Column] = []
    all_rows = np.arange(x.shape[0])
    for t in range(N_EMBED_TREES):
        tree = _grow_tree(x, all_rows, EMBED_TREE_DEPTH, rng)
        counter = [0]
        _assign_leaf_ids(tree, counter)
        leaves = np.array([_leaf_of(tree, x[i]) for i in range(x.shape[0])])
        for leaf in range(counter[0]):
            vals = (leaves == leaf).astype(np.float64)
            cols.append(Column(f"rte{t}_leaf{leaf}", NUMERIC, vals))
    _check_width(len(cols), "RandomTreesEmbedding")
    return d.with_columns(cols)


# --- selection and blank ----------------------------------------------------


def _apply_variance_threshold(d: Dataset, seed: int) -> Dataset:
    out = []
    for c in d.columns:
        if c.kind == NUMERIC:
            present = c.non_missing()
            if len(np.unique(present)) <= 1:
                continue
        out.append(c)
    if not out:
        raise DegenerateOutput("VarianceThreshold dropped every column")
    return d.with_columns(out)


def _apply_blank(d: Dataset, seed: int) -> Dataset:
    return d


_APPLY = {
    0: _apply_imputer_cat_prim,
    1: _apply_imputer_mean,
    2: _apply_imputer_median,
    3: _apply_imputer_num,
    4: _apply_label_encoder,
    5: _apply_one_hot_encoder,
    6: _apply_minmax,
    7: _apply_maxabs,
    8: _apply_robust,
    9: _apply_standard,
    10: _apply_quantile,
    11: _apply_log,
    12: _apply_power,
    13: _apply_normalizer,
    14: _apply_kbins,
    15: _apply_polynomial,
    16: _apply_interactions,
    17: _apply_pca,
    18: _apply_pca,
    19: _apply_pca,
    20: _apply_pca,
    21: _apply_kernel_pca,
    22: _apply_truncated_svd,
    23: _apply_random_trees_embedding,
    24: _apply_variance_threshold,
    BLANK_ID: _apply_blank,
}


def apply_operator(op_id: int, d: Dataset, seed: int = 0) -> Dataset:
    """Fit the operator on `d` and transform it, returning a new dataset."""
    if op_id not in _APPLY:
        raise KeyError(f"unknown operator id {op_id}")
    if d.n_rows == 0:
        raise ValueError("cannot apply an operator to an empty dataset")
    return _APPLY[op_id](d, seed)


def apply_pipeline(p: Pipeline, d: Dataset, seed: int = 0) -> Dataset:
    """Left-fold of apply_operator with per-step seed = seed + step index.

    Inapplicable steps are skipped and consume no step index, so a pipeline
    and its skip-filtered form transform identically. The reward penalty for
    skips is the caller's bookkeeping. DegenerateOutput propagates.
    """
    current = d
    executed = 0
    for op in p.ops:
        try:
            current = apply_operator(op, current, seed + executed)
        except InapplicableOperator:
            continue
        executed += 1
    return current


def effective_pipeline(p: Pipeline, d: Dataset, seed: int = 0) -> Pipeline:
    """The subsequence of `p` that actually applies when folded over `d`."""
    current = d
    kept = []
    for op in p.ops:
        try:
            current = apply_operator(op, current, seed + len(kept))
        except InapplicableOperator:
            continue
        kept.append(op)
    return Pipeline(tuple(kept))
