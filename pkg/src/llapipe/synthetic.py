"""Synthetic tabular datasets for experiments and the test suite."""

from __future__ import annotations

import csv

import numpy as np

from .data_model import CATEGORICAL, NUMERIC, Column, Dataset


def skewed_interaction(
    n_rows: int = 240, seed: int = 0, margin: float = 0.15, scale: float = 4.5
) -> Dataset:
    """Two-feature parity task hidden behind a heavy exponential skew.

    Latent z0, z1 ~ U(-1, 1) with |z0 * z1| >= margin; the label is the sign
    of z0 * z1. Observed features are exp(scale * z), so raw inputs are
    strongly skewed and linearly useless, while rank-uniformizing followed by
    a product-feature expansion makes the task linearly separable with a
    margin (each marginal stays dense, so ranks preserve the geometry). A
    third noise column is appended as a distractor.
    """
    rng = np.random.default_rng(seed)
    z = np.empty((n_rows, 2))
    filled = 0
    while filled < n_rows:
        cand = rng.uniform(-1.0, 1.0, size=(n_rows, 2))
        ok = cand[np.abs(cand[:, 0] * cand[:, 1]) >= margin]
        take = min(len(ok), n_rows - filled)
        z[filled : filled + take] = ok[:take]
        filled += take
    labels = np.where(z[:, 0] * z[:, 1] > 0, "pos", "neg").astype(object)
    x = np.exp(scale * z)
    noise = rng.normal(0.0, 1.0, size=n_rows)
    columns = (
        Column("f0", NUMERIC, x[:, 0]),
        Column("f1", NUMERIC, x[:, 1]),
        Column("f2", NUMERIC, noise),
    )
    return Dataset(columns, labels)


def gaussian_blobs(
    n_rows: int = 200, seed: int = 0, separation: float = 4.0
) -> Dataset:
    """Two well-separated Gaussian classes in two dimensions."""
    rng = np.random.default_rng(seed)
    half = n_rows // 2
    a = rng.normal(0.0, 1.0, size=(half, 2))
    b = rng.normal(separation, 1.0, size=(n_rows - half, 2))
    x = np.vstack([a, b])
    labels = np.array(["a"] * half + ["b"] * (n_rows - half), dtype=object)
    columns = (Column("x0", NUMERIC, x[:, 0]), Column("x1", NUMERIC, x[:, 1]))
    return Dataset(columns, labels)


def messy_mixed(n_rows: int = 120, seed: int = 0) -> Dataset:
    """Mixed-type data with missing cells, for exercising imputers/encoders."""
    rng = np.random.default_rng(seed)
    num = rng.normal(0.0, 1.0, size=n_rows)
    miss = rng.random(n_rows) < 0.15
    num[miss] = np.nan
    cats = np.array(
        [("red", "green", "blue")[i] for i in rng.integers(0, 3, size=n_rows)],
        dtype=object,
    )
    cats[rng.random(n_rows) < 0.1] = None
    score = np.where(np.isnan(num), 0.0, num) + (cats == "red") * 1.5
    labels = np.where(score > 0.5, "hi", "lo").astype(object)
    columns = (
        Column("amount", NUMERIC, num),
        Column("color", CATEGORICAL, cats),
    )
    return Dataset(columns, labels)


def write_csv(d: Dataset, path: str, target_name: str = "label") -> None:
    """Write a dataset as CSV (empty string encodes a missing cell)."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(list(d.column_names) + [target_name])
        for i in range(d.n_rows):
            row = []
            for c in d.columns:
                v = c.values[i]
                if c.kind == NUMERIC:
                    row.append("" if np.isnan(v) else repr(float(v)))
                else:
                    row.append("" if v is None else str(v))
            row.append(str(d.target[i]))
            writer.writerow(row)
