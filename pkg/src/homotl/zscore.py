"""Column-wise standardisation of CSV datasets."""

from __future__ import annotations

import warnings

import numpy as np

from .data import Dataset, load_dataset, save_dataset


def zscore_columns(X: np.ndarray) -> np.ndarray:
    """Centre each column and divide by its population std.

    Zero-variance columns come back as zeros and trigger a warning.
    """
    X = np.asarray(X, dtype=float)
    mu = X.mean(axis=0)
    sd = X.std(axis=0)
    flat = sd <= 1e-12 * np.maximum(1.0, np.abs(mu))
    if flat.any():
        cols = ", ".join(str(j + 1) for j in np.flatnonzero(flat))
        warnings.warn(f"zero-variance feature column(s) {cols} set to 0", RuntimeWarning,
                      stacklevel=2)
    Z = np.zeros_like(X)
    Z[:, ~flat] = (X[:, ~flat] - mu[~flat]) / sd[~flat]
    return Z


def zscore_file(in_path, out_path, header: bool = False):
    """Standardise the features of ``in_path`` and write them to ``out_path``."""
    d = load_dataset(in_path, header=header)
    out = Dataset(zscore_columns(d.X), d.y, d.num_classes, d.name)
    save_dataset(out, out_path)
    return out_path
