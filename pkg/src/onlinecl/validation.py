"""Small input-validation helpers shared across the package."""

import numpy as np


def check_matrix(X, name="X", n_cols=None):
    """Coerce to a finite 2-D float64 array, raising ValueError otherwise."""
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2:
        raise ValueError(f"{name} must be 2-D, got shape {X.shape}")
    if not np.all(np.isfinite(X)):
        raise ValueError(f"{name} contains non-finite values")
    if n_cols is not None and X.shape[1] != n_cols:
        raise ValueError(f"{name} must have {n_cols} columns, got {X.shape[1]}")
    return X


def check_vector(v, name="feature", dim=None):
    v = np.asarray(v, dtype=np.float64)
    if v.ndim != 1:
        raise ValueError(f"{name} must be 1-D, got shape {v.shape}")
    if not np.all(np.isfinite(v)):
        raise ValueError(f"{name} contains non-finite values")
    if dim is not None and v.shape[0] != dim:
        raise ValueError(f"{name} must have length {dim}, got {v.shape[0]}")
    return v


def check_labels(y, n_samples=None, n_classes=None, name="y"):
    """Coerce to a 1-D int64 label array with non-negative class ids."""
    y = np.asarray(y)
    if y.ndim != 1:
        raise ValueError(f"{name} must be 1-D, got shape {y.shape}")
    if y.size and not np.issubdtype(y.dtype, np.number):
        raise ValueError(f"{name} must be numeric labels")
    y = y.astype(np.int64)
    if y.size and y.min() < 0:
        raise ValueError(f"{name} contains negative class ids")
    if n_classes is not None and y.size and y.max() >= n_classes:
        raise ValueError(f"{name} contains class id {y.max()} >= {n_classes}")
    if n_samples is not None and y.shape[0] != n_samples:
        raise ValueError(f"{name} has {y.shape[0]} entries, expected {n_samples}")
    return y
