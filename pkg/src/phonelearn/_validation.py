"""Small input-validation helpers used by the estimator layer."""

from __future__ import annotations

import numpy as np


def as_float_matrix(X, *, n_features: int | None = None,
                    require_finite: bool = True, name: str = "X") -> np.ndarray:
    """Coerce ``X`` to a C-contiguous float64 2-d array and validate it."""
    arr = np.ascontiguousarray(X, dtype=np.float64)
    if arr.ndim == 1:
        arr = arr.reshape(1, -1)
    if arr.ndim != 2:
        raise ValueError(f"{name} must be 2-dimensional, got ndim={arr.ndim}")
    if arr.shape[0] == 0:
        raise ValueError(f"{name} must contain at least one row")
    if n_features is not None and arr.shape[1] != n_features:
        raise ValueError(
            f"{name} has {arr.shape[1]} features, expected {n_features}")
    if require_finite and not np.isfinite(arr).all():
        raise ValueError(f"{name} contains non-finite values")
    return arr


def as_float_vector(x, *, length: int | None = None,
                    require_finite: bool = True, name: str = "x") -> np.ndarray:
    """Coerce ``x`` to a 1-d float64 array and validate it."""
    arr = np.ascontiguousarray(x, dtype=np.float64)
    if arr.ndim != 1:
        raise ValueError(f"{name} must be 1-dimensional, got ndim={arr.ndim}")
    if length is not None and arr.shape[0] != length:
        raise ValueError(f"{name} has length {arr.shape[0]}, expected {length}")
    if require_finite and not np.isfinite(arr).all():
        raise ValueError(f"{name} contains non-finite values")
    return arr


def check_same_length(name_a: str, a, name_b: str, b) -> None:
    if len(a) != len(b):
        raise ValueError(
            f"{name_a} and {name_b} have inconsistent lengths: "
            f"{len(a)} != {len(b)}")
