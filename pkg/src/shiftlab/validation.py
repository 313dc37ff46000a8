"""Input validation helpers used by the estimators and the numeric core."""

from __future__ import annotations

import numpy as np


def as_float_array(a, name: str = "array", ndim: int | None = None) -> np.ndarray:
    """Coerce to a float64 ndarray and check finiteness and rank."""
    arr = np.asarray(a, dtype=np.float64)
    if arr.size == 0:
        raise ValueError(f"{name} must be non-empty")
    if ndim is not None and arr.ndim != ndim:
        raise ValueError(f"{name} must have {ndim} dimension(s), got {arr.ndim}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} must contain only finite values")
    return arr


def check_square(m, name: str = "matrix") -> np.ndarray:
    m = as_float_array(m, name, ndim=2)
    if m.shape[0] != m.shape[1]:
        raise ValueError(f"{name} must be square, got shape {m.shape}")
    return m


def check_distribution(p, name: str = "distribution", atol: float = 1e-9) -> np.ndarray:
    """Validate a probability vector: non-negative entries summing to 1 within ``atol``."""
    p = as_float_array(p, name, ndim=1)
    if np.any(p < -atol):
        raise ValueError(f"{name} has negative entries")
    total = float(p.sum())
    if abs(total - 1.0) > atol:
        raise ValueError(f"{name} must sum to 1, got {total!r}")
    return p


def check_labels(y, num_classes: int, name: str = "labels") -> np.ndarray:
    y = np.asarray(y)
    if y.size == 0:
        raise ValueError(f"{name} must be non-empty")
    if y.ndim != 1:
        raise ValueError(f"{name} must be one-dimensional")
    if not np.issubdtype(y.dtype, np.integer):
        cast = y.astype(np.int64)
        if not np.array_equal(cast, y):
            raise ValueError(f"{name} must be integers")
        y = cast
    y = y.astype(np.int64)
    if y.min() < 0 or y.max() >= num_classes:
        raise ValueError(f"{name} must lie in [0, {num_classes})")
    return y


def check_matching_rows(x, y, name_x: str = "inputs", name_y: str = "labels") -> None:
    if len(x) != len(y):
        raise ValueError(f"{name_x} and {name_y} disagree on length: {len(x)} vs {len(y)}")
