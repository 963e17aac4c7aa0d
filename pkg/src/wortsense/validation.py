"""Small input-validation helpers used throughout the package."""

from __future__ import annotations

import numpy as np

from .errors import ValidationError


def check_nonnegative(name: str, value: float) -> float:
    if value < 0:
        raise ValidationError(f"{name} must be >= 0, got {value!r}")
    return value


def check_positive(name: str, value: float) -> float:
    if value <= 0:
        raise ValidationError(f"{name} must be > 0, got {value!r}")
    return value


def as_float_array(name: str, values, ndim: int | None = None) -> np.ndarray:
    """Coerce to a float64 ndarray, optionally enforcing dimensionality."""
    arr = np.asarray(values, dtype=np.float64)
    if ndim is not None and arr.ndim != ndim:
        raise ValidationError(f"{name} must be {ndim}-dimensional, got shape {arr.shape}")
    return arr


def check_finite(name: str, arr: np.ndarray) -> np.ndarray:
    if not np.all(np.isfinite(arr)):
        raise ValidationError(f"{name} contains non-finite values")
    return arr


def check_window_array(name: str, X) -> np.ndarray:
    """Validate a stacked window tensor of shape (n_windows, windowsize, n_features)."""
    arr = as_float_array(name, X)
    if arr.ndim != 3:
        raise ValidationError(
            f"{name} must have shape (n_windows, windowsize, n_features), got {arr.shape}"
        )
    check_finite(name, arr)
    return arr
