"""Input validation helpers shared across the estimators."""

from __future__ import annotations

import numpy as np

__all__ = [
    "as_float_array",
    "check_positive_array",
    "check_positive_scalar",
    "check_unit_open",
    "check_fraction",
]


def as_float_array(values, name: str) -> np.ndarray:
    """Coerce ``values`` to a 1-D float64 array, rejecting NaN/inf."""
    arr = np.asarray(values, dtype=float)
    if arr.ndim != 1:
        raise ValueError(f"{name} must be one-dimensional, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains non-finite values")
    return arr


def check_positive_array(values, name: str) -> np.ndarray:
    arr = as_float_array(values, name)
    if arr.size and arr.min() <= 0.0:
        raise ValueError(f"{name} must be strictly positive (min={arr.min()})")
    return arr


def check_positive_scalar(value: float, name: str) -> float:
    value = float(value)
    if not np.isfinite(value) or value <= 0.0:
        raise ValueError(f"{name} must be a positive finite number, got {value}")
    return value


def check_unit_open(value: float, name: str) -> float:
    """Require ``value`` to lie strictly inside (0, 1)."""
    value = float(value)
    if not 0.0 < value < 1.0:
        raise ValueError(f"{name} must lie in the open interval (0, 1), got {value}")
    return value


def check_fraction(value: float, name: str) -> float:
    """Require ``value`` to lie in the closed interval [0, 1]."""
    value = float(value)
    if not 0.0 <= value <= 1.0:
        raise ValueError(f"{name} must lie in [0, 1], got {value}")
    return value
