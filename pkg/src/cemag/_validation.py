"""Input validation helpers shared by the estimators and loaders."""

from __future__ import annotations

import math
from typing import Iterable

import numpy as np


class CemagError(Exception):
    """Base class for errors raised by this package."""


class DataError(CemagError, ValueError):
    """Malformed or inconsistent input data."""


class DimensionError(DataError):
    """Feature dimension does not match what the model or set expects."""


class ConfigError(CemagError, ValueError):
    """Invalid experiment, trainer or augmenter configuration."""


class ConvergenceError(CemagError, RuntimeError):
    """An iterative solver diverged or ran out of its iteration budget."""


class DiagnosticError(CemagError, ValueError):
    """A diagnostic metric is undefined for the given decomposition."""


def as_float_matrix(X, *, name: str = "X") -> np.ndarray:
    """Return ``X`` as a finite 2-D float64 array with at least one column."""
    arr = np.asarray(X, dtype=np.float64)
    if arr.ndim == 1:
        arr = arr.reshape(1, -1) if arr.size else arr.reshape(0, 0)
    if arr.ndim != 2:
        raise DataError(f"{name} must be 2-D, got shape {arr.shape}")
    if arr.shape[0] and arr.shape[1] < 1:
        raise DataError(f"{name} must have at least one feature column")
    if not np.all(np.isfinite(arr)):
        bad = np.argwhere(~np.isfinite(arr))[0]
        raise DataError(f"{name} contains a non-finite value at row {bad[0]}, column {bad[1]}")
    return arr


def as_float_vector(x, dim: int | None = None, *, name: str = "x") -> np.ndarray:
    arr = np.asarray(x, dtype=np.float64)
    if arr.ndim != 1:
        raise DimensionError(f"{name} must be a 1-D vector, got shape {arr.shape}")
    if dim is not None and arr.shape[0] != dim:
        raise DimensionError(f"{name} has dimension {arr.shape[0]}, expected {dim}")
    if not np.all(np.isfinite(arr)):
        raise DataError(f"{name} contains non-finite values")
    return arr


def check_feature_dim(X: np.ndarray, dim: int) -> None:
    if X.shape[1] != dim:
        raise DimensionError(f"input has {X.shape[1]} features, model expects {dim}")


def as_label_vector(y, n: int | None = None, *, name: str = "y") -> np.ndarray:
    """Integer class ids; float input is accepted only when integral."""
    arr = np.asarray(y)
    if arr.ndim != 1:
        raise DataError(f"{name} must be 1-D, got shape {arr.shape}")
    if arr.dtype.kind == "f":
        if not np.all(np.isfinite(arr)) or not np.all(arr == np.round(arr)):
            raise DataError(f"{name} must hold integer class ids")
    elif arr.dtype.kind not in "iub":
        raise DataError(f"{name} must hold integer class ids, got dtype {arr.dtype}")
    arr = arr.astype(np.int64)
    if arr.size and arr.min() < 0:
        raise DataError(f"{name} contains negative class ids")
    if n is not None and arr.shape[0] != n:
        raise DataError(f"{name} has {arr.shape[0]} entries, expected {n}")
    return arr


def check_positive(value, name: str, *, strict: bool = True) -> None:
    ok = value > 0 if strict else value >= 0
    if not ok or not math.isfinite(value):
        rel = ">" if strict else ">="
        raise ConfigError(f"{name} must be finite and {rel} 0, got {value!r}")


def require_classes(labels: np.ndarray, classes: Iterable[int], what: str = "training set") -> None:
    present = set(np.unique(labels).tolist())
    missing = [c for c in classes if c not in present]
    if missing:
        raise DataError(f"{what} is missing class(es) {missing}")


def ce_sum(values: np.ndarray) -> float:
    """Correctly rounded sum of a CE vector.

    Every decision value in the package goes through this helper so the
    predict path and the decomposition path agree bit for bit, independent
    of summation order.
    """
    return math.fsum(values.tolist())


def ce_row_sums(values: np.ndarray) -> np.ndarray:
    """``ce_sum`` applied along the last axis."""
    flat = values.reshape(-1, values.shape[-1])
    out = np.fromiter((math.fsum(row) for row in flat.tolist()), dtype=np.float64, count=flat.shape[0])
    return out.reshape(values.shape[:-1])
