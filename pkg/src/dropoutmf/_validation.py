"""Input validation helpers used by the functional API and the estimators."""

import numbers

import numpy as np

from .exceptions import BoundaryError, ParameterError, ShapeError


def check_matrix(A, name="X", copy=False):
    """Return `A` as a finite, 2-D float64 array.

    Raises
    ------
    ShapeError
        If `A` is not two-dimensional or has an empty axis.
    ParameterError
        If `A` contains NaN or infinite entries.
    """
    arr = np.array(A, dtype=np.float64, copy=copy) if copy else np.asarray(A, dtype=np.float64)
    if arr.ndim != 2:
        raise ShapeError(f"{name} must be 2-D, got ndim={arr.ndim}")
    if arr.shape[0] < 1 or arr.shape[1] < 1:
        raise ShapeError(f"{name} must have at least one row and one column, got {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ParameterError(f"{name} contains NaN or infinite entries")
    return arr


def check_open_unit(value, name):
    """Check ``0 < value < 1`` and return it as float.

    The value 1 is reported as a :class:`BoundaryError` since it is the
    natural limit (no dropout) rather than a typo.
    """
    if isinstance(value, bool) or not isinstance(value, numbers.Real):
        raise ParameterError(f"{name} must be a real number, got {value!r}")
    value = float(value)
    if value == 1.0:
        raise BoundaryError(f"{name}=1 is excluded; it corresponds to no dropout")
    if not (0.0 < value < 1.0):
        raise ParameterError(f"{name} must lie strictly inside (0, 1), got {value}")
    return value


def check_positive_int(value, name):
    if isinstance(value, bool) or not isinstance(value, numbers.Integral) or value < 1:
        raise ParameterError(f"{name} must be a positive integer, got {value!r}")
    return int(value)


def check_nonnegative(value, name):
    if isinstance(value, bool) or not isinstance(value, numbers.Real) or not np.isfinite(value) or value < 0:
        raise ParameterError(f"{name} must be a finite non-negative real, got {value!r}")
    return float(value)


def check_mask(r, d):
    """Validate a dropout mask of length `d`, returning it as a float 0/1 vector."""
    r = np.asarray(r)
    if r.ndim != 1 or r.shape[0] != d:
        raise ShapeError(f"mask must be a vector of length {d}, got shape {r.shape}")
    if not np.all((r == 0) | (r == 1)):
        raise ParameterError("mask entries must be 0 or 1")
    return r.astype(np.float64)
