"""Small input-validation helpers used across the estimators."""

import numbers

import numpy as np
from sklearn.utils import check_array

from .exceptions import ParameterError


def check_scalar_in(value, name, low=None, high=None, low_open=True, high_open=False):
    """Return ``value`` as float after checking it lies in the given interval."""
    if not isinstance(value, numbers.Real) or isinstance(value, bool):
        raise ParameterError(f"{name} must be a real number, got {value!r}")
    value = float(value)
    if not np.isfinite(value):
        raise ParameterError(f"{name} must be finite, got {value}")
    if low is not None:
        if (low_open and value <= low) or (not low_open and value < low):
            bracket = "(" if low_open else "["
            raise ParameterError(f"{name}={value} outside {bracket}{low}, ...")
    if high is not None:
        if (high_open and value >= high) or (not high_open and value > high):
            bracket = ")" if high_open else "]"
            raise ParameterError(f"{name}={value} outside ..., {high}{bracket}")
    return value


def check_positive_int(value, name, minimum=1):
    if not isinstance(value, numbers.Integral) or isinstance(value, bool):
        raise ParameterError(f"{name} must be an integer, got {value!r}")
    if value < minimum:
        raise ParameterError(f"{name} must be >= {minimum}, got {value}")
    return int(value)


def check_positive_sequence(values, name, allow_inf=False):
    """1-d float array with strictly positive entries."""
    arr = np.asarray(values, dtype=float)
    if arr.ndim == 0:
        arr = arr.reshape(1)
    if arr.ndim != 1 or arr.size == 0:
        raise ParameterError(f"{name} must be a non-empty 1-d sequence")
    if np.any(np.isnan(arr)) or (not allow_inf and np.any(np.isinf(arr))):
        raise ParameterError(f"{name} must be finite")
    if np.any(arr <= 0):
        raise ParameterError(f"every entry of {name} must be positive")
    return arr


def check_parameters(Y, n_features=None):
    """Validate a (n_samples, s) block of parameter vectors."""
    Y = check_array(Y, dtype=np.float64, ensure_2d=False)
    if Y.ndim == 1:
        Y = Y.reshape(1, -1)
    if n_features is not None and Y.shape[1] != n_features:
        raise ParameterError(
            f"parameter vectors have {Y.shape[1]} entries, expected {n_features}"
        )
    return Y
