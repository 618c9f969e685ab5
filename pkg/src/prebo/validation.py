"""Input validation helpers used at the public API boundaries."""

import numpy as np

from .exceptions import InputError


def as_points(X, dim=None, name="X"):
    """Coerce to a float64 (n, d) array of finite input locations.

    A single point given as a 1-d array of length d is promoted to (1, d)
    only when ``dim`` says so; otherwise 1-d input is rejected to avoid
    silently transposing data.
    """
    arr = np.asarray(X, dtype=float)
    if arr.ndim == 1 and dim is not None and arr.shape == (dim,):
        arr = arr[None, :]
    if arr.ndim != 2:
        raise InputError(f"{name} must be a 2-d array of shape (n, d), got shape {arr.shape}")
    if dim is not None and arr.shape[1] != dim:
        raise InputError(f"{name} has {arr.shape[1]} columns, expected {dim}")
    if not np.all(np.isfinite(arr)):
        raise InputError(f"{name} contains non-finite values")
    return arr


def as_vector(y, n=None, name="y"):
    """Coerce to a float64 (n,) array of finite values."""
    arr = np.asarray(y, dtype=float).reshape(-1)
    if n is not None and arr.shape[0] != n:
        raise InputError(f"{name} has length {arr.shape[0]}, expected {n}")
    if not np.all(np.isfinite(arr)):
        raise InputError(f"{name} contains non-finite values")
    return arr


def check_finite_scalar(value, name):
    v = float(value)
    if not np.isfinite(v):
        raise InputError(f"{name} must be finite, got {v}")
    return v


def check_positive(value, name):
    v = check_finite_scalar(value, name)
    if v <= 0:
        raise InputError(f"{name} must be positive, got {v}")
    return v


def check_symmetric(K, tol=1e-12, name="covariance"):
    K = np.asarray(K, dtype=float)
    if K.ndim != 2 or K.shape[0] != K.shape[1]:
        raise InputError(f"{name} must be square, got shape {K.shape}")
    scale = max(1.0, float(np.max(np.abs(K))) if K.size else 1.0)
    if K.size and float(np.max(np.abs(K - K.T))) > tol * scale:
        raise InputError(f"{name} is not symmetric within {tol}")
    return K
