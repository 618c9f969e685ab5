"""Stationary kernel families on ARD-scaled distances.

A family is described by its radial profile f with f(0) = 1, evaluated at
r = sqrt(sum_h (x_h - x'_h)^2 / ls_h^2), and the full kernel is
k(x, x') = amplitude^2 * f(r).  New families can be registered without
touching any caller: they only ever look the profile up by name.
"""

import numpy as np

from .exceptions import InputError


class RadialFamily:
    """Radial profile plus the slope factor needed for analytic gradients.

    ``slope_factor`` is g(r) = -f'(r) / r, which stays finite at r = 0 for
    the families used here and is what lengthscale/input derivatives of the
    kernel matrix contract against.
    """

    def __init__(self, name, profile, slope_factor):
        self.name = name
        self.profile = profile
        self.slope_factor = slope_factor


_SQRT3 = np.sqrt(3.0)


def _matern32_profile(r):
    return (1.0 + _SQRT3 * r) * np.exp(-_SQRT3 * r)


def _matern32_slope_factor(r):
    # f'(r) = -3 r exp(-sqrt(3) r), so -f'(r)/r = 3 exp(-sqrt(3) r)
    return 3.0 * np.exp(-_SQRT3 * r)


KERNEL_FAMILIES = {
    "matern32": RadialFamily("matern32", _matern32_profile, _matern32_slope_factor),
}


def get_family(name):
    try:
        return KERNEL_FAMILIES[name]
    except KeyError:
        raise InputError(
            f"unknown kernel family {name!r}; known: {sorted(KERNEL_FAMILIES)}"
        ) from None


def scaled_distance(X, X2, lengthscales):
    """Pairwise ARD-scaled Euclidean distance matrix.

    X: (n, d), X2: (m, d), lengthscales: (d,) positive.
    """
    ls = np.asarray(lengthscales, dtype=float)
    if np.any(ls <= 0):
        raise InputError("lengthscales must be positive")
    A = np.asarray(X, dtype=float) / ls
    B = np.asarray(X2, dtype=float) / ls
    # tiny lengthscales overflow here; downstream factorization rejects the
    # resulting non-finite matrix, so skip the per-op warnings
    with np.errstate(over="ignore", invalid="ignore"):
        sq = np.sum(A * A, axis=1)[:, None] + np.sum(B * B, axis=1)[None, :] - 2.0 * (A @ B.T)
        np.maximum(sq, 0.0, out=sq)
        return np.sqrt(sq)


def kernel_value(family, amplitude, r):
    """amplitude^2 * f(r) for a radial family (by object or name)."""
    if isinstance(family, str):
        family = get_family(family)
    return (amplitude ** 2) * family.profile(np.asarray(r, dtype=float))
