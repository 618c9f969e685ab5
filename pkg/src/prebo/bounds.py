"""Closed-form regret bound evaluators for the pre-trained-prior setting.

These are pure formula transcriptions: given the task count, horizon,
failure probability and the model quantities, they return the bound value.
Nothing here runs an optimization loop.
"""

import math
from dataclasses import dataclass

from .exceptions import DomainError


def observation_bias_term(n_tasks, t, delta) -> float:
    """The iota term at step index t-1: sqrt(6*(N-3+t+2*sqrt(t*log(6/d))
    + 2*log(6/d)) / (d*N*(N-t-1)))."""
    n = int(n_tasks)
    t = int(t)
    if not (0.0 < delta < 1.0):
        raise DomainError(f"requires 0 < delta < 1, got delta={delta}")
    if not n > t + 1:
        raise DomainError(f"requires n_tasks > t + 1, got n_tasks={n}, t={t}")
    log6 = math.log(6.0 / delta)
    return math.sqrt(
        6.0 * (n - 3 + t + 2.0 * math.sqrt(t * log6) + 2.0 * log6)
        / (delta * n * (n - t - 1))
    )


def variance_bias_term(n_tasks, t, delta) -> float:
    """The b term at step index t-1: log(6/delta) / (N - t)."""
    n = int(n_tasks)
    t = int(t)
    if not (0.0 < delta < 1.0):
        raise DomainError(f"requires 0 < delta < 1, got delta={delta}")
    if not n > t:
        raise DomainError(f"requires n_tasks > t, got n_tasks={n}, t={t}")
    return math.log(6.0 / delta) / (n - t)


@dataclass(frozen=True)
class RegretBoundInputs:
    """Everything the closed forms need; PI additionally uses the last three.

    ``c`` bounds the predictive variance along the run, ``rho`` is the
    maximum information gain at horizon T, ``f_star_hat`` the target value
    the PI rule aims at, and ``mu_at_xstar`` / ``k_at_xstar`` the
    conditioned mean/variance at the maximizer.
    """

    n_tasks: int
    horizon: int
    delta: float
    c: float
    sigma2: float
    rho: float
    f_star_hat: float = math.nan
    mu_at_xstar: float = math.nan
    k_at_xstar: float = math.nan

    def __post_init__(self):
        n, t = int(self.n_tasks), int(self.horizon)
        if not (0.0 < self.delta < 1.0):
            raise DomainError(f"requires 0 < delta < 1, got delta={self.delta}")
        if t < 1:
            raise DomainError(f"requires horizon >= 1, got {t}")
        if not (self.sigma2 > 0):
            raise DomainError(f"requires sigma2 > 0, got {self.sigma2}")
        if not (self.c > 0):
            raise DomainError(f"requires c > 0, got {self.c}")
        if self.rho < 0:
            raise DomainError(f"requires rho >= 0, got {self.rho}")
        needed = 4.0 * math.log(6.0 / self.delta) + t + 2.0
        if n < needed:
            raise DomainError(
                f"requires n_tasks >= 4*log(6/delta) + horizon + 2 "
                f"(= {needed:.6g}), got n_tasks={n}"
            )


def _common_width(inp: RegretBoundInputs) -> float:
    # sqrt(2 c rho / (T log(1 + c/sigma2)) + sigma2)
    return math.sqrt(
        2.0 * inp.c * inp.rho
        / (inp.horizon * math.log(1.0 + inp.c / inp.sigma2))
        + inp.sigma2
    )


def regret_bound_ucb(inp: RegretBoundInputs) -> float:
    """High-probability simple-regret bound for the theoretical UCB rule."""
    l3 = 2.0 * math.log(3.0 / inp.delta)
    iota = observation_bias_term(inp.n_tasks, inp.horizon, inp.delta)
    b = variance_bias_term(inp.n_tasks, inp.horizon, inp.delta)
    eta = (
        (iota + math.sqrt(l3)) / math.sqrt(1.0 - 2.0 * math.sqrt(b))
    ) * math.sqrt(1.0 + 2.0 * math.sqrt(b) + 2.0 * b) + iota + math.sqrt(l3)
    return eta * _common_width(inp) - math.sqrt(l3) * inp.sigma2 / math.sqrt(inp.c + inp.sigma2)


def regret_bound_pi(inp: RegretBoundInputs) -> float:
    """High-probability simple-regret bound for the improvement rule.

    The step-indexed terms are evaluated at the supplied horizon, since the
    inputs carry the conditioned mean/variance at the maximizer as scalars.
    """
    for field in ("f_star_hat", "mu_at_xstar", "k_at_xstar"):
        if math.isnan(getattr(inp, field)):
            raise DomainError(f"the improvement-rule bound needs {field}")
    if inp.k_at_xstar < 0:
        raise DomainError(f"requires k_at_xstar >= 0, got {inp.k_at_xstar}")
    l32 = 2.0 * math.log(3.0 / (2.0 * inp.delta))
    iota = observation_bias_term(inp.n_tasks, inp.horizon, inp.delta)
    b = variance_bias_term(inp.n_tasks, inp.horizon, inp.delta)
    eta = (
        (inp.f_star_hat - inp.mu_at_xstar) / math.sqrt(inp.k_at_xstar + inp.sigma2)
        + iota
    ) * math.sqrt((1.0 + 2.0 * math.sqrt(b) + 2.0 * b) / (1.0 - 2.0 * math.sqrt(b))) \
        + iota + math.sqrt(l32)
    return eta * _common_width(inp) - math.sqrt(l32) * inp.sigma2 / (2.0 * math.sqrt(inp.c + inp.sigma2))
