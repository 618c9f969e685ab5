"""Regret-bound evaluators against a second, independent transcription."""

import math

import numpy as np
import pytest

from prebo.bounds import (
    RegretBoundInputs,
    observation_bias_term,
    regret_bound_pi,
    regret_bound_ucb,
    variance_bias_term,
)
from prebo.exceptions import DomainError


def iota_ref(n, t, delta):
    l6 = math.log(6.0 / delta)
    inner = n - 3 + t + 2 * math.sqrt(t * l6) + 2 * l6
    return math.sqrt(6.0 * inner / (delta * n * (n - t - 1)))


def b_ref(n, t, delta):
    return math.log(6.0 / delta) / (n - t)


def ucb_bound_ref(n, T, delta, c, sigma2, rho):
    iota = iota_ref(n, T, delta)
    b = b_ref(n, T, delta)
    l3 = 2.0 * math.log(3.0 / delta)
    eta = ((iota + math.sqrt(l3)) / math.sqrt(1 - 2 * math.sqrt(b))) \
        * math.sqrt(1 + 2 * math.sqrt(b) + 2 * b) + iota + math.sqrt(l3)
    width = math.sqrt(2 * c * rho / (T * math.log(1 + c / sigma2)) + sigma2)
    return eta * width - math.sqrt(2 * math.log(3.0 / delta)) * sigma2 / math.sqrt(c + sigma2)


def pi_bound_ref(n, T, delta, c, sigma2, rho, f_star_hat, mu_star, k_star):
    iota = iota_ref(n, T, delta)
    b = b_ref(n, T, delta)
    l32 = 2.0 * math.log(3.0 / (2.0 * delta))
    eta = ((f_star_hat - mu_star) / math.sqrt(k_star + sigma2) + iota) \
        * math.sqrt((1 + 2 * math.sqrt(b) + 2 * b) / (1 - 2 * math.sqrt(b))) \
        + iota + math.sqrt(l32)
    width = math.sqrt(2 * c * rho / (T * math.log(1 + c / sigma2)) + sigma2)
    return eta * width - math.sqrt(l32) * sigma2 / (2 * math.sqrt(c + sigma2))


def valid_inputs(n=200, T=10, delta=0.1, c=1.0, sigma2=0.01, rho=2.0, **pi):
    return RegretBoundInputs(n_tasks=n, horizon=T, delta=delta, c=c,
                             sigma2=sigma2, rho=rho, **pi)


def test_bias_terms_match_reference():
    assert observation_bias_term(200, 10, 0.1) == pytest.approx(
        iota_ref(200, 10, 0.1), abs=1e-14)
    assert variance_bias_term(200, 10, 0.1) == pytest.approx(
        b_ref(200, 10, 0.1), abs=1e-14)


def test_ucb_bound_matches_transcription_at_reference_point():
    got = regret_bound_ucb(valid_inputs())
    assert got == pytest.approx(ucb_bound_ref(200, 10, 0.1, 1.0, 0.01, 2.0), abs=1e-12)


def test_pi_bound_matches_transcription_at_reference_point():
    inp = valid_inputs(f_star_hat=1.5, mu_at_xstar=1.0, k_at_xstar=0.4)
    got = regret_bound_pi(inp)
    assert got == pytest.approx(
        pi_bound_ref(200, 10, 0.1, 1.0, 0.01, 2.0, 1.5, 1.0, 0.4), abs=1e-12)


def test_bounds_match_transcription_at_random_valid_inputs():
    rng = np.random.default_rng(17)
    for _ in range(20):
        T = int(rng.integers(1, 30))
        delta = float(rng.uniform(0.02, 0.4))
        n = int(math.ceil(4 * math.log(6 / delta) + T + 2)) + int(rng.integers(0, 200))
        c = float(rng.uniform(0.5, 3.0))
        sigma2 = float(rng.uniform(1e-3, 0.5))
        rho = float(rng.uniform(0.5, 10.0))
        fh = float(rng.uniform(0.5, 2.0))
        mu = float(rng.uniform(-1.0, 0.5))
        ks = float(rng.uniform(0.05, 1.0))
        inp = RegretBoundInputs(n_tasks=n, horizon=T, delta=delta, c=c,
                                sigma2=sigma2, rho=rho, f_star_hat=fh,
                                mu_at_xstar=mu, k_at_xstar=ks)
        assert regret_bound_ucb(inp) == pytest.approx(
            ucb_bound_ref(n, T, delta, c, sigma2, rho), abs=1e-12)
        assert regret_bound_pi(inp) == pytest.approx(
            pi_bound_ref(n, T, delta, c, sigma2, rho, fh, mu, ks), abs=1e-12)


def test_bound_decreases_with_more_tasks():
    vals = [regret_bound_ucb(valid_inputs(n=n)) for n in range(100, 1001, 100)]
    assert np.all(np.diff(vals) < 0)


def test_bound_grows_as_delta_shrinks():
    assert regret_bound_ucb(valid_inputs(delta=0.01)) > \
        regret_bound_ucb(valid_inputs(delta=0.2))


def test_task_count_precondition_enforced():
    # N must be at least 4 log(6/delta) + T + 2
    with pytest.raises(DomainError):
        RegretBoundInputs(n_tasks=20, horizon=10, delta=0.1, c=1.0,
                          sigma2=0.01, rho=2.0)


def test_pi_bound_requires_its_extra_fields():
    with pytest.raises(DomainError):
        regret_bound_pi(valid_inputs())


def test_invalid_scalars_rejected():
    with pytest.raises(DomainError):
        valid_inputs(delta=0.0)
    with pytest.raises(DomainError):
        valid_inputs(sigma2=-0.1)
    with pytest.raises(DomainError):
        valid_inputs(c=0.0)
    with pytest.raises(DomainError):
        valid_inputs(T=0)
