import numpy as np
import pytest
from sklearn.base import clone
from sklearn.exceptions import NotFittedError

from conftest import const_params
from prebo.data import SynthConfig, synth_generate
from prebo.estimators import PriorTrainedGP, SingleTaskGP
from prebo.gp import PosteriorGp
from prebo.params import CONST_MATERN, GpParams


@pytest.fixture(scope="module")
def dataset():
    true = const_params(2, ls=0.4, noise=0.02)
    cfg = SynthConfig(params=true, n_tasks=10, points_per_task=20,
                      seed=11, n_test_functions=0)
    return synth_generate(cfg).dataset


def test_get_params_round_trip():
    est = PriorTrainedGP(objective="kl", lam=2.0, max_iters=7, seed=5)
    params = est.get_params()
    rebuilt = PriorTrainedGP(**params)
    assert rebuilt.get_params() == params


def test_clone_keeps_settings():
    est = PriorTrainedGP(objective="nll_plus_kl", lam=4.0)
    c = clone(est)
    assert c.get_params() == est.get_params()
    assert not hasattr(c, "params_")


def test_fit_returns_self_and_exposes_state(dataset):
    est = PriorTrainedGP(objective="nll", max_iters=15, seed=0)
    assert est.fit(dataset) is est
    assert isinstance(est.params_, GpParams)
    assert est.n_iter_ >= 1
    assert np.isfinite(est.objective_value_)
    assert len(est.history_) == est.n_iter_


def test_unfitted_predict_raises(dataset):
    with pytest.raises(NotFittedError):
        PriorTrainedGP().predict(np.zeros((2, 2)))


def test_prior_predict_shapes(dataset):
    est = PriorTrainedGP(objective="nll", max_iters=10, seed=0).fit(dataset)
    X = np.random.default_rng(0).uniform(size=(6, 2))
    mu = est.predict(X)
    assert mu.shape == (6,)
    mu2, sd = est.predict(X, return_std=True)
    np.testing.assert_array_equal(mu, mu2)
    assert np.all(sd > 0)


def test_condition_returns_posterior(dataset):
    est = PriorTrainedGP(objective="nll", max_iters=10, seed=0).fit(dataset)
    name, X, y = next(iter(dataset.task_arrays()))
    post = est.condition(X[:8], y[:8])
    assert isinstance(post, PosteriorGp)
    mu, var = post.predict(X[8:12])
    assert mu.shape == (4,) and np.all(var >= 0)


def test_fit_deterministic(dataset):
    a = PriorTrainedGP(objective="nll", max_iters=12, seed=3).fit(dataset)
    b = PriorTrainedGP(objective="nll", max_iters=12, seed=3).fit(dataset)
    assert np.array_equal(a.params_.theta, b.params_.theta)


def test_single_task_gp_fit_predict(rng):
    true = const_params(1, ls=0.3, noise=0.01)
    X = rng.uniform(size=(25, 1))
    from prebo.gp import kernel_matrix
    K = kernel_matrix(true, X) + 0.01 * np.eye(25)
    y = np.linalg.cholesky(K) @ rng.normal(size=25)
    est = SingleTaskGP(max_iters=40, seed=0).fit(X, y)
    pred = est.predict(X)
    assert np.corrcoef(pred, y)[0, 1] > 0.9
    mu, sd = est.predict(X, return_std=True)
    assert np.all(sd >= 0)
    assert est.score(X, y) > 0.5


def test_single_task_gp_validates_shapes(rng):
    est = SingleTaskGP(max_iters=5, seed=0)
    with pytest.raises(Exception):
        est.fit(rng.uniform(size=(4, 1)), rng.normal(size=3))
