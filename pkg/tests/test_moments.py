import numpy as np
import pytest

from prebo.exceptions import InputError
from prebo.moments import MatchingMoments, estimate_moments


def test_identical_columns_give_zero_covariance(rng):
    X = rng.uniform(size=(4, 2))
    col = rng.normal(size=4)
    # power-of-two column count keeps the column mean exact in floating point
    Y = np.tile(col[:, None], (1, 8))
    mom = estimate_moments(X, Y)
    np.testing.assert_array_equal(mom.cov, np.zeros((4, 4)))
    np.testing.assert_allclose(mom.mean, col)


def test_two_sample_hand_case_biased():
    mom = estimate_moments(np.array([[0.0]]), np.array([[0.0, 2.0]]))
    np.testing.assert_allclose(mom.mean, [1.0])
    np.testing.assert_allclose(mom.cov, [[1.0]])


def test_two_sample_hand_case_unbiased():
    mom = estimate_moments(np.array([[0.0]]), np.array([[0.0, 2.0]]), unbiased=True)
    np.testing.assert_allclose(mom.cov, [[2.0]])


def test_moments_recomputable_from_observations(rng):
    X = rng.uniform(size=(5, 3))
    Y = rng.normal(size=(5, 12))
    mom = estimate_moments(X, Y)
    mu = Y.mean(axis=1)
    dev = Y - mu[:, None]
    np.testing.assert_allclose(mom.mean, mu, atol=1e-12)
    np.testing.assert_allclose(mom.cov, dev @ dev.T / 12, atol=1e-12)


def test_covariance_symmetric_psd(rng):
    X = rng.uniform(size=(6, 2))
    Y = rng.normal(size=(6, 9))
    mom = estimate_moments(X, Y)
    assert np.array_equal(mom.cov, mom.cov.T)
    assert np.linalg.eigvalsh(mom.cov).min() >= -1e-8


def test_subset_selects_rows(rng):
    X = rng.uniform(size=(5, 2))
    Y = rng.normal(size=(5, 8))
    mom = estimate_moments(X, Y)
    sub = mom.subset([0, 3])
    np.testing.assert_array_equal(sub.inputs, X[[0, 3]])
    np.testing.assert_array_equal(sub.mean, mom.mean[[0, 3]])
    np.testing.assert_array_equal(sub.cov, mom.cov[np.ix_([0, 3], [0, 3])])
    assert sub.n_tasks == 8


def test_unbiased_needs_two_tasks():
    with pytest.raises(InputError):
        estimate_moments(np.array([[0.0]]), np.array([[1.0]]), unbiased=True)


def test_shape_mismatch_rejected(rng):
    with pytest.raises(InputError):
        estimate_moments(rng.uniform(size=(4, 2)), rng.normal(size=(3, 5)))


def test_n_inputs_property(rng):
    mom = estimate_moments(rng.uniform(size=(7, 1)), rng.normal(size=(7, 4)))
    assert mom.n_inputs == 7
    assert isinstance(mom, MatchingMoments)
