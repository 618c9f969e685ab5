"""Estimator front-ends following scikit-learn conventions.

``PriorTrainedGP`` learns prior parameters from a collection of tasks and
then predicts (or conditions) with that prior frozen.  ``SingleTaskGP`` is
the classic regressor: maximum-likelihood hyperparameters on one task's
data, posterior predictions at new points.
"""

import numpy as np
from sklearn.base import BaseEstimator, RegressorMixin
from sklearn.utils.validation import check_is_fitted

from . import gp
from .params import CONST_MATERN
from .pretrain import TrainConfig, build_objective, fit_type2_ml, pretrain
from .validation import as_points, as_vector


class PriorTrainedGP(BaseEstimator):
    """Gaussian process whose prior is fit on a collection of related tasks.

    Parameters
    ----------
    architecture : str
        "const-matern" or "mlp8-matern".
    objective : str
        "nll", "kl", or "nll_plus_kl".
    lam : float
        Weight of the KL term in the combined objective.
    max_iters, batch_size, seed, gradient_mode, convergence_tol
        Forwarded to the training configuration; ``batch_size=None`` runs
        full-batch quasi-Newton, an integer runs the mini-batch loop.
    matching_tol : float
        Matching-input tolerance (warped space) for the KL objectives.

    Attributes
    ----------
    params_ : GpParams
        The fitted flat parameter vector.
    objective_value_ : float
        Full objective at the fitted parameters.
    history_ : list of (iter, objective, grad_norm, wall_ms) tuples.
    """

    def __init__(self, architecture=CONST_MATERN, objective="nll", lam=10.0,
                 max_iters=200, batch_size=None, seed=0,
                 gradient_mode="analytic", convergence_tol=1e-8,
                 matching_tol=1e-9, kernel="matern32"):
        self.architecture = architecture
        self.objective = objective
        self.lam = lam
        self.max_iters = max_iters
        self.batch_size = batch_size
        self.seed = seed
        self.gradient_mode = gradient_mode
        self.convergence_tol = convergence_tol
        self.matching_tol = matching_tol
        self.kernel = kernel

    def _config(self) -> TrainConfig:
        return TrainConfig(
            objective=self.objective, lam=self.lam, max_iters=self.max_iters,
            batch_size=self.batch_size, seed=self.seed,
            gradient_mode=self.gradient_mode, convergence_tol=self.convergence_tol,
        )

    def fit(self, X, y=None):
        """Fit the prior on a task collection.

        X is a MultiTaskDataset or a sequence of (X_i, y_i) or
        (name, X_i, y_i) task tuples; y is ignored (present for API
        compatibility).
        """
        config = self._config()
        history = []

        def log_iter(i, value, gnorm, ms):
            history.append((i, value, gnorm, ms))

        self.params_ = pretrain(
            X, self.architecture, config,
            matching_tol=self.matching_tol, kernel=self.kernel,
            on_iteration=log_iter,
        )
        objective, _ = build_objective(
            X, self.architecture, config, self.matching_tol, self.kernel
        )
        self.objective_value_ = float(objective.value(self.params_.theta))
        self.history_ = history
        self.n_iter_ = len(history)
        return self

    def predict(self, X, return_std=False):
        """Prior predictions at X (no conditioning data)."""
        check_is_fitted(self, "params_")
        X = as_points(X, self.params_.dim)
        mu = gp.mean_vector(self.params_, X)
        if not return_std:
            return mu
        var = gp.kernel_diag(self.params_, X) + self.params_.noise_variance
        return mu, np.sqrt(np.maximum(var, 0.0))

    def condition(self, X, y) -> gp.PosteriorGp:
        """Posterior under the frozen prior given observations (X, y)."""
        check_is_fitted(self, "params_")
        return gp.condition(self.params_, X, y)

    def log_marginal_likelihood(self, X, y) -> float:
        check_is_fitted(self, "params_")
        return gp.log_marginal_likelihood(self.params_, X, y)


class SingleTaskGP(BaseEstimator, RegressorMixin):
    """Plain GP regressor: type-II maximum likelihood on a single task."""

    def __init__(self, architecture=CONST_MATERN, seed=0, max_iters=100,
                 kernel="matern32"):
        self.architecture = architecture
        self.seed = seed
        self.max_iters = max_iters
        self.kernel = kernel

    def fit(self, X, y):
        X = as_points(X)
        y = as_vector(y, X.shape[0])
        self.params_ = fit_type2_ml(
            X, y, self.architecture, seed=self.seed,
            max_iters=self.max_iters, kernel=self.kernel,
        )
        self.posterior_ = gp.condition(self.params_, X, y)
        return self

    def predict(self, X, return_std=False, include_noise=True):
        check_is_fitted(self, "params_")
        X = as_points(X, self.params_.dim)
        mu, var = self.posterior_.predict(X, include_noise=include_noise)
        if not return_std:
            return mu
        return mu, np.sqrt(np.maximum(var, 0.0))

    def log_marginal_likelihood(self, X, y) -> float:
        check_is_fitted(self, "params_")
        return gp.log_marginal_likelihood(self.params_, X, y)
