"""Gaussian process core: priors, conditioning, marginal likelihood.

A "model" throughout this module is anything exposing the trio
``mean_vector(X)``, ``kernel_matrix(X, X2=None)`` (noise-free) and
``noise_variance``.  ``GpParams`` vectors are handled directly; posterior
objects and the memory-based lookup model implement the same surface, so
every operation here composes over all of them.
"""

from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla

from . import kernels
from .exceptions import InputError, NumericalError
from .params import GpParams, MLP_MATERN, block_slices
from .validation import as_points, as_vector

# escalation ladder tried in order before giving up
JITTERS = (0.0, 1e-10, 1e-6, 1e-4)

LOG_2PI = np.log(2.0 * np.pi)


def chol_factor(K, jitters=JITTERS):
    """Lower Cholesky factor of K, adding diagonal jitter as needed.

    Returns (L, jitter_used).  Raises NumericalError carrying the attempted
    jitter levels once the ladder is exhausted.
    """
    K = np.asarray(K, dtype=float)
    # extreme hyperparameters can overflow the kernel into inf/NaN; classify
    # that as a numerical failure instead of letting LAPACK wrappers raise
    if not np.all(np.isfinite(K)):
        raise NumericalError("matrix contains non-finite entries")
    n = K.shape[0]
    attempted = []
    eye = np.eye(n)
    for j in jitters:
        attempted.append(j)
        try:
            L = sla.cholesky(K + j * eye if j else K, lower=True)
            return L, j
        except np.linalg.LinAlgError:
            continue
    raise NumericalError(
        f"Cholesky factorization failed after jitter escalation {attempted}",
        jitters=attempted,
    )


def features(params: GpParams, X):
    """Coordinates the kernel acts on: raw inputs, or the tanh feature layer."""
    if params.architecture == MLP_MATERN:
        W = params.block("feature_weights")
        b = params.block("feature_biases")
        return np.tanh(X @ W.T + b)
    return X


def mean_vector(model, X):
    """Prior mean at the rows of X."""
    if isinstance(model, GpParams):
        X = as_points(X, model.dim)
        if model.architecture == MLP_MATERN:
            Z = features(model, X)
            return Z @ model.block("mean_weights") + model.mean_const
        return np.full(X.shape[0], model.mean_const)
    return model.mean_vector(X)


def kernel_matrix(model, X, X2=None):
    """Noise-free kernel matrix k(X, X2); symmetric PSD when X2 is omitted."""
    if not isinstance(model, GpParams):
        return model.kernel_matrix(X, X2)
    X = as_points(X, model.dim)
    Z = features(model, X)
    if X2 is None:
        Z2 = Z
    else:
        Z2 = features(model, as_points(X2, model.dim, name="X2"))
    fam = kernels.get_family(model.kernel)
    r = kernels.scaled_distance(Z, Z2, model.lengthscales)
    if X2 is None:
        np.fill_diagonal(r, 0.0)
    K = kernels.kernel_value(fam, model.amplitude, r)
    if X2 is None:
        K = 0.5 * (K + K.T)
    return K


def kernel_diag(model, X):
    """Diagonal of kernel_matrix(model, X) without forming the matrix."""
    if isinstance(model, GpParams):
        X = as_points(X, model.dim)
        return np.full(X.shape[0], model.amplitude ** 2)
    if hasattr(model, "kernel_diag"):
        return model.kernel_diag(X)
    return np.diag(model.kernel_matrix(X))


def noise_variance(model) -> float:
    return float(model.noise_variance)


@dataclass(frozen=True)
class GaussianMarginal:
    """Mean vector and covariance of a finite-dimensional marginal."""

    mean: np.ndarray
    cov: np.ndarray

    def __post_init__(self):
        mean = np.asarray(self.mean, dtype=float).reshape(-1)
        cov = np.asarray(self.cov, dtype=float)
        if cov.shape != (mean.shape[0], mean.shape[0]):
            raise InputError(
                f"covariance shape {cov.shape} does not match mean length {mean.shape[0]}"
            )
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "cov", cov)


def prior_marginal(model, X) -> GaussianMarginal:
    """Marginal of observations at X: mean(X), k(X, X) + noise * I."""
    mu = mean_vector(model, X)
    K = kernel_matrix(model, X)
    return GaussianMarginal(mu, K + noise_variance(model) * np.eye(K.shape[0]))


class PosteriorGp:
    """GP conditioned on observations, with a cached factorization.

    Exposes the same model surface as the prior (posterior mean / kernel /
    unchanged noise), so it can be conditioned again or fed to any routine
    that accepts a model.
    """

    def __init__(self, model, X, y):
        self.model = model
        n = 0 if X is None else np.asarray(X).shape[0] if np.asarray(X).size else 0
        if n == 0:
            self.X = None
            self.y = None
            self._L = None
            self._alpha = None
            self.jitter = 0.0
            return
        dim = model.dim if isinstance(model, GpParams) else None
        X = as_points(X, dim)
        y = as_vector(y, X.shape[0])
        K = kernel_matrix(model, X) + noise_variance(model) * np.eye(X.shape[0])
        L, jit = chol_factor(K)
        self.X = X
        self.y = y
        self._L = L
        self._alpha = sla.cho_solve((L, True), y - mean_vector(model, X))
        self.jitter = jit

    @property
    def n_obs(self) -> int:
        return 0 if self.X is None else self.X.shape[0]

    @property
    def noise_variance(self) -> float:
        return noise_variance(self.model)

    def mean_vector(self, X):
        mu = mean_vector(self.model, X)
        if self.X is None:
            return mu
        Kxt = kernel_matrix(self.model, X, self.X)
        return mu + Kxt @ self._alpha

    def kernel_matrix(self, X, X2=None):
        K = kernel_matrix(self.model, X, X2)
        if self.X is None:
            return K
        Kxt = kernel_matrix(self.model, X, self.X)
        V = sla.solve_triangular(self._L, Kxt.T, lower=True)
        if X2 is None:
            V2 = V
        else:
            V2 = sla.solve_triangular(
                self._L, kernel_matrix(self.model, X2, self.X).T, lower=True
            )
        return K - V.T @ V2

    def kernel_diag(self, X):
        kd = kernel_diag(self.model, X)
        if self.X is None:
            return kd
        Kxt = kernel_matrix(self.model, X, self.X)
        V = sla.solve_triangular(self._L, Kxt.T, lower=True)
        return kd - np.sum(V * V, axis=0)

    def predict(self, X, include_noise=True):
        """Posterior mean and variance vectors at the rows of X."""
        mu = self.mean_vector(X)
        var = np.maximum(self.kernel_diag(X), 0.0)
        if include_noise:
            var = var + self.noise_variance
        return mu, var

    def marginal(self, X) -> GaussianMarginal:
        K = self.kernel_matrix(X)
        return GaussianMarginal(self.mean_vector(X), K + self.noise_variance * np.eye(K.shape[0]))


def condition(model, X, y) -> PosteriorGp:
    """Condition the model on observations (X, y); empty data returns the prior."""
    return PosteriorGp(model, X, y)


def log_marginal_likelihood(model, X, y) -> float:
    """Log density of y under the model's marginal at X (noise included)."""
    X = as_points(X, model.dim if isinstance(model, GpParams) else None)
    y = as_vector(y, X.shape[0])
    n = X.shape[0]
    if n == 0:
        return 0.0
    K = kernel_matrix(model, X) + noise_variance(model) * np.eye(n)
    L, _ = chol_factor(K)
    resid = y - mean_vector(model, X)
    w = sla.solve_triangular(L, resid, lower=True)
    logdet = 2.0 * np.sum(np.log(np.diag(L)))
    return float(-0.5 * (w @ w) - 0.5 * logdet - 0.5 * n * LOG_2PI)


class EmpiricalGp:
    """Memory-based model: every query snaps to the closest stored input.

    Mean and covariance queries return the stored values of the nearest
    stored input in Euclidean distance; ties resolve to the lowest index.
    With zero noise its marginal on the stored inputs reproduces the stored
    moments exactly.
    """

    def __init__(self, inputs, mean_values, cov_values, noise_variance=0.0):
        self.inputs = as_points(inputs)
        m = self.inputs.shape[0]
        self.mean_values = as_vector(mean_values, m, name="mean_values")
        cov = np.asarray(cov_values, dtype=float)
        if cov.shape != (m, m):
            raise InputError(f"cov_values must be ({m}, {m}), got {cov.shape}")
        self.cov_values = cov
        if noise_variance < 0:
            raise InputError("noise_variance must be >= 0")
        self.noise_variance = float(noise_variance)

    def _nearest(self, X):
        X = as_points(X, self.inputs.shape[1])
        d2 = (
            np.sum(X * X, axis=1)[:, None]
            + np.sum(self.inputs * self.inputs, axis=1)[None, :]
            - 2.0 * X @ self.inputs.T
        )
        return np.argmin(d2, axis=1)

    def mean_vector(self, X):
        return self.mean_values[self._nearest(X)]

    def kernel_matrix(self, X, X2=None):
        idx = self._nearest(X)
        idx2 = idx if X2 is None else self._nearest(X2)
        return self.cov_values[np.ix_(idx, idx2)]

    def kernel_diag(self, X):
        idx = self._nearest(X)
        return self.cov_values[idx, idx]


def empirical_gp(moments, noise_variance=0.0) -> EmpiricalGp:
    """Lookup model built from estimated matching-data moments."""
    return EmpiricalGp(moments.inputs, moments.mean, moments.cov, noise_variance)


# -- analytic derivative machinery ----------------------------------------
#
# Objectives over a marginal at fixed inputs X only ever need two pieces:
# the Jacobian of the mean vector and the contraction of a symmetric weight
# matrix G against the kernel-matrix derivative, both with respect to the
# flat parameter vector.  For any objective F with dF = 0.5*sum(G o dK) +
# g_mu . dmu these two assemble the full gradient.

def mean_jacobian(params: GpParams, X):
    """d mean_vector / d theta, shape (n, P)."""
    X = as_points(X, params.dim)
    n = X.shape[0]
    P = params.theta.shape[0]
    sl = block_slices(params.architecture, params.dim)
    J = np.zeros((n, P))
    J[:, sl["mean_const"]] = 1.0
    if params.architecture == MLP_MATERN:
        Z = features(params, X)
        w = params.block("mean_weights")
        J[:, sl["mean_weights"]] = Z
        sech2 = 1.0 - Z * Z  # tanh'(a) = 1 - tanh(a)^2
        # d mu_i / d W_hk = w_h * (1 - z_ih^2) * x_ik, flattened row-major over (h, k)
        JW = (w[None, :, None] * sech2[:, :, None]) * X[:, None, :]
        J[:, sl["feature_weights"]] = JW.reshape(n, -1)
        J[:, sl["feature_biases"]] = w[None, :] * sech2
    return J


def kernel_contraction(params: GpParams, X, G):
    """0.5 * sum_ij G_ij * d(K + noise*I)_ij / d theta, for symmetric G.

    Returns a flat (P,) vector in the parameter layout.
    """
    X = as_points(X, params.dim)
    G = np.asarray(G, dtype=float)
    P = params.theta.shape[0]
    sl = block_slices(params.architecture, params.dim)
    out = np.zeros(P)

    Z = features(params, X)
    ls = params.lengthscales
    amp2 = params.amplitude ** 2
    fam = kernels.get_family(params.kernel)
    r = kernels.scaled_distance(Z, Z, ls)
    np.fill_diagonal(r, 0.0)
    K0 = amp2 * fam.profile(r)
    S = amp2 * fam.slope_factor(r)  # dK0/dr = -S * r

    out[sl["log_amplitude"]] = np.sum(G * K0)
    out[sl["log_noise"]] = 0.5 * params.noise_variance * np.trace(G)

    h_dim = Z.shape[1]
    ls_grad = np.empty(h_dim)
    U = np.empty((h_dim, Z.shape[0])) if params.architecture == MLP_MATERN else None
    for h in range(h_dim):
        D = Z[:, h][:, None] - Z[:, h][None, :]
        SD = S * D
        ls_grad[h] = 0.5 * np.sum(G * SD * D) / ls[h] ** 2
        if U is not None:
            # E_h(i,j) = dK0_ij/dz_ih = -S_ij D_h(i,j) / ls_h^2
            U[h] = -np.sum(G * SD, axis=1) / ls[h] ** 2
    out[sl["log_lengthscales"]] = ls_grad

    if params.architecture == MLP_MATERN:
        sech2 = 1.0 - Z * Z
        # symmetry of G folds the two chain-rule halves into a factor 2,
        # cancelling the leading 0.5
        B = U * sech2.T  # (h, n)
        out[sl["feature_weights"]] = (B @ X).reshape(-1)
        out[sl["feature_biases"]] = np.sum(B, axis=1)
    return out
