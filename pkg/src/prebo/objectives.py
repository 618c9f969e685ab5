"""Pre-training objectives over a task collection and their gradients.

Three fitting criteria are provided: the summed negative log marginal
likelihood over tasks, the KL divergence from the sample moments of
matching data to the model marginal at the same inputs, and their
weighted combination.  Each has a hand-derived analytic gradient in the
flat parameter layout, checkable against central finite differences.
"""

from concurrent.futures import ThreadPoolExecutor

import numpy as np
import scipy.linalg as sla

from . import gp
from .exceptions import (
    DegenerateMomentsError,
    InputError,
    NumericalError,
)
from .params import GpParams
from .validation import as_points, as_vector

LOG_2PI = gp.LOG_2PI

# eigenvalues below this fraction of the largest count as numerically zero
RANK_CUTOFF = 1e-10


def _task_list(dataset):
    """Normalize a dataset-like object to [(name, X, y), ...]."""
    if hasattr(dataset, "task_arrays"):
        items = dataset.task_arrays()
    else:
        items = list(dataset)
    if not items:
        raise InputError("dataset has no tasks")
    norm = []
    for i, item in enumerate(items):
        if len(item) == 3:
            name, X, y = item
        elif len(item) == 2:
            X, y = item
            name = f"task-{i}"
        else:
            raise InputError("each task must be (X, y) or (name, X, y)")
        X = as_points(X)
        y = as_vector(y, X.shape[0])
        if X.shape[0] == 0:
            raise InputError(f"task {name!r} has no observations")
        norm.append((str(name), X, y))
    d = norm[0][1].shape[1]
    for name, X, _ in norm:
        if X.shape[1] != d:
            raise InputError(f"task {name!r} has dim {X.shape[1]}, expected {d}")
    return norm


# -- per-task NLL ----------------------------------------------------------

def _nll_term(params, X, y, want_grad):
    n = X.shape[0]
    K = gp.kernel_matrix(params, X) + params.noise_variance * np.eye(n)
    L, _ = gp.chol_factor(K)
    resid = y - gp.mean_vector(params, X)
    w = sla.solve_triangular(L, resid, lower=True)
    with np.errstate(over="ignore"):  # inf is caught by the caller's finite check
        value = 0.5 * float(w @ w) + float(np.sum(np.log(np.diag(L)))) + 0.5 * n * LOG_2PI
    if not want_grad:
        return value, None
    alpha = sla.cho_solve((L, True), resid)
    Kinv = sla.cho_solve((L, True), np.eye(n))
    G = Kinv - np.outer(alpha, alpha)
    grad = gp.kernel_contraction(params, X, G) - gp.mean_jacobian(params, X).T @ alpha
    return value, grad


def nll_objective(params: GpParams, dataset) -> float:
    """Sum over tasks of the negative log marginal likelihood."""
    total = 0.0
    for name, X, y in _task_list(dataset):
        try:
            value, _ = _nll_term(params, X, y, want_grad=False)
        except NumericalError as exc:
            raise NumericalError(f"task {name!r}: {exc}", jitters=exc.jitters) from exc
        total += value
    return float(total)


def nll_gradient(params: GpParams, dataset) -> np.ndarray:
    grad = np.zeros_like(params.theta)
    for name, X, y in _task_list(dataset):
        try:
            _, g = _nll_term(params, X, y, want_grad=True)
        except NumericalError as exc:
            raise NumericalError(f"task {name!r}: {exc}", jitters=exc.jitters) from exc
        grad += g
    return grad


# -- KL family -------------------------------------------------------------

def covariance_spectrum(cov, cutoff=RANK_CUTOFF):
    """Eigenvalues (ascending) and numerical rank of a sample covariance."""
    evals = sla.eigh(np.asarray(cov, dtype=float), eigvals_only=True)
    lam_max = float(evals[-1])
    if lam_max <= 0.0:
        raise DegenerateMomentsError(
            f"sample covariance has no eigenvalue above the rank cutoff "
            f"{cutoff} * max; largest eigenvalue is {lam_max}"
        )
    rank = int(np.sum(evals > cutoff * lam_max))
    if rank == 0:
        raise DegenerateMomentsError(
            f"sample covariance has numerical rank 0 at cutoff {cutoff}"
        )
    return evals, rank


def _kl_pieces(params, moments, epsilon=None, want_grad=False):
    """Shared terms: trace, quadratic, logdet(K), and optionally gradient parts."""
    inputs = moments.inputs
    marg = gp.prior_marginal(params, inputs)
    m = inputs.shape[0]
    K = marg.cov
    Kt = moments.cov
    if epsilon is not None:
        K = K + epsilon * np.eye(m)
        Kt = Kt + epsilon * np.eye(m)
    L, _ = gp.chol_factor(K)
    KinvKt = sla.cho_solve((L, True), Kt)
    tr = float(np.trace(KinvKt))
    delta = marg.mean - moments.mean
    beta = sla.cho_solve((L, True), delta)
    quad = float(delta @ beta)
    logdet_k = 2.0 * float(np.sum(np.log(np.diag(L))))
    if not want_grad:
        return tr, quad, logdet_k, None
    Kinv = sla.cho_solve((L, True), np.eye(m))
    G = Kinv - KinvKt @ Kinv - np.outer(beta, beta)
    G = 0.5 * (G + G.T)
    grad = gp.kernel_contraction(params, inputs, G) + gp.mean_jacobian(params, inputs).T @ beta
    return tr, quad, logdet_k, grad


def pseudo_kl(params: GpParams, moments, cutoff=RANK_CUTOFF) -> float:
    """KL surrogate that stays defined when the sample covariance is singular.

    Restricts the divergence to the span of the covariance's numerical-rank
    factorization; coincides with the exact KL when the covariance has full
    rank, and may be negative otherwise.
    """
    evals, rank = covariance_spectrum(moments.cov, cutoff)
    m = moments.n_inputs
    tr, quad, logdet_k, _ = _kl_pieces(params, moments)
    logdet_factor = float(np.sum(np.log(evals[m - rank:])))
    return 0.5 * (tr + quad + logdet_k - logdet_factor - rank + (m - rank) * LOG_2PI)


def kl_objective(
    params: GpParams,
    moments,
    minimization_form=False,
    degenerate="pseudo",
    epsilon=1e-6,
    cutoff=RANK_CUTOFF,
) -> float:
    """Divergence from the sample moments to the model marginal.

    ``minimization_form=True`` drops the parameter-independent terms and
    returns 0.5 * (trace + quadratic + logdet(K)), which differs from the
    full objective by a constant in the parameters.  Rank-deficient sample
    covariances dispatch to ``pseudo_kl`` by default, or to an
    epsilon-on-the-diagonal regularization with ``degenerate="epsilon"``.
    """
    if minimization_form:
        tr, quad, logdet_k, _ = _kl_pieces(params, moments)
        return 0.5 * (tr + quad + logdet_k)
    evals, rank = covariance_spectrum(moments.cov, cutoff)
    m = moments.n_inputs
    if rank == m:
        tr, quad, logdet_k, _ = _kl_pieces(params, moments)
        logdet_kt = float(np.sum(np.log(evals)))
        return 0.5 * (tr + quad + logdet_k - logdet_kt - m)
    if degenerate == "pseudo":
        return pseudo_kl(params, moments, cutoff)
    if degenerate == "epsilon":
        tr, quad, logdet_k, _ = _kl_pieces(params, moments, epsilon=epsilon)
        logdet_kt = float(np.sum(np.log(evals + epsilon)))
        return 0.5 * (tr + quad + logdet_k - logdet_kt - m)
    raise InputError(f"degenerate must be 'pseudo' or 'epsilon', got {degenerate!r}")


def kl_gradient(
    params: GpParams,
    moments,
    minimization_form=False,
    degenerate="pseudo",
    epsilon=1e-6,
    cutoff=RANK_CUTOFF,
) -> np.ndarray:
    """Gradient of kl_objective; identical across the non-epsilon variants
    because they differ only by parameter-independent constants."""
    eps = None
    if not minimization_form:
        _, rank = covariance_spectrum(moments.cov, cutoff)
        if rank < moments.n_inputs and degenerate == "epsilon":
            eps = epsilon
    _, _, _, grad = _kl_pieces(params, moments, epsilon=eps, want_grad=True)
    return grad


def combined_objective(params: GpParams, dataset, moments, lam) -> float:
    """NLL plus lam times the KL term (MAP-style fitting criterion)."""
    if lam < 0:
        raise InputError(f"lambda must be >= 0, got {lam}")
    return nll_objective(params, dataset) + lam * kl_objective(params, moments)


def combined_gradient(params: GpParams, dataset, moments, lam) -> np.ndarray:
    if lam < 0:
        raise InputError(f"lambda must be >= 0, got {lam}")
    return nll_gradient(params, dataset) + lam * kl_gradient(params, moments)


# -- gradient plumbing -----------------------------------------------------

def finite_difference_gradient(fun, theta, h_scale=1e-5) -> np.ndarray:
    """Central differences with per-coordinate step h_scale * (1 + |theta_i|)."""
    theta = np.asarray(theta, dtype=float).reshape(-1)
    grad = np.empty_like(theta)
    for i in range(theta.shape[0]):
        h = h_scale * (1.0 + abs(theta[i]))
        up = theta.copy()
        up[i] += h
        dn = theta.copy()
        dn[i] -= h
        f_up = fun(up)
        f_dn = fun(dn)
        if not (np.isfinite(f_up) and np.isfinite(f_dn)):
            raise NumericalError(
                f"non-finite objective while differencing coordinate {i}"
            )
        grad[i] = (f_up - f_dn) / (2.0 * h)
    return grad


def objective_gradient(objective, theta, mode="analytic") -> np.ndarray:
    """Gradient of an objective at theta, in the flat parameter layout.

    ``objective`` is either one of the objective classes below (analytic
    mode uses its hand-derived gradient) or any callable of theta
    (finite-difference mode only).
    """
    if mode == "analytic":
        if not hasattr(objective, "gradient"):
            raise InputError("analytic mode needs an objective with a gradient method")
        return objective.gradient(theta)
    if mode == "finite_difference":
        fun = objective.value if hasattr(objective, "value") else objective
        return finite_difference_gradient(fun, theta)
    raise InputError(f"mode must be 'analytic' or 'finite_difference', got {mode!r}")


# -- objective objects for the optimizer ------------------------------------

class NllObjective:
    """Summed task NLL as a function of the flat parameter vector.

    Per-task terms are independent; with ``n_workers > 1`` they are
    evaluated concurrently and summed in task order so the result does not
    depend on scheduling.
    """

    def __init__(self, dataset, architecture, dim, kernel="matern32", n_workers=1):
        self.tasks = _task_list(dataset)
        self.architecture = architecture
        self.dim = dim
        self.kernel = kernel
        self.n_workers = max(1, int(n_workers))

    def _params(self, theta):
        return GpParams(self.architecture, self.dim, theta, self.kernel)

    def _terms(self, theta, want_grad):
        params = self._params(theta)

        def one(task):
            name, X, y = task
            try:
                return _nll_term(params, X, y, want_grad)
            except NumericalError as exc:
                raise NumericalError(f"task {name!r}: {exc}", jitters=exc.jitters) from exc

        if self.n_workers == 1 or len(self.tasks) == 1:
            return [one(t) for t in self.tasks]
        with ThreadPoolExecutor(max_workers=self.n_workers) as pool:
            return list(pool.map(one, self.tasks))

    def value(self, theta) -> float:
        return float(sum(v for v, _ in self._terms(theta, want_grad=False)))

    def value_and_gradient(self, theta):
        terms = self._terms(theta, want_grad=True)
        value = float(sum(v for v, _ in terms))
        grad = np.zeros(len(np.asarray(theta).reshape(-1)))
        for _, g in terms:
            grad += g
        return value, grad

    def gradient(self, theta) -> np.ndarray:
        return self.value_and_gradient(theta)[1]

    def batch(self, rng, batch_size) -> "NllObjective":
        """Subsample up to batch_size points per task (without replacement)."""
        sub = []
        for name, X, y in self.tasks:
            n = X.shape[0]
            if batch_size < n:
                idx = np.sort(rng.choice(n, size=batch_size, replace=False))
                sub.append((name, X[idx], y[idx]))
            else:
                sub.append((name, X, y))
        out = NllObjective.__new__(NllObjective)
        out.tasks = sub
        out.architecture = self.architecture
        out.dim = self.dim
        out.kernel = self.kernel
        out.n_workers = self.n_workers
        return out


class KlObjective:
    """Moment-matching divergence as a function of the flat vector."""

    def __init__(self, moments, architecture, dim, kernel="matern32",
                 minimization_form=False, degenerate="pseudo", epsilon=1e-6):
        self.moments = moments
        self.architecture = architecture
        self.dim = dim
        self.kernel = kernel
        self.minimization_form = minimization_form
        self.degenerate = degenerate
        self.epsilon = epsilon

    def _params(self, theta):
        return GpParams(self.architecture, self.dim, theta, self.kernel)

    def value(self, theta) -> float:
        return kl_objective(
            self._params(theta), self.moments,
            minimization_form=self.minimization_form,
            degenerate=self.degenerate, epsilon=self.epsilon,
        )

    def gradient(self, theta) -> np.ndarray:
        return kl_gradient(
            self._params(theta), self.moments,
            minimization_form=self.minimization_form,
            degenerate=self.degenerate, epsilon=self.epsilon,
        )

    def value_and_gradient(self, theta):
        return self.value(theta), self.gradient(theta)

    def batch(self, rng, batch_size) -> "KlObjective":
        m = self.moments.n_inputs
        if batch_size >= m:
            return self
        idx = np.sort(rng.choice(m, size=batch_size, replace=False))
        return KlObjective(
            self.moments.subset(idx), self.architecture, self.dim, self.kernel,
            self.minimization_form, self.degenerate, self.epsilon,
        )


class CombinedObjective:
    """nll + lam * kl, batched jointly in mini-batch mode."""

    def __init__(self, nll, kl, lam):
        if lam < 0:
            raise InputError(f"lambda must be >= 0, got {lam}")
        self.nll = nll
        self.kl = kl
        self.lam = float(lam)

    def value(self, theta) -> float:
        return self.nll.value(theta) + self.lam * self.kl.value(theta)

    def gradient(self, theta) -> np.ndarray:
        return self.nll.gradient(theta) + self.lam * self.kl.gradient(theta)

    def value_and_gradient(self, theta):
        nv, ng = self.nll.value_and_gradient(theta)
        kv, kg = self.kl.value_and_gradient(theta)
        return nv + self.lam * kv, ng + self.lam * kg

    def batch(self, rng, batch_size) -> "CombinedObjective":
        return CombinedObjective(
            self.nll.batch(rng, batch_size), self.kl.batch(rng, batch_size), self.lam
        )
