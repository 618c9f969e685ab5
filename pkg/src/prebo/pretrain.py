"""Fitting the prior to a task collection.

Full-batch runs use a quasi-Newton method (L-BFGS-B with line search);
mini-batch runs use a decaying-step gradient loop with per-task point
subsampling.  Both are deterministic given the seed and never return
parameters worse than the seeded initialization under the full objective.
"""

import time
from dataclasses import dataclass, asdict

import numpy as np
import scipy.optimize as sopt

from .exceptions import (
    InitializationError,
    InputError,
    NumericalError,
    ParameterError,
    ValidationError,
)
from .objectives import (
    CombinedObjective,
    KlObjective,
    NllObjective,
    _task_list,
    finite_difference_gradient,
)
from .params import GpParams, random_params

OBJECTIVES = ("nll", "kl", "nll_plus_kl")
GRADIENT_MODES = ("analytic", "finite_difference")

_OBJECTIVE_ALIASES = {"nllkl": "nll_plus_kl", "nll+kl": "nll_plus_kl"}


@dataclass
class TrainConfig:
    """Knobs for ``pretrain``; ``batch_size=None`` means full batch."""

    objective: str = "nll"
    lam: float = 10.0
    max_iters: int = 200
    batch_size: "int | None" = None
    seed: int = 0
    gradient_mode: str = "analytic"
    convergence_tol: float = 1e-8

    def __post_init__(self):
        self.objective = _OBJECTIVE_ALIASES.get(self.objective, self.objective)
        if self.objective not in OBJECTIVES:
            raise ValidationError(
                f"objective must be one of {OBJECTIVES}, got {self.objective!r}"
            )
        if self.gradient_mode not in GRADIENT_MODES:
            raise ValidationError(
                f"gradient_mode must be one of {GRADIENT_MODES}, got {self.gradient_mode!r}"
            )
        if self.lam < 0:
            raise ValidationError(f"lambda must be >= 0, got {self.lam}")
        if int(self.max_iters) < 1:
            raise ValidationError(f"max_iters must be >= 1, got {self.max_iters}")
        self.max_iters = int(self.max_iters)
        if self.batch_size is not None:
            if str(self.batch_size) == "full":
                self.batch_size = None
            else:
                self.batch_size = int(self.batch_size)
                if self.batch_size < 1:
                    raise ValidationError("batch_size must be >= 1 or None")
        if not (self.convergence_tol > 0):
            raise ValidationError("convergence_tol must be positive")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["lambda"] = d.pop("lam")
        d["batch_size"] = "full" if self.batch_size is None else self.batch_size
        return d

    @classmethod
    def from_dict(cls, d) -> "TrainConfig":
        known = {
            "objective", "lambda", "lam", "max_iters", "batch_size",
            "seed", "gradient_mode", "convergence_tol",
        }
        unknown = set(d) - known
        if unknown:
            raise ValidationError(f"unknown training config keys: {sorted(unknown)}")
        kw = dict(d)
        if "lambda" in kw:
            kw["lam"] = kw.pop("lambda")
        if kw.get("batch_size") == "full":
            kw["batch_size"] = None
        return cls(**kw)


def build_objective(dataset, architecture, config, matching_tol=1e-9,
                    kernel="matern32", n_workers=1):
    """Assemble the configured objective object over the dataset."""
    tasks = _task_list(dataset)
    dim = tasks[0][1].shape[1]
    nll = NllObjective(tasks, architecture, dim, kernel, n_workers=n_workers)
    if config.objective == "nll":
        return nll, dim
    from .data import extract_matching  # local import keeps layering one-way

    moments = extract_matching(tasks, tol=matching_tol)
    kl = KlObjective(moments, architecture, dim, kernel)
    if config.objective == "kl":
        return kl, dim
    return CombinedObjective(nll, kl, config.lam), dim


def _all_y_mean(tasks) -> float:
    return float(np.mean(np.concatenate([y for _, _, y in tasks])))


def _seeded_init(objective, architecture, dim, config, tasks, kernel):
    """Draw initializations until the objective is finite (at most 10 draws)."""
    rng = np.random.default_rng(config.seed)
    y_mean = _all_y_mean(tasks)
    last_exc = None
    for _ in range(10):
        cand = random_params(architecture, dim, rng, y_mean=y_mean, kernel=kernel)
        try:
            v = objective.value(cand.theta)
        except NumericalError as exc:
            last_exc = exc
            continue
        if np.isfinite(v):
            return cand, float(v)
        last_exc = None
    raise InitializationError(
        f"objective not finite at any of 10 seeded initializations"
        f"{f' (last error: {last_exc})' if last_exc else ''}"
    )


# parameter vectors probed by an optimizer can be degenerate (underflowed
# lengthscales, non-finite entries), not just ill-conditioned
_EVAL_ERRORS = (NumericalError, InputError, ParameterError)


def _value_and_grad(objective, theta, gradient_mode):
    if gradient_mode == "analytic":
        return objective.value_and_gradient(theta)
    v = objective.value(theta)
    g = finite_difference_gradient(objective.value, theta)
    return v, g


def pretrain(dataset, architecture, config: TrainConfig, matching_tol=1e-9,
             init: "GpParams | None" = None, kernel="matern32",
             on_iteration=None, n_workers=1) -> GpParams:
    """Fit prior parameters to the task collection under the configured objective.

    ``on_iteration(i, objective, grad_norm, wall_ms)`` is called once per
    optimizer iteration when given.  Returns parameters whose full objective
    value is never above the value at the (seeded or supplied) initialization.
    """
    objective, dim = build_objective(
        dataset, architecture, config, matching_tol, kernel, n_workers
    )
    tasks = _task_list(dataset)
    if config.batch_size is not None:
        biggest = max(X.shape[0] for _, X, _ in tasks)
        if config.batch_size > biggest:
            raise ValidationError(
                f"batch_size {config.batch_size} exceeds the largest task size {biggest}"
            )

    if init is not None:
        if init.architecture != architecture or init.dim != dim:
            raise InputError("init params do not match the requested architecture/dim")
        x0 = init.theta.copy()
        f0 = objective.value(x0)
        if not np.isfinite(f0):
            raise InitializationError("objective not finite at the supplied init")
        template = init
    else:
        template, f0 = _seeded_init(objective, architecture, dim, config, tasks, kernel)
        x0 = template.theta.copy()

    if config.batch_size is None:
        theta, _ = _run_lbfgs(objective, x0, f0, config, on_iteration)
    else:
        theta = _run_sgd(objective, x0, f0, config, on_iteration)
    return template.with_theta(theta)


def _run_lbfgs(objective, x0, f0, config, on_iteration):
    t_prev = time.perf_counter()
    it = [0]

    def fun(theta):
        # line-search probes can reach absurd scales; report such points as
        # +inf instead of warning or handing the optimizer non-finite numbers
        try:
            with np.errstate(over="ignore", invalid="ignore"):
                v, g = _value_and_grad(objective, theta, config.gradient_mode)
        except _EVAL_ERRORS:
            return np.inf, np.zeros_like(theta)
        if not (np.isfinite(v) and np.all(np.isfinite(g))):
            return np.inf, np.zeros_like(theta)
        return v, g

    def callback(xk):
        it[0] += 1
        if on_iteration is not None:
            nonlocal t_prev
            v, g = fun(xk)
            now = time.perf_counter()
            on_iteration(it[0], float(v), float(np.linalg.norm(g)), (now - t_prev) * 1e3)
            t_prev = now

    res = sopt.minimize(
        fun, x0, jac=True, method="L-BFGS-B",
        options={
            "maxiter": config.max_iters,
            "ftol": config.convergence_tol,
            "gtol": 1e-12,
        },
        callback=callback,
    )
    if np.isfinite(res.fun) and res.fun <= f0:
        return np.asarray(res.x, dtype=float), float(res.fun)
    return x0, f0


def _run_sgd(objective, x0, f0, config, on_iteration):
    rng = np.random.default_rng(np.random.SeedSequence([int(config.seed), 1]))
    theta = x0.copy()
    best_theta, best_val = x0.copy(), f0
    prev_checkpoint = f0
    # constant number of full evaluations regardless of iteration count
    n_checks = min(10, config.max_iters)
    check_at = set(
        int(round(s)) for s in np.linspace(1, config.max_iters, n_checks)
    )
    lr0 = 0.05
    max_step = 1.0
    decay = max(1.0, config.max_iters / 10.0)
    t_prev = time.perf_counter()
    prev = theta.copy()
    for k in range(1, config.max_iters + 1):
        batch = objective.batch(rng, config.batch_size)
        try:
            v, g = _value_and_grad(batch, theta, config.gradient_mode)
            ok = np.isfinite(v) and bool(np.all(np.isfinite(g)))
        except _EVAL_ERRORS:
            ok = False
        if not ok:
            # undo the step that got us here and try smaller ones
            theta = prev.copy()
            lr0 *= 0.5
            continue
        prev = theta.copy()
        lr = lr0 / (1.0 + (k - 1) / decay)
        step = lr * g
        norm = float(np.linalg.norm(step))
        if norm > max_step:
            step *= max_step / norm
        theta = theta - step
        if on_iteration is not None:
            now = time.perf_counter()
            on_iteration(k, float(v), float(np.linalg.norm(g)), (now - t_prev) * 1e3)
            t_prev = now
        if k in check_at:
            try:
                full = objective.value(theta)
            except _EVAL_ERRORS:
                continue
            if np.isfinite(full) and full < best_val:
                best_theta, best_val = theta.copy(), float(full)
            if abs(prev_checkpoint - full) <= config.convergence_tol * max(1.0, abs(prev_checkpoint)):
                break
            prev_checkpoint = full
    return best_theta


def fit_type2_ml(X, y, architecture, seed=0, max_iters=100, kernel="matern32",
                 init: "GpParams | None" = None) -> GpParams:
    """Maximum-likelihood fit of a single task's hyperparameters."""
    config = TrainConfig(objective="nll", max_iters=max_iters, seed=seed)
    return pretrain([(X, y)], architecture, config, init=init, kernel=kernel)
