"""Sequential optimization loops over a frozen prior, plus baselines.

The pre-trained loop never re-fits its model; the single-task baseline
re-fits by maximum likelihood at every step; random search just samples.
All loops emit a BoTrace whose CSV form is byte-deterministic for a given
seed.
"""

import logging
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla

from . import gp
from .acquisition import AcquisitionSpec, maximize
from .bounds import RegretBoundInputs, regret_bound_pi, regret_bound_ucb  # noqa: F401
from .exceptions import DomainError, InitializationError, InputError, NumericalError
from .params import GpParams, random_params
from .pretrain import fit_type2_ml
from .validation import as_points, as_vector

log = logging.getLogger(__name__)


@dataclass
class BoStep:
    t: int
    x: np.ndarray
    y: float
    acq_value: float
    f_true: "float | None" = None


@dataclass
class BoTrace:
    """One optimization run: the visited points in order, plus metadata."""

    method: str
    seed: int
    steps: "list[BoStep]" = field(default_factory=list)
    f_max: "float | None" = None

    def __len__(self):
        return len(self.steps)

    @property
    def xs(self) -> np.ndarray:
        return np.array([s.x for s in self.steps], dtype=float)

    @property
    def ys(self) -> np.ndarray:
        return np.array([s.y for s in self.steps], dtype=float)

    @property
    def best_so_far(self) -> np.ndarray:
        return np.maximum.accumulate(self.ys)

    @property
    def recommendation_index(self) -> int:
        if not self.steps:
            raise InputError("empty trace has no recommendation")
        return int(np.argmax(self.ys))  # earliest index on ties

    @property
    def recommendation(self) -> np.ndarray:
        return self.steps[self.recommendation_index].x

    @property
    def regret_trace(self) -> np.ndarray:
        if self.f_max is None:
            raise InputError("regret trace needs a known maximum")
        return self.f_max - self.best_so_far


def simple_regret(trace: BoTrace, f_max=None) -> float:
    """Final-recommendation regret, using the noiseless value when recorded."""
    if f_max is None:
        f_max = trace.f_max
    if f_max is None:
        raise InputError("simple regret needs a known maximum")
    i = trace.recommendation_index
    step = trace.steps[i]
    value = step.y if step.f_true is None else step.f_true
    return float(f_max) - float(value)


# -- oracles ----------------------------------------------------------------

class TableOracle:
    """Finite lookup table of noiseless values over fixed candidate points."""

    def __init__(self, candidates, values, name="table"):
        self.candidates = as_points(candidates)
        self.values = as_vector(values, self.candidates.shape[0], name="values")
        if self.candidates.shape[0] == 0:
            raise InputError("table oracle needs at least one candidate")
        self.name = name

    @property
    def dim(self) -> int:
        return self.candidates.shape[1]

    @property
    def f_max(self) -> float:
        return float(np.max(self.values))

    def observe(self, index) -> "tuple[float, float]":
        v = float(self.values[int(index)])
        return v, v  # observed, noiseless


class GpSampleOracle:
    """A function drawn lazily from a known prior, observed with its noise.

    Values at queried points are sampled by exact sequential conditioning
    on all previously drawn function values, so the whole run is one
    coherent draw from the prior.
    """

    def __init__(self, params: GpParams, seed=0):
        self.params = params
        self.rng = np.random.default_rng(np.random.SeedSequence([int(seed), 977]))
        self._X = np.zeros((0, params.dim))
        self._f = np.zeros(0)

    @property
    def dim(self) -> int:
        return self.params.dim

    f_max = None

    def observe(self, x) -> "tuple[float, float]":
        x = as_points(x, self.params.dim)
        mu = float(gp.mean_vector(self.params, x)[0])
        kxx = float(gp.kernel_diag(self.params, x)[0])
        if self._X.shape[0]:
            Kts = gp.kernel_matrix(self.params, self._X) + 1e-10 * np.eye(self._X.shape[0])
            L, _ = gp.chol_factor(Kts)
            kxt = gp.kernel_matrix(self.params, x, self._X)[0]
            w = sla.solve_triangular(L, kxt, lower=True)
            resid = sla.solve_triangular(
                L, self._f - gp.mean_vector(self.params, self._X), lower=True
            )
            mu = mu + float(w @ resid)
            kxx = kxx - float(w @ w)
        f = mu + np.sqrt(max(kxx, 0.0)) * self.rng.standard_normal()
        y = f + np.sqrt(self.params.noise_variance) * self.rng.standard_normal()
        self._X = np.vstack([self._X, x])
        self._f = np.append(self._f, f)
        return float(y), float(f)


def _domain_of(oracle):
    if isinstance(oracle, TableOracle):
        return oracle.candidates
    return oracle.dim


def _observe(oracle, result):
    if isinstance(oracle, TableOracle):
        y, f = oracle.observe(result.index)
        x = oracle.candidates[result.index]
    else:
        y, f = oracle.observe(result.x)
        x = result.x
    return x, y, f


# -- loops -------------------------------------------------------------------

def run_bo(model, oracle, spec: AcquisitionSpec, n_iters, seed=0,
           method="pretrained") -> BoTrace:
    """Optimize with a frozen model: condition, maximize, observe, repeat.

    The model is never re-fit inside the loop; the first point is chosen by
    maximizing the acquisition under the bare prior.
    """
    if n_iters < 0:
        raise InputError("n_iters must be >= 0")
    domain = _domain_of(oracle)
    trace = BoTrace(method=method, seed=int(seed), f_max=oracle.f_max)
    X_obs = []
    y_obs = []
    for t in range(1, n_iters + 1):
        post = gp.condition(model, np.array(X_obs), np.array(y_obs))
        best = float(np.max(y_obs)) if y_obs else None
        rng = np.random.default_rng(np.random.SeedSequence([int(seed), t]))
        res = maximize(spec, post, domain, best_y=best, rng=rng)
        x, y, f = _observe(oracle, res)
        trace.steps.append(BoStep(t, np.asarray(x, dtype=float), y, res.value, f))
        X_obs.append(np.asarray(x, dtype=float))
        y_obs.append(y)
    return trace


def run_random(oracle, n_iters, seed=0) -> BoTrace:
    """Uniform sampling over the oracle's domain (with replacement)."""
    if n_iters < 0:
        raise InputError("n_iters must be >= 0")
    rng = np.random.default_rng(np.random.SeedSequence([int(seed), 557]))
    trace = BoTrace(method="rand", seed=int(seed), f_max=oracle.f_max)
    for t in range(1, n_iters + 1):
        if isinstance(oracle, TableOracle):
            i = int(rng.integers(0, oracle.candidates.shape[0]))
            y, f = oracle.observe(i)
            x = oracle.candidates[i]
        else:
            x = rng.uniform(0.0, 1.0, size=oracle.dim)
            y, f = oracle.observe(x)
        trace.steps.append(BoStep(t, np.asarray(x, dtype=float), y, float("nan"), f))
    return trace


def run_stbo(architecture, oracle, spec: AcquisitionSpec, n_iters, seed=0,
             fit_iters=50, kernel="matern32") -> BoTrace:
    """Single-task baseline: re-fit hyperparameters by max likelihood each step.

    The first point is a seeded uniform draw.  If a re-fit fails the
    previous parameters are kept and a warning is logged.
    """
    if n_iters < 0:
        raise InputError("n_iters must be >= 0")
    rng = np.random.default_rng(np.random.SeedSequence([int(seed), 331]))
    trace = BoTrace(method="stbo", seed=int(seed), f_max=oracle.f_max)
    if n_iters == 0:
        return trace
    dim = oracle.dim if not isinstance(oracle, TableOracle) else oracle.candidates.shape[1]

    if isinstance(oracle, TableOracle):
        i = int(rng.integers(0, oracle.candidates.shape[0]))
        y, f = oracle.observe(i)
        x = oracle.candidates[i]
    else:
        x = rng.uniform(0.0, 1.0, size=dim)
        y, f = oracle.observe(x)
    trace.steps.append(BoStep(1, np.asarray(x, dtype=float), y, float("nan"), f))
    X_obs = [np.asarray(x, dtype=float)]
    y_obs = [y]

    params = None
    for t in range(2, n_iters + 1):
        try:
            params = fit_type2_ml(
                np.array(X_obs), np.array(y_obs), architecture,
                seed=seed * 1000 + t, max_iters=fit_iters, kernel=kernel,
            )
        except (NumericalError, InitializationError) as exc:
            log.warning("step %d re-fit failed (%s); keeping previous parameters", t, exc)
            if params is None:
                params = random_params(
                    architecture, dim, np.random.default_rng(seed), kernel=kernel
                )
        post = gp.condition(params, np.array(X_obs), np.array(y_obs))
        res = maximize(
            spec, post, _domain_of(oracle), best_y=float(np.max(y_obs)),
            rng=np.random.default_rng(np.random.SeedSequence([int(seed), t])),
        )
        x, y, f = _observe(oracle, res)
        trace.steps.append(BoStep(t, np.asarray(x, dtype=float), y, res.value, f))
        X_obs.append(np.asarray(x, dtype=float))
        y_obs.append(y)
    return trace


# -- information gain ---------------------------------------------------------

def max_information_gain(params, candidates, n_select) -> float:
    """Greedy 0.5*logdet(I + K_A/sigma2) over subsets of the candidates.

    Greedy selection of n_select points; exact when n_select equals the
    candidate count, within the usual (1 - 1/e) factor otherwise.
    """
    cand = as_points(candidates)
    m = cand.shape[0]
    if not 1 <= n_select <= m:
        raise InputError(f"n_select must be in [1, {m}], got {n_select}")
    s2 = gp.noise_variance(params)
    if not s2 > 0:
        raise DomainError("information gain needs positive noise variance")
    K = gp.kernel_matrix(params, cand) / s2
    chosen = []
    current = 0.0
    remaining = list(range(m))
    for _ in range(n_select):
        best_j, best_val = None, -np.inf
        for j in remaining:
            idx = chosen + [j]
            sub = K[np.ix_(idx, idx)] + np.eye(len(idx))
            sign, logdet = np.linalg.slogdet(sub)
            if sign <= 0:
                continue
            val = 0.5 * logdet
            if val > best_val:
                best_j, best_val = j, val
        if best_j is None:
            raise NumericalError("information gain subproblem was not positive definite")
        chosen.append(best_j)
        remaining.remove(best_j)
        current = best_val
    return float(current)


# -- performance profiles ------------------------------------------------------

def performance_profile(curves, criterion_iter) -> dict:
    """Fraction of cells on which each method beats the per-cell criterion.

    ``curves`` maps method name to an (n_cells, T) array of best-so-far
    values (higher is better); a cell's criterion is the median across
    methods of their value at ``criterion_iter`` (1-based).  Returns a map
    of method name to a length-T fraction array.
    """
    if not curves:
        raise InputError("no curves given")
    methods = sorted(curves)
    arrays = []
    shape = None
    for m in methods:
        a = np.asarray(curves[m], dtype=float)
        if a.ndim != 2:
            raise InputError(f"curves for {m!r} must be 2-d (cells, iters)")
        if shape is None:
            shape = a.shape
        elif a.shape != shape:
            raise InputError("all methods must share the same (cells, iters) shape")
        arrays.append(a)
    n_cells, horizon = shape
    if not 1 <= criterion_iter <= horizon:
        raise InputError(f"criterion iteration must be in [1, {horizon}]")
    at = np.stack([a[:, criterion_iter - 1] for a in arrays])  # (methods, cells)
    criterion = np.median(at, axis=0)
    return {
        m: (a > criterion[None, :].T).mean(axis=0)
        for m, a in zip(methods, arrays)
    }


# -- trace files ----------------------------------------------------------------

def write_trace(trace: BoTrace, path):
    """Comma-separated trace: t, the point coordinates, y, acquisition, best."""
    xs = trace.xs
    d = xs.shape[1] if len(trace) else 0
    best = trace.best_so_far
    with open(path, "w") as fh:
        cols = ["t"] + [f"x_{j + 1}" for j in range(d)] + ["y", "acq_value", "best_so_far"]
        fh.write(",".join(cols) + "\n")
        for i, step in enumerate(trace.steps):
            row = [str(step.t)]
            row += [repr(float(v)) for v in step.x]
            row += [repr(float(step.y)), repr(float(step.acq_value)), repr(float(best[i]))]
            fh.write(",".join(row) + "\n")


def read_trace(path) -> dict:
    """Parse a trace file back into arrays (inverse of write_trace)."""
    with open(path) as fh:
        header = fh.readline().strip().split(",")
        rows = [line.strip().split(",") for line in fh if line.strip()]
    if header[:1] != ["t"] or header[-3:] != ["y", "acq_value", "best_so_far"]:
        raise InputError(f"{path}: not a trace file")
    d = len(header) - 4
    data = np.array([[float(v) for v in r] for r in rows], dtype=float)
    if data.ndim != 2 or data.shape[1] != len(header):
        raise InputError(f"{path}: malformed trace rows")
    return {
        "t": data[:, 0].astype(int),
        "x": data[:, 1:1 + d],
        "y": data[:, 1 + d],
        "acq_value": data[:, 2 + d],
        "best_so_far": data[:, 3 + d],
    }
