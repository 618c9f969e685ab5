"""Search spaces, warping, dataset documents, and synthetic generation.

Datasets are stored raw (native units, feasibility flags preserved) and
warped on access: inputs map through per-dimension scalings onto [0, 1],
outputs through the map named by the document's ``output_warping`` field.
"""

import json
from dataclasses import dataclass

import numpy as np

from . import gp
from .exceptions import (
    InputError,
    NoMatchingDataError,
    ParseError,
    ValidationError,
)
from .moments import MatchingMoments, estimate_moments
from .params import GpParams
from .validation import as_points, as_vector

SCALINGS = ("linear", "log", "one-minus-log")
OUTPUT_WARPINGS = ("none", "neg-log", "online-softplus")

DATASET_FORMAT = "prebo-dataset"
DATASET_VERSION = 1

NEG_LOG_SHIFT = 1e-10

# realized grid sizes for synthetic test functions; a joint draw needs a
# dense factorization, so the per-dimension density drops with dimension
GRID_POINTS_1D = 200
GRID_SIDE_2D = 45
GRID_POINTS_ND = 2048


@dataclass(frozen=True)
class DimSpec:
    name: str
    low: float
    high: float
    scaling: str = "linear"

    def __post_init__(self):
        if self.scaling not in SCALINGS:
            raise ValidationError(
                f"dim {self.name!r}: scaling must be one of {SCALINGS}, got {self.scaling!r}"
            )
        if not (np.isfinite(self.low) and np.isfinite(self.high)):
            raise ValidationError(f"dim {self.name!r}: bounds must be finite")
        if not self.low < self.high:
            raise ValidationError(
                f"dim {self.name!r}: low must be < high, got [{self.low}, {self.high}]"
            )
        if self.scaling == "log" and self.low <= 0:
            raise ValidationError(f"dim {self.name!r}: log scaling needs low > 0")
        if self.scaling == "one-minus-log" and self.high >= 1:
            raise ValidationError(f"dim {self.name!r}: one-minus-log scaling needs high < 1")

    def _fwd(self, x):
        if self.scaling == "log":
            return np.log(x)
        if self.scaling == "one-minus-log":
            return np.log(1.0 - x)
        return x

    def _inv(self, v):
        if self.scaling == "log":
            return np.exp(v)
        if self.scaling == "one-minus-log":
            return 1.0 - np.exp(v)
        return v

    def warp(self, x):
        a, b = self._fwd(self.low), self._fwd(self.high)
        return (self._fwd(x) - a) / (b - a)

    def unwarp(self, u):
        a, b = self._fwd(self.low), self._fwd(self.high)
        return self._inv(a + np.asarray(u) * (b - a))


@dataclass(frozen=True)
class SearchSpace:
    dims: "tuple[DimSpec, ...]"

    def __post_init__(self):
        dims = tuple(self.dims)
        if not dims:
            raise ValidationError("search space needs at least one dimension")
        names = [d.name for d in dims]
        if len(set(names)) != len(names):
            raise ValidationError("dimension names must be unique")
        object.__setattr__(self, "dims", dims)

    @property
    def dim(self) -> int:
        return len(self.dims)

    @classmethod
    def unit_box(cls, dim) -> "SearchSpace":
        return cls(tuple(DimSpec(f"x{j + 1}", 0.0, 1.0) for j in range(dim)))


def _check_bounds(X, space, context=""):
    slack = 1e-9
    for j, d in enumerate(space.dims):
        span = d.high - d.low
        col = X[:, j]
        if np.any(col < d.low - slack * span) or np.any(col > d.high + slack * span):
            raise ValidationError(
                f"{context}point outside bounds of dim {d.name!r} [{d.low}, {d.high}]"
            )


def warp_input(X, space: SearchSpace) -> np.ndarray:
    """Map raw points into the unit cube via each dimension's scaling."""
    X = as_points(X, space.dim)
    _check_bounds(X, space)
    out = np.empty_like(X)
    for j, d in enumerate(space.dims):
        out[:, j] = d.warp(np.clip(X[:, j], d.low, d.high))
    return out


def unwarp_input(U, space: SearchSpace) -> np.ndarray:
    """Exact inverse of warp_input on the unit cube."""
    U = as_points(U, space.dim)
    if np.any(U < -1e-9) or np.any(U > 1.0 + 1e-9):
        raise ValidationError("warped coordinates must lie in [0, 1]")
    U = np.clip(U, 0.0, 1.0)
    out = np.empty_like(U)
    for j, d in enumerate(space.dims):
        out[:, j] = d.unwarp(U[:, j])
    return out


def warp_output(r) -> np.ndarray:
    """Map nonnegative losses to a maximization scale: -log(r + 1e-10)."""
    r = np.asarray(r, dtype=float)
    if np.any(r < 0) or not np.all(np.isfinite(r)):
        raise InputError("warp_output needs finite values >= 0")
    return -np.log(r + NEG_LOG_SHIFT)


def _softplus(x):
    return np.logaddexp(0.0, x)


def online_map(values, feasible) -> np.ndarray:
    """Squash raw outcomes into [-2, 2] for the online setting.

    Feasible values map through a softplus centered on their lower median
    and scaled so the best feasible value lands exactly at +2 (the range's
    upper end is closed); infeasible entries map to exactly -2.
    """
    values = np.asarray(values, dtype=float)
    feasible = np.asarray(feasible, dtype=bool)
    if values.shape != feasible.shape:
        raise InputError("values and feasible flags must have the same shape")
    if not np.any(feasible):
        raise InputError("online map needs at least one feasible value")
    feas_vals = values[feasible]
    if not np.all(np.isfinite(feas_vals)):
        raise InputError("feasible values must be finite")
    ordered = np.sort(feas_vals)
    center = ordered[(len(ordered) - 1) // 2]  # lower median on even counts
    top = ordered[-1]
    denom = _softplus(top - center)
    out = np.full(values.shape, -2.0)
    mapped = 4.0 * _softplus(feas_vals - center) / denom - 2.0
    # softplus underflows for values far below the median; keep feasible
    # entries strictly above the -2 infeasibility marker regardless
    out[feasible] = np.maximum(mapped, np.nextafter(-2.0, 0.0))
    return out


# -- datasets ------------------------------------------------------------------

@dataclass
class TaskData:
    """Raw trials of one task: native-unit inputs, outcomes, feasibility."""

    name: str
    x: np.ndarray
    y: np.ndarray
    feasible: np.ndarray

    def __post_init__(self):
        x = np.asarray(self.x, dtype=float)
        if x.ndim != 2:
            raise ValidationError(f"task {self.name!r}: x must be (n, d)")
        y = np.asarray(self.y, dtype=float).reshape(-1)
        feas = np.asarray(self.feasible, dtype=bool).reshape(-1)
        if y.shape[0] != x.shape[0] or feas.shape[0] != x.shape[0]:
            raise ValidationError(f"task {self.name!r}: x, y, feasible lengths differ")
        if not np.all(np.isfinite(x)):
            raise ValidationError(f"task {self.name!r}: x contains non-finite values")
        if np.any(~np.isfinite(y) & feas):
            raise ValidationError(f"task {self.name!r}: feasible trials need finite y")
        self.x, self.y, self.feasible = x, y, feas

    @property
    def n_trials(self) -> int:
        return self.x.shape[0]


@dataclass
class MultiTaskDataset:
    """A search space plus the raw trials of every task."""

    search_space: SearchSpace
    tasks: "list[TaskData]"
    output_warping: str = "none"

    def __post_init__(self):
        if self.output_warping not in OUTPUT_WARPINGS:
            raise ValidationError(
                f"output_warping must be one of {OUTPUT_WARPINGS}, got {self.output_warping!r}"
            )
        names = [t.name for t in self.tasks]
        if len(set(names)) != len(names):
            raise ValidationError("task names must be unique")
        for t in self.tasks:
            if t.x.shape[1] != self.search_space.dim:
                raise ValidationError(
                    f"task {t.name!r} has dim {t.x.shape[1]}, "
                    f"search space has {self.search_space.dim}"
                )
            _check_bounds(t.x, self.search_space, context=f"task {t.name!r}: ")

    @property
    def dim(self) -> int:
        return self.search_space.dim

    @property
    def n_tasks(self) -> int:
        return len(self.tasks)

    def task_names(self):
        return [t.name for t in self.tasks]

    def task_arrays(self):
        """Model-space observations: [(name, warped X, processed y), ...].

        Under "none" and "neg-log" infeasible trials are dropped; the
        online-softplus map keeps them at the value -2.  Tasks left with no
        observations are skipped.
        """
        out = []
        for t in self.tasks:
            if self.output_warping == "online-softplus":
                keep = np.ones(t.n_trials, dtype=bool)
                y = online_map(np.where(t.feasible, t.y, 0.0), t.feasible)
            else:
                keep = t.feasible
                y = t.y
                if self.output_warping == "neg-log":
                    y = np.where(keep, y, 0.0)
                    if np.any(y[keep] < 0):
                        raise ValidationError(
                            f"task {t.name!r}: neg-log warping needs y >= 0"
                        )
                    y = warp_output(np.maximum(y, 0.0))
            if not np.any(keep):
                continue
            X = warp_input(t.x[keep], self.search_space)
            out.append((t.name, X, np.asarray(y)[keep]))
        return out

    def subset(self, names) -> "MultiTaskDataset":
        wanted = list(names)
        missing = set(wanted) - set(self.task_names())
        if missing:
            raise InputError(f"unknown task names: {sorted(missing)}")
        keep = [t for t in self.tasks if t.name in set(wanted)]
        return MultiTaskDataset(self.search_space, keep, self.output_warping)

    def drop(self, names) -> "MultiTaskDataset":
        gone = set(names)
        keep = [t for t in self.tasks if t.name not in gone]
        if not keep:
            raise InputError("dropping those tasks leaves an empty dataset")
        return MultiTaskDataset(self.search_space, keep, self.output_warping)


def save_dataset(dataset: MultiTaskDataset, path):
    doc = {
        "format": DATASET_FORMAT,
        "version": DATASET_VERSION,
        "output_warping": dataset.output_warping,
        "search_space": {
            "dims": [
                {"name": d.name, "low": d.low, "high": d.high, "scaling": d.scaling}
                for d in dataset.search_space.dims
            ]
        },
        "tasks": [
            {
                "name": t.name,
                "points": [
                    {
                        "x": [float(v) for v in t.x[i]],
                        "y": (None if not t.feasible[i] and not np.isfinite(t.y[i])
                              else float(t.y[i])),
                        "feasible": bool(t.feasible[i]),
                    }
                    for i in range(t.n_trials)
                ],
            }
            for t in dataset.tasks
        ],
    }
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
        fh.write("\n")


def load_dataset(path) -> MultiTaskDataset:
    try:
        with open(path) as fh:
            doc = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ParseError(f"{path}: not valid JSON ({exc})") from exc

    def fail(msg):
        raise ParseError(f"{path}: {msg}")

    if not isinstance(doc, dict):
        fail("dataset document must be a mapping")
    if doc.get("format") != DATASET_FORMAT:
        fail(f"field 'format' must be {DATASET_FORMAT!r}, got {doc.get('format')!r}")
    if doc.get("version") != DATASET_VERSION:
        fail(f"unsupported dataset version {doc.get('version')!r}")
    space_doc = doc.get("search_space")
    if not isinstance(space_doc, dict) or not isinstance(space_doc.get("dims"), list):
        fail("field 'search_space.dims' must be a list")
    dims = []
    for k, dd in enumerate(space_doc["dims"]):
        if not isinstance(dd, dict):
            fail(f"search_space.dims[{k}] must be a mapping")
        try:
            dims.append(DimSpec(
                str(dd.get("name", f"x{k + 1}")),
                float(dd["low"]), float(dd["high"]),
                str(dd.get("scaling", "linear")),
            ))
        except KeyError as exc:
            fail(f"search_space.dims[{k}] missing field {exc}")
        except (TypeError, ValueError, ValidationError) as exc:
            fail(f"search_space.dims[{k}]: {exc}")
    space = SearchSpace(tuple(dims))

    tasks_doc = doc.get("tasks")
    if not isinstance(tasks_doc, list) or not tasks_doc:
        fail("field 'tasks' must be a non-empty list")
    tasks = []
    for k, td in enumerate(tasks_doc):
        if not isinstance(td, dict) or "name" not in td or not isinstance(td.get("points"), list):
            fail(f"tasks[{k}] must have 'name' and a 'points' list")
        name = str(td["name"])
        xs, ys, feas = [], [], []
        for i, pt in enumerate(td["points"]):
            where = f"tasks[{k}] ({name!r}) points[{i}]"
            if not isinstance(pt, dict) or "x" not in pt:
                fail(f"{where}: must be a mapping with an 'x' list")
            x = pt["x"]
            if not isinstance(x, list) or len(x) != space.dim:
                fail(f"{where}: 'x' must be a list of {space.dim} numbers")
            f_ok = bool(pt.get("feasible", True))
            y = pt.get("y", None)
            if y is None:
                if f_ok:
                    fail(f"{where}: feasible point needs a numeric 'y'")
                y = float("nan")
            xs.append([float(v) for v in x])
            ys.append(float(y))
            feas.append(f_ok)
        if not xs:
            fail(f"tasks[{k}] ({name!r}): needs at least one point")
        tasks.append(TaskData(name, np.array(xs), np.array(ys), np.array(feas)))
    warping = doc.get("output_warping", "none")
    try:
        return MultiTaskDataset(space, tasks, warping)
    except ValidationError as exc:
        fail(str(exc))


# -- matching data ---------------------------------------------------------------

def extract_matching(dataset, tol=1e-9, unbiased=False) -> MatchingMoments:
    """Moments of the inputs every task shares (within tol, warped space).

    Reference locations come from the first task in order of appearance
    (de-duplicated within tol); a location is kept only when every task has
    a trial within tol of it, taking each task's first such trial.
    """
    from .objectives import _task_list

    tasks = _task_list(dataset)
    if len(tasks) < 1:
        raise NoMatchingDataError("no tasks given")
    _, X0, _ = tasks[0]
    refs = []
    for i in range(X0.shape[0]):
        if not any(np.linalg.norm(X0[i] - r) <= tol for r in refs):
            refs.append(X0[i])
    rows = []
    points = []
    for ref in refs:
        col_vals = []
        for _, X, y in tasks:
            d = np.linalg.norm(X - ref[None, :], axis=1)
            hits = np.flatnonzero(d <= tol)
            if hits.size == 0:
                break
            col_vals.append(y[hits[0]])
        else:
            rows.append(col_vals)
            points.append(ref)
    if not rows:
        raise NoMatchingDataError(
            f"no input locations are shared by all {len(tasks)} tasks (tol={tol})"
        )
    return estimate_moments(np.array(points), np.array(rows), unbiased=unbiased)


# -- synthetic generation ----------------------------------------------------------

@dataclass
class SynthConfig:
    """Recipe for a synthetic multi-task collection from a known prior."""

    params: GpParams
    n_tasks: int
    points_per_task: int
    matched_fraction: float = 1.0
    seed: int = 0
    n_test_functions: int = 0

    def __post_init__(self):
        if self.n_tasks < 1 or self.points_per_task < 1:
            raise ValidationError("n_tasks and points_per_task must be >= 1")
        if not 0.0 <= self.matched_fraction <= 1.0:
            raise ValidationError("matched_fraction must be in [0, 1]")
        if self.n_test_functions < 0:
            raise ValidationError("n_test_functions must be >= 0")


@dataclass
class SynthResult:
    dataset: MultiTaskDataset
    test_functions: "MultiTaskDataset | None"
    params: GpParams
    test_maxima: "list[float]"


def _function_grid(dim, rng):
    if dim == 1:
        return np.linspace(0.0, 1.0, GRID_POINTS_1D)[:, None]
    if dim == 2:
        side = np.linspace(0.0, 1.0, GRID_SIDE_2D)
        a, b = np.meshgrid(side, side, indexing="ij")
        return np.column_stack([a.ravel(), b.ravel()])
    return rng.uniform(0.0, 1.0, size=(GRID_POINTS_ND, dim))


def sample_function_values(params, X, rng, n_samples=1) -> np.ndarray:
    """Joint noise-free draws from the prior at X, shape (n_samples, n)."""
    X = as_points(X, params.dim if isinstance(params, GpParams) else None)
    mu = gp.mean_vector(params, X)
    K = gp.kernel_matrix(params, X)
    L, _ = gp.chol_factor(K, jitters=(1e-10, 1e-8, 1e-6))
    z = rng.standard_normal(size=(n_samples, X.shape[0]))
    return mu[None, :] + z @ L.T


def synth_generate(config: SynthConfig) -> SynthResult:
    """Draw tasks (and optional noiseless test functions) from a known prior.

    Each task observes one joint function draw at its own inputs plus
    observation noise; a configured fraction of inputs is shared by every
    task.  Test functions are realized jointly on one fixed grid so the
    factorization is reused, and their maxima are exact over that grid.
    """
    params = config.params
    d = params.dim
    ss = np.random.SeedSequence([int(config.seed), 7919])
    kids = ss.spawn(config.n_tasks + 2)
    rng_shared = np.random.default_rng(kids[0])
    m_shared = int(round(config.matched_fraction * config.points_per_task))
    shared = rng_shared.uniform(0.0, 1.0, size=(m_shared, d))
    sigma = np.sqrt(params.noise_variance)

    space = SearchSpace.unit_box(d)
    width = len(str(max(config.n_tasks - 1, 1)))
    tasks = []
    for i in range(config.n_tasks):
        rng_i = np.random.default_rng(kids[i + 1])
        own = rng_i.uniform(0.0, 1.0, size=(config.points_per_task - m_shared, d))
        Xi = np.vstack([shared, own])
        f = sample_function_values(params, Xi, rng_i)[0]
        y = f + sigma * rng_i.standard_normal(Xi.shape[0])
        tasks.append(TaskData(
            f"task-{i:0{width}d}", Xi, y, np.ones(Xi.shape[0], dtype=bool)
        ))
    dataset = MultiTaskDataset(space, tasks)

    test_ds = None
    maxima = []
    if config.n_test_functions:
        rng_t = np.random.default_rng(kids[-1])
        grid = _function_grid(d, rng_t)
        F = sample_function_values(params, grid, rng_t, n_samples=config.n_test_functions)
        fw = len(str(max(config.n_test_functions - 1, 1)))
        fns = []
        for k in range(config.n_test_functions):
            fns.append(TaskData(
                f"fn-{k:0{fw}d}", grid, F[k], np.ones(grid.shape[0], dtype=bool)
            ))
            maxima.append(float(np.max(F[k])))
        test_ds = MultiTaskDataset(space, fns)
    return SynthResult(dataset, test_ds, params, maxima)
