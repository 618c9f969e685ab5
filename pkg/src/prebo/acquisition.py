"""Acquisition scores and their maximization over a domain.

Scores are written for maximization of the (warped) objective.  The
predictive standard deviation fed in here includes observation noise;
zero-deviation limits are handled with large-magnitude sentinels so that
ranking stays well defined.
"""

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import ndtr

from .exceptions import DomainError, InputError
from .validation import as_points

BIG = 1e300

KINDS = ("pi", "ei", "ucb")


@dataclass(frozen=True)
class AcquisitionSpec:
    """Which score to use, its parameter, and box-search effort knobs."""

    kind: str
    threshold: float = 0.1  # improvement margin for pi
    zeta: float = 1.8       # exploration coefficient for ucb
    n_random: int = 1000    # random probes in box mode
    n_local_steps: int = 100

    def __post_init__(self):
        if self.kind not in KINDS:
            raise InputError(f"acquisition kind must be one of {KINDS}, got {self.kind!r}")
        if self.threshold < 0:
            raise InputError(f"pi threshold must be >= 0, got {self.threshold}")
        if self.zeta < 0:
            raise InputError(f"ucb coefficient must be >= 0, got {self.zeta}")
        if self.n_random < 1 or self.n_local_steps < 0:
            raise InputError("n_random must be >= 1 and n_local_steps >= 0")

    @classmethod
    def parse(cls, token, **kw) -> "AcquisitionSpec":
        """Parse tokens like ``pi:0.1``, ``ei``, ``ucb:1.8``."""
        parts = str(token).strip().split(":")
        kind = parts[0]
        if kind not in KINDS or len(parts) > 2:
            raise InputError(f"unknown acquisition token {token!r}")
        if len(parts) == 2:
            try:
                value = float(parts[1])
            except ValueError:
                raise InputError(f"bad numeric parameter in acquisition token {token!r}") from None
            if kind == "pi":
                kw["threshold"] = value
            elif kind == "ucb":
                kw["zeta"] = value
            else:
                raise InputError("ei takes no parameter")
        return cls(kind=kind, **kw)

    @property
    def token(self) -> str:
        if self.kind == "pi":
            return f"pi:{self.threshold:g}"
        if self.kind == "ucb":
            return f"ucb:{self.zeta:g}"
        return "ei"


def _phi(z):
    return np.exp(-0.5 * z * z) / math.sqrt(2.0 * math.pi)


def score(spec: AcquisitionSpec, mu, sigma, best_y=None):
    """Acquisition value(s) at predictive mean mu and std sigma.

    ``best_y`` is the incumbent (max observed warped value); required for
    pi and ei, ignored by ucb.
    """
    mu = np.asarray(mu, dtype=float)
    sigma = np.asarray(sigma, dtype=float)
    if np.any(sigma < 0):
        raise InputError("sigma must be >= 0")
    if spec.kind == "ucb":
        return mu + spec.zeta * sigma
    if best_y is None or not np.isfinite(best_y):
        raise InputError(f"{spec.kind} needs a finite incumbent value")
    if spec.kind == "pi":
        target = best_y + spec.threshold
        with np.errstate(divide="ignore", invalid="ignore"):
            vals = (mu - target) / sigma
        return np.where(sigma > 0, vals, np.where(mu > target, BIG, -BIG))
    # expected improvement over the incumbent
    diff = mu - best_y
    with np.errstate(divide="ignore", invalid="ignore"):
        z = diff / sigma
        ei = sigma * (z * ndtr(z) + _phi(z))
    return np.where(sigma > 0, ei, np.maximum(diff, 0.0))


def gp_ucb_zeta(n_tasks, t, delta) -> float:
    """Step-t coefficient for the theoretical UCB rule.

    Transcribed exactly from the bound's definition; raises DomainError
    naming the violated condition when evaluated outside its domain.
    """
    n = int(n_tasks)
    t = int(t)
    if not (0.0 < delta < 1.0):
        raise DomainError(f"requires 0 < delta < 1, got delta={delta}")
    if t < 1:
        raise DomainError(f"requires t >= 1, got t={t}")
    if not n > t + 1:
        raise DomainError(f"requires n_tasks > t + 1, got n_tasks={n}, t={t}")
    log6 = math.log(6.0 / delta)
    b = log6 / (n - t)
    if not 2.0 * math.sqrt(b) < 1.0:
        raise DomainError(
            f"requires 2*sqrt(log(6/delta)/(n_tasks - t)) < 1, got {2.0 * math.sqrt(b)}"
        )
    num = math.sqrt(
        6.0 * n * (n - 3 + t + 2.0 * math.sqrt(t * log6) + 2.0 * log6)
        / (delta * n * (n - t - 1))
    ) + math.sqrt(2.0 * n * math.log(3.0 / delta))
    den = math.sqrt((n - 1) * (1.0 - 2.0 * math.sqrt(b)))
    return num / den


class MaximizeResult:
    """Chosen point, its acquisition value, and its candidate index (if any)."""

    __slots__ = ("x", "value", "index")

    def __init__(self, x, value, index=None):
        self.x = np.asarray(x, dtype=float)
        self.value = float(value)
        self.index = index


def maximize(spec: AcquisitionSpec, posterior, domain, best_y=None, rng=None) -> MaximizeResult:
    """Maximize the acquisition over a candidate set or a unit box.

    ``domain`` is either an (m, d) candidate array (ties break to the
    lowest index, no de-duplication against observed points) or an integer
    box dimension, searched by seeded random probing plus coordinate-wise
    refinement inside [0, 1]^d.  When ``best_y`` is None the incumbent
    stands in as the best predictive mean over the probed set, which makes
    the prior mean matter on the first step.
    """
    if isinstance(domain, (int, np.integer)):
        return _maximize_box(spec, posterior, int(domain), best_y, rng)
    cand = as_points(domain)
    if cand.shape[0] == 0:
        raise InputError("candidate domain is empty")
    mu, var = posterior.predict(cand)
    sigma = np.sqrt(np.maximum(var, 0.0))
    if best_y is None:
        best_y = float(np.max(mu))
    s = score(spec, mu, sigma, best_y)
    i = int(np.argmax(s))
    return MaximizeResult(cand[i], s[i], i)


def _maximize_box(spec, posterior, dim, best_y, rng):
    if dim < 1:
        raise InputError("box domain needs dim >= 1")
    rng = np.random.default_rng(rng)
    probes = rng.uniform(0.0, 1.0, size=(spec.n_random, dim))
    mu, var = posterior.predict(probes)
    sigma = np.sqrt(np.maximum(var, 0.0))
    if best_y is None:
        best_y = float(np.max(mu))
    s = score(spec, mu, sigma, best_y)
    i = int(np.argmax(s))
    x = probes[i].copy()
    fx = float(s[i])

    def score_at(pt):
        m, v = posterior.predict(pt[None, :])
        return float(score(spec, m, np.sqrt(max(v[0], 0.0)), best_y)[0])

    step = 0.1
    for _ in range(spec.n_local_steps):
        moved = False
        for j in range(dim):
            for delta in (step, -step):
                trial = x.copy()
                trial[j] = min(1.0, max(0.0, trial[j] + delta))
                if trial[j] == x[j]:
                    continue
                ft = score_at(trial)
                if ft > fx:
                    x, fx = trial, ft
                    moved = True
        if not moved:
            step *= 0.5
            if step < 1e-6:
                break
    return MaximizeResult(x, fx, None)
