"""Sample moments of outputs observed at inputs shared across tasks."""

from dataclasses import dataclass

import numpy as np

from .exceptions import InputError
from .validation import as_points


@dataclass(frozen=True)
class MatchingMoments:
    """First two sample moments of the task outputs at shared inputs.

    ``values`` holds one column per task (M inputs by N tasks); ``mean``
    and ``cov`` are the across-task sample mean and covariance of those
    columns.  The covariance diagonal therefore includes observation noise.
    """

    inputs: np.ndarray
    values: np.ndarray
    mean: np.ndarray
    cov: np.ndarray
    n_tasks: int
    unbiased: bool = False

    @property
    def n_inputs(self) -> int:
        return self.inputs.shape[0]

    def subset(self, idx) -> "MatchingMoments":
        """Moments restricted to a subset of the shared inputs."""
        idx = np.asarray(idx, dtype=int)
        return MatchingMoments(
            self.inputs[idx],
            self.values[idx],
            self.mean[idx],
            self.cov[np.ix_(idx, idx)],
            self.n_tasks,
            self.unbiased,
        )


def estimate_moments(inputs, values, unbiased=False) -> MatchingMoments:
    """Estimate (mean, cov) across tasks from an (M, N) value matrix.

    The default estimator divides by N; ``unbiased=True`` rescales the
    covariance by N/(N-1) and requires at least two tasks.
    """
    inputs = as_points(inputs)
    values = np.asarray(values, dtype=float)
    if values.ndim != 2:
        raise InputError(f"values must be (M, N), got shape {values.shape}")
    m, n = values.shape
    if m != inputs.shape[0]:
        raise InputError(f"values has {m} rows but inputs has {inputs.shape[0]}")
    if n < 1:
        raise InputError("need at least one task column")
    if not np.all(np.isfinite(values)):
        raise InputError("values contains non-finite entries")
    mu = values.mean(axis=1)
    dev = values - mu[:, None]
    cov = (dev @ dev.T) / n
    if unbiased:
        if n < 2:
            raise InputError("unbiased covariance needs at least two tasks")
        cov = cov * (n / (n - 1.0))
    cov = 0.5 * (cov + cov.T)
    return MatchingMoments(inputs, values, mu, cov, n, unbiased)
