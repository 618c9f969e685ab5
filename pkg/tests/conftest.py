import numpy as np
import pytest

from prebo import CONST_MATERN, pack


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def const_params(dim, mean=0.0, amp=1.0, ls=0.5, noise=0.01):
    """Small helper: ConstMatern params from plain (non-log) values."""
    ls = np.full(dim, ls, dtype=float) if np.isscalar(ls) else np.asarray(ls, float)
    return pack(
        CONST_MATERN, dim,
        mean_const=[mean],
        log_amplitude=[np.log(amp)],
        log_lengthscales=np.log(ls),
        log_noise=[np.log(noise)],
    )
