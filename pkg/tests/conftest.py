import numpy as np
import pytest

from scenefuse import _kernels


@pytest.fixture(scope="session", autouse=True)
def warm_kernels():
    # compile the jit kernels once so per-test time budgets measure the
    # steady state, not compilation
    _kernels.warmup()


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def random_rotation(rng):
    """Uniform-ish random rotation via QR with determinant fix."""
    q, r = np.linalg.qr(rng.standard_normal((3, 3)))
    q *= np.sign(np.diag(r))
    if np.linalg.det(q) < 0:
        q[:, 0] = -q[:, 0]
    return q
