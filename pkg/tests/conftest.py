import numpy as np
import pytest


def central_fd(f, x, step=None):
    """Central finite-difference gradient of a scalar function at x."""
    x = np.asarray(x, dtype=np.float64)
    if step is None:
        step = 1e-5 * (1.0 + np.linalg.norm(x))
    g = np.zeros_like(x)
    for i in range(x.size):
        e = np.zeros_like(x)
        e[i] = step
        g[i] = (f(x + e) - f(x - e)) / (2.0 * step)
    return g


@pytest.fixture(scope="session")
def bm3():
    from hitgen.kernels import brownian_kernel

    return brownian_kernel(3, 0.5)


@pytest.fixture(scope="session")
def bm2():
    from hitgen.kernels import brownian_kernel

    return brownian_kernel(2, 0.5)


@pytest.fixture(scope="session")
def ou2():
    from hitgen.kernels import ou_kernel

    return ou_kernel(2, 0.5, 1.0)
