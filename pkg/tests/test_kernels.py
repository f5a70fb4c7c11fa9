"""Green kernels: closed forms, quadrature oracles, gradients, normalisation."""
import math

import numpy as np
import pytest
from scipy import integrate

from conftest import central_fd
from hitgen.errors import CoincidentPointsError, QuadratureError
from hitgen.kernels import (
    GreenKernel,
    ProcessSpec,
    BROWNIAN,
    brownian_kernel,
    grad_log_green,
    log_green,
    log_reference_density,
    ou_kernel,
)


def heat_kernel_quadrature(d, rate, rho):
    """Independent oracle: direct quadrature of the discounted heat kernel."""
    def integrand(t):
        return math.exp(-rate * t) * (2 * math.pi * t) ** (-d / 2.0) \
            * math.exp(-rho * rho / (2.0 * t))

    val, _ = integrate.quad(integrand, 0.0, np.inf, limit=400)
    return math.log(val)


def test_bm_d3_closed_form(bm3):
    x = np.zeros(3)
    y = np.array([1.0, 0.0, 0.0])
    expect = math.log(math.exp(-1.0) / (2.0 * math.pi))
    assert abs(log_green(bm3, x, y) - expect) < 1e-12
    assert abs(log_green(bm3, x, y) - (-2.8379)) < 1e-4


@pytest.mark.parametrize("d", [1, 2, 3, 5])
def test_bm_vs_heat_kernel_quadrature(d):
    k = brownian_kernel(d, 0.5)
    for rho in (0.1, 0.7, 1.9, 3.0):
        x = np.zeros(d)
        y = np.zeros(d)
        y[0] = rho
        mine = log_green(k, x, y)
        ref = heat_kernel_quadrature(d, 0.5, rho)
        assert abs(mine - ref) < 1e-6 * max(1.0, abs(ref))


def test_symmetry_both_modes(bm3, ou2):
    rng = np.random.default_rng(1)
    for kernel in (bm3, ou2, GreenKernel(ProcessSpec(BROWNIAN, 3, 0.5), mode="quadrature")):
        d = kernel.dim
        x = rng.standard_normal((1000, d))
        y = x + rng.standard_normal((1000, d))
        fwd = log_green(kernel, x, y)
        bwd = log_green(kernel, y, x)
        assert np.abs(fwd - bwd).max() < 1e-12


def test_decreasing_in_distance():
    k = brownian_kernel(2, 1.0)
    near = log_green(k, np.zeros(2), np.array([0.5, 0.0]))
    far = log_green(k, np.zeros(2), np.array([1.0, 0.0]))
    assert near > far


def test_quadrature_bm_matches_analytic():
    ka = brownian_kernel(3, 0.5)
    kq = GreenKernel(ProcessSpec(BROWNIAN, 3, 0.5), mode="quadrature")
    rng = np.random.default_rng(2)
    x = rng.standard_normal((50, 3))
    y = x + rng.standard_normal((50, 3))
    assert np.abs(log_green(ka, x, y) - log_green(kq, x, y)).max() < 1e-9


def test_ou_small_theta_matches_bm():
    # theta -> 0 limit after converting between reference measures
    rng = np.random.default_rng(3)
    for d in (1, 2, 3, 5):
        ka = brownian_kernel(d, 0.5)
        ko = ou_kernel(d, 0.5, 1e-6)
        for rho in np.linspace(0.1, 3.0, 7):
            x = rng.standard_normal(d)
            u = rng.standard_normal(d)
            y = x + rho * u / np.linalg.norm(u)
            conv = log_green(ko, x, y) + float(log_reference_density(ko, y))
            ref = log_green(ka, x, y)
            assert abs(conv - ref) < 1e-4 * max(1.0, abs(ref))


def test_grad_d3_closed_form(bm3):
    x = np.zeros(3)
    y = np.array([-1.0, 0.0, 0.0])  # x - y = e1, rho = 1
    g = grad_log_green(bm3, x, y)
    assert np.allclose(g, [-2.0, 0.0, 0.0], atol=1e-12)


def test_grad_orthogonal_component_zero(bm3):
    rng = np.random.default_rng(4)
    x = rng.standard_normal(3)
    y = rng.standard_normal(3)
    g = grad_log_green(bm3, x, y)
    diff = x - y
    ortho = g - diff * (g @ diff) / (diff @ diff)
    assert np.linalg.norm(ortho) < 1e-12 * np.linalg.norm(g)


@pytest.mark.parametrize("kind", ["bm", "ou"])
def test_grad_matches_finite_differences(kind, bm3, ou2):
    kernel = bm3 if kind == "bm" else ou2
    d = kernel.dim
    rng = np.random.default_rng(5)
    for _ in range(100):
        x = rng.standard_normal(d)
        y = x + rng.uniform(0.3, 3.0) * _unit(rng, d)
        g = grad_log_green(kernel, x, y)
        fd = central_fd(lambda p: log_green(kernel, p, y), x)
        assert np.abs(g - fd).max() < 1e-5 * max(1.0, np.abs(g).max())


def _unit(rng, d):
    u = rng.standard_normal(d)
    return u / np.linalg.norm(u)


@pytest.mark.parametrize("d", [1, 2, 3])
def test_resolvent_normalisation_monte_carlo(d):
    # r * int G_r(x, y) dy = 1, estimated with a Gaussian proposal
    k = brownian_kernel(d, 0.5)
    rng = np.random.default_rng(6)
    x = rng.standard_normal(d)
    sigma = 2.5
    n = 40_000
    ys = x + sigma * rng.standard_normal((n, d))
    log_prop = (-0.5 * ((ys - x) ** 2).sum(axis=1) / sigma**2
                - 0.5 * d * math.log(2 * math.pi * sigma**2))
    vals = 0.5 * np.exp(log_green(k, np.repeat(x[None, :], n, axis=0), ys) - log_prop)
    est = vals.mean()
    se = vals.std(ddof=1) / math.sqrt(n)
    assert abs(est - 1.0) <= 3.0 * se


def test_coincident_points_error(bm3):
    with pytest.raises(CoincidentPointsError):
        log_green(bm3, np.zeros(3), np.zeros(3))
    with pytest.raises(CoincidentPointsError):
        grad_log_green(bm3, np.zeros(3), 1e-12 * np.ones(3))


def test_quadrature_floor_error(ou2):
    x = np.zeros(2)
    y = np.array([1e-6, 0.0])
    with pytest.raises(QuadratureError):
        log_green(ou2, x, y)


def test_quadrature_tail_error():
    # a tiny integration window must be detected, not silently truncated
    k = ou_kernel(2, 0.5, 1.0, quad_t_max=0.05)
    with pytest.raises(QuadratureError):
        log_green(k, np.zeros(2), np.array([2.5, 0.0]))


def test_spec_validation():
    with pytest.raises(ValueError):
        ProcessSpec(BROWNIAN, 0, 0.5)
    with pytest.raises(ValueError):
        ProcessSpec(BROWNIAN, 2, -1.0)
    with pytest.raises(ValueError):
        ProcessSpec("ornstein-uhlenbeck", 2, 0.5, 0.0)
    with pytest.raises(ValueError):
        GreenKernel(ProcessSpec("ornstein-uhlenbeck", 2, 0.5, 1.0), mode="analytic")
