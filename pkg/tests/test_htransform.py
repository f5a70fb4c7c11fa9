"""Transform drifts, h values, and endpoint posteriors."""
import math

import numpy as np
import pytest

from conftest import central_fd
from hitgen.dataio import PointCloud
from hitgen.errors import CoincidentPointsError, DriftOverflowError, PreconditionError
from hitgen.exact import build_exact_backward
from hitgen.htransform import (
    Bridge,
    ConstantH,
    DiscreteBackward,
    LearnedBackward,
    SphereHit,
    drift,
    h_value,
    log_backward_h,
    posterior_endpoint_law,
)
from hitgen.kernels import brownian_kernel, grad_log_green, log_green
from hitgen.score import ScoreParams, init_params, score_eval


def test_constant_drift_is_base_drift(bm3, ou2):
    x = np.array([0.3, -0.7, 1.1])
    assert np.allclose(drift(ConstantH(bm3), x), 0.0)
    x2 = np.array([0.5, -1.0])
    assert np.allclose(drift(ConstantH(ou2), x2), -1.0 * x2)


def test_sphere_drift_origin_and_linear_regime():
    k = brownian_kernel(100, 0.5)
    sph = SphereHit(k, 5.0)
    assert np.allclose(drift(sph, np.zeros(100)), 0.0)
    rng = np.random.default_rng(0)
    x = rng.standard_normal(100)
    x /= np.linalg.norm(x)  # |x| = 1
    g = drift(sph, x)
    approx = (2 * 0.5 / 100) * x
    assert np.linalg.norm(g - approx) < 0.05 * np.linalg.norm(approx)


def test_sphere_requires_brownian(ou2):
    with pytest.raises(ValueError):
        SphereHit(ou2, 1.0)


def test_sphere_drift_outside_ball_rejected(bm3):
    sph = SphereHit(bm3, 1.0)
    with pytest.raises(PreconditionError):
        drift(sph, np.array([2.0, 0.0, 0.0]))


def test_discrete_single_point_drift_is_green_gradient(bm3):
    data = PointCloud.from_points([[0.5, -0.2, 0.1]])
    bw = build_exact_backward(data, ConstantH(bm3))
    rng = np.random.default_rng(1)
    for _ in range(10):
        x = rng.standard_normal(3) * 2
        assert np.allclose(drift(bw, x), grad_log_green(bm3, x, data.points[0]),
                           atol=1e-12)


def test_bridge_drift_pole_raises(bm3):
    br = Bridge(bm3, np.ones(3))
    with pytest.raises(CoincidentPointsError):
        drift(br, np.ones(3))


def test_drift_overflow_error(bm3):
    br = Bridge(bm3, np.zeros(3))
    # rho = 1e-9 -> |drift| ~ 1/rho = 1e9 > default 1e6 bound
    with pytest.raises(DriftOverflowError):
        drift(br, np.array([1e-9, 0.0, 0.0]))


def test_bridge_drift_attracts(bm2):
    rng = np.random.default_rng(2)
    x1 = np.array([0.5, -0.5])
    br = Bridge(bm2, x1)
    for _ in range(50):
        x = x1 + rng.uniform(0.05, 4.0) * _unit(rng, 2)
        g = drift(br, x)
        assert g @ (x1 - x) > 0.0


def _unit(rng, d):
    u = rng.standard_normal(d)
    return u / np.linalg.norm(u)


def test_h_values(bm3):
    # constant: log h = 0
    assert h_value(ConstantH(bm3), np.array([1.0, 2.0, 3.0])) == 0.0
    # sphere: depends on |y| only
    sph = SphereHit(bm3, 5.0)
    a = h_value(sph, np.array([1.0, 0.0, 0.0]))
    b = h_value(sph, np.array([0.0, -1.0, 0.0]))
    assert abs(a - b) < 1e-14
    # bridge at distance 1, d=3, r=1/2: log h = log(e^{-1}/(2 pi))
    br = Bridge(bm3, np.zeros(3))
    got = h_value(br, np.array([1.0, 0.0, 0.0]))
    assert abs(got - math.log(math.exp(-1.0) / (2 * math.pi))) < 1e-12


def test_posterior_single_point(bm3):
    data = PointCloud.from_points([[1.0, 0.0, 0.0]])
    bw = build_exact_backward(data, ConstantH(bm3))
    p = posterior_endpoint_law(bw, np.zeros(3))
    assert p.shape == (1,)
    assert abs(p[0] - 1.0) < 1e-15


def test_posterior_symmetric_sphere_forward(bm3):
    # equal weights, equidistant from x, equal radii -> h cancels radially
    data = PointCloud.from_points([[1.0, 0.0, 0.0], [-1.0, 0.0, 0.0]])
    bw = build_exact_backward(data, SphereHit(bm3, 5.0))
    p = posterior_endpoint_law(bw, np.array([0.0, 0.7, 0.0]))
    assert np.allclose(p, [0.5, 0.5], atol=1e-13)


def test_posterior_two_point_closed_form(bm3):
    data = PointCloud.from_points([[0.0, 0.0, 0.0], [3.0, 0.0, 0.0]])
    bw = build_exact_backward(data, ConstantH(bm3))
    p = posterior_endpoint_law(bw, np.array([1.0, 0.0, 0.0]))
    # G(rho) = e^{-rho}/(2 pi rho) at r = 1/2
    g1 = math.exp(-1.0) / 1.0
    g2 = math.exp(-2.0) / 2.0
    assert abs(p[0] - g1 / (g1 + g2)) < 1e-12
    assert abs(p[0] - 0.8447) < 1e-4


def test_posterior_normalisation_and_weight_invariance(bm3):
    rng = np.random.default_rng(3)
    pts = rng.standard_normal((6, 3))
    w = rng.uniform(0.2, 2.0, 6)
    for scale in (1.0, 7.3, 1e-4):
        data = PointCloud.from_points(pts, weights=scale * w)
        bw = build_exact_backward(data, ConstantH(bm3))
        p = posterior_endpoint_law(bw, np.array([2.0, 2.0, 2.0]))
        assert abs(p.sum() - 1.0) < 1e-12
        if scale == 1.0:
            base = p
        else:
            assert np.allclose(p, base, atol=1e-12)


@pytest.mark.parametrize("variant", ["constant-ou", "bridge-bm", "bridge-ou",
                                     "sphere", "discrete-bm", "discrete-ou"])
def test_drift_matches_fd_of_log_h(variant, bm3, bm2, ou2):
    rng = np.random.default_rng(4)
    if variant == "constant-ou":
        spec = ConstantH(ou2)
        logh = lambda x: 0.0
        base = lambda x: -ou2.process.ou_theta * x
        d = 2
    elif variant == "bridge-bm":
        spec = Bridge(bm3, np.array([0.5, 0.5, 0.5]))
        logh = lambda x: log_green(bm3, x, spec.x1)
        base = lambda x: np.zeros(3)
        d = 3
    elif variant == "bridge-ou":
        spec = Bridge(ou2, np.array([0.3, -0.3]))
        logh = lambda x: log_green(ou2, x, spec.x1)
        base = lambda x: -ou2.process.ou_theta * x
        d = 2
    elif variant == "sphere":
        spec = SphereHit(bm3, 6.0)
        logh = lambda x: h_value(spec, x)
        base = lambda x: np.zeros(3)
        d = 3
    elif variant == "discrete-bm":
        data = PointCloud.from_points(rng.standard_normal((4, 3)))
        spec = build_exact_backward(data, ConstantH(bm3))
        logh = lambda x: log_backward_h(spec, x)
        base = lambda x: np.zeros(3)
        d = 3
    else:
        data = PointCloud.from_points(rng.standard_normal((4, 2)))
        spec = build_exact_backward(data, ConstantH(ou2))
        logh = lambda x: log_backward_h(spec, x)
        base = lambda x: -ou2.process.ou_theta * x
        d = 2

    for _ in range(30):
        x = rng.uniform(0.7, 2.5) * _unit(rng, d)
        g = drift(spec, x) - base(x)
        if np.linalg.norm(g) < 1e-12:
            continue
        fd = central_fd(logh, x)
        assert np.abs(g - fd).max() <= 1e-5 * max(1.0, np.abs(g).max())


def test_learned_backward_drift_contract(bm2):
    params = init_params((2, 8, 2), seed=0)
    w = params.weights.copy()
    w[-6:] = np.arange(6) * 0.1  # make the last layer non-zero
    params = ScoreParams((2, 8, 2), "tanh", w)
    lb = LearnedBackward(kernel=bm2, score=params, forward=ConstantH(bm2))
    rng = np.random.default_rng(5)
    x = rng.standard_normal((7, 2))
    assert np.allclose(drift(lb, x), score_eval(params, x), atol=1e-14)
    with pytest.raises(PreconditionError):
        h_value(lb, x[0])
