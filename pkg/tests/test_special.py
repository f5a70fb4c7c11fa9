"""Bessel machinery against closed forms, scipy, mpmath, and identities."""
import math

import numpy as np
import pytest
import scipy.special as sp

from hitgen.kernels import bessel_log_I, bessel_log_K, bessel_ratio_I
from hitgen.special import bessel_ratio_k, log_bessel_i, log_bessel_k


def test_half_integer_closed_forms():
    # I_{1/2}(z) = sqrt(2/(pi z)) sinh z at z = 1
    expect = math.log(math.sqrt(2.0 / math.pi) * math.sinh(1.0))
    assert abs(bessel_log_I(0.5, 1.0) - expect) < 1e-13
    # K_{1/2}(1) = sqrt(pi/2) e^{-1}
    expect = 0.5 * math.log(math.pi / 2.0) - 1.0
    assert abs(bessel_log_K(0.5, 1.0) - expect) < 1e-13
    assert abs(bessel_log_K(0.5, 1.0) - (-0.7742)) < 1e-4


@pytest.mark.parametrize("nu", [0.0, 0.3, 0.5, 1.0, 2.5, 7.0, 15.5])
def test_against_scipy(nu):
    z = np.logspace(-6, math.log10(600), 40)
    mine_k = log_bessel_k(nu, z)
    mine_i = log_bessel_i(nu, z)
    ref_k = np.log(sp.kve(nu, z)) - z
    ref_i = np.log(sp.ive(nu, z)) + z
    ok = np.isfinite(ref_k) & np.isfinite(ref_i)
    assert ok.sum() > 30
    assert np.abs(mine_k - ref_k)[ok].max() < 1e-11 * np.maximum(1, np.abs(ref_k[ok])).max()
    assert np.abs(mine_i - ref_i)[ok].max() < 1e-11 * np.maximum(1, np.abs(ref_i[ok])).max()


def test_extreme_corners_against_mpmath():
    mp = pytest.importorskip("mpmath")
    mp.mp.dps = 40
    for nu in (49.0, 255.0):
        for z in (1e-8, 1.0, 50.0, 700.0):
            ref_i = float(mp.log(mp.besseli(nu, z)))
            ref_k = float(mp.log(mp.besselk(nu, z)))
            assert abs(log_bessel_i(nu, z) - ref_i) < 1e-11 * max(1, abs(ref_i))
            assert abs(log_bessel_k(nu, z) - ref_k) < 1e-11 * max(1, abs(ref_k))


def test_log_domain_finite_over_contract_domain():
    z = np.logspace(-8, math.log10(700.0), 120)
    for nu in (0.0, 0.5, 12.0, 255.0):
        assert np.isfinite(log_bessel_i(nu, z)).all()
        assert np.isfinite(log_bessel_k(nu, z)).all()


def test_wronskian_identity():
    # I_nu(z) K_{nu+1}(z) + I_{nu+1}(z) K_nu(z) = 1/z
    rng = np.random.default_rng(0)
    for _ in range(40):
        nu = rng.uniform(0.0, 20.0)
        z = 10 ** rng.uniform(-4, 2.5)
        terms = np.logaddexp(
            log_bessel_i(nu, z) + log_bessel_k(nu + 1.0, z),
            log_bessel_i(nu + 1.0, z) + log_bessel_k(nu, z),
        )
        assert abs(terms - (-math.log(z))) < 1e-10


def test_ratio_i_limits_and_bounds():
    assert bessel_ratio_I(1.0, 0.0) == 0.0
    # leading series term: ratio ~ z / (2 (nu + 1))
    for d in (3, 10, 100):
        nu = (d - 2) / 2.0
        z = 1e-4
        assert abs(bessel_ratio_I(nu, z) - z / d) < 1e-8
    # large argument: matches the asymptotic oracle 1 - (2 nu + 1)/(2 z)
    # (the exact value at nu=1, z=50 sits 3% below 1)
    assert abs(bessel_ratio_I(1.0, 50.0) - 0.97) < 3e-4
    assert abs(bessel_ratio_I(1.0, 50.0) - 1.0) < 0.05
    z = np.logspace(-6, 2.5, 60)
    vals = bessel_ratio_I(1.5, z)
    assert (vals >= 0.0).all() and (vals < 1.0).all()
    assert (np.diff(vals) > 0).all()


def test_ratio_k_consistent_with_log_k():
    for nu in (0.0, 0.5, 3.0):
        for z in (0.05, 1.0, 30.0):
            direct = bessel_ratio_k(nu, z)
            via_logs = math.exp(log_bessel_k(nu + 1.0, z) - log_bessel_k(nu, z))
            assert abs(direct - via_logs) < 1e-12 * direct


def test_vector_matches_scalar():
    z = np.array([1e-7, 0.3, 2.0, 9.9, 10.1, 333.0])
    for nu in (0.0, 0.5, 4.0):
        vec_i = log_bessel_i(nu, z)
        vec_k = log_bessel_k(nu, z)
        for j, zz in enumerate(z):
            assert vec_i[j] == log_bessel_i(nu, float(zz))
            assert vec_k[j] == log_bessel_k(nu, float(zz))


def test_domain_errors():
    with pytest.raises(ValueError):
        bessel_log_I(1.0, 0.0)
    with pytest.raises(ValueError):
        bessel_log_K(1.0, -1.0)
    with pytest.raises(ValueError):
        bessel_log_I(-1.0, 1.0)
    with pytest.raises(ValueError):
        bessel_ratio_I(0.5, -0.5)
