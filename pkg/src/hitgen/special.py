"""Log-domain modified Bessel functions I_nu, K_nu and their order ratios.

Everything is evaluated in the log domain so that Green-kernel work stays
finite for dimensions into the hundreds (orders nu = (d-2)/2 up to ~256) and
arguments z in [1e-8, 700].  Strategy:

* ``K_nu``: Temme's series at fractional order mu in [-1/2, 1/2) for z <= 2,
  Steed's continued fraction (CF2) for z > 2, then the three-term recurrence
  upward in the order with overflow rescaling.  The recurrence is stable in
  this direction because K grows with the order.
* ``I_nu``: the ascending power series (accumulated with log-sum-exp) for
  z < max(10, nu); otherwise the ratio I_{nu+1}/I_nu from its continued
  fraction combined with the K pair through the Wronskian
  I_nu(z) K_{nu+1}(z) + I_{nu+1}(z) K_nu(z) = 1/z.
* ``I_{nu+1}/I_nu``: Gautschi-style continued fraction with the modified
  Lentz algorithm; exact limit 0 at z = 0.

All functions accept a scalar or ndarray argument ``z`` (the order is scalar)
and evaluate each element until *its own* convergence criterion is met, so
results are independent of what else is in the batch.
"""
from __future__ import annotations

import math

import numpy as np

_EULER_GAMMA = 0.5772156649015329
# cubic coefficient of the Taylor series of 1/Gamma(1+x)
_RGAMMA_C3 = -0.04200263503409524
_EPS = 1e-16
_RESCALE = 1e250
_LOG_RESCALE = math.log(_RESCALE)


def _as_array(z):
    arr = np.asarray(z, dtype=np.float64)
    return arr, arr.ndim == 0


def _temme_k_pair(mu: float, z: np.ndarray):
    """K_mu(z), K_{mu+1}(z) for |mu| <= 1/2 and 0 < z <= 2 (Temme's series)."""
    if abs(mu) < 1e-6:
        gam1 = -_EULER_GAMMA - _RGAMMA_C3 * mu * mu
    else:
        gam1 = (1.0 / math.gamma(1.0 - mu) - 1.0 / math.gamma(1.0 + mu)) / (2.0 * mu)
    gam2 = (1.0 / math.gamma(1.0 - mu) + 1.0 / math.gamma(1.0 + mu)) / 2.0
    pimu = math.pi * mu
    fact = pimu / math.sin(pimu) if abs(pimu) > 1e-15 else 1.0

    d = -np.log(0.5 * z)
    e = mu * d
    fact2 = np.where(np.abs(e) > 1e-15, np.sinh(e) / np.where(e != 0.0, e, 1.0), 1.0)
    f = fact * (gam1 * np.cosh(e) + gam2 * fact2 * d)
    ksum = f.copy()
    p = 0.5 * np.exp(e) * math.gamma(1.0 + mu)
    q = 0.5 * np.exp(-e) * math.gamma(1.0 - mu)
    c = np.ones_like(z)
    zz = 0.25 * z * z
    ksum1 = p.copy()
    active = np.ones(z.shape, dtype=bool)
    for i in range(1, 400):
        f = np.where(active, (i * f + p + q) / (i * i - mu * mu), f)
        c = np.where(active, c * zz / i, c)
        p = np.where(active, p / (i - mu), p)
        q = np.where(active, q / (i + mu), q)
        dl = c * f
        ksum = np.where(active, ksum + dl, ksum)
        ksum1 = np.where(active, ksum1 + c * (p - i * f), ksum1)
        active &= np.abs(dl) >= np.abs(ksum) * _EPS
        if not active.any():
            break
    return ksum, ksum1 * 2.0 / z


def _cf2_k_pair_scaled(mu: float, z: np.ndarray):
    """e^z K_mu(z), e^z K_{mu+1}(z) for |mu| <= 1/2 and z > 2 (Steed's CF2)."""
    b = 2.0 * (1.0 + z)
    d = 1.0 / b
    h = d.copy()
    delh = d.copy()
    q1 = np.zeros_like(z)
    q2 = np.ones_like(z)
    a1 = 0.25 - mu * mu
    q = np.full_like(z, a1)
    c = np.full_like(z, a1)
    a = -a1
    s = 1.0 + q * delh
    active = np.ones(z.shape, dtype=bool)
    for i in range(2, 2000):
        a -= 2 * (i - 1)
        c = np.where(active, -a * c / i, c)
        qnew = np.where(active, (q1 - b * q2) / a, q2)
        q1 = np.where(active, q2, q1)
        q2 = np.where(active, qnew, q2)
        q = np.where(active, q + c * qnew, q)
        b = np.where(active, b + 2.0, b)
        d = np.where(active, 1.0 / (b + a * d), d)
        delh = np.where(active, (b * d - 1.0) * delh, delh)
        h = np.where(active, h + delh, h)
        dels = q * delh
        s = np.where(active, s + dels, s)
        active &= np.abs(dels / s) >= _EPS
        if not active.any():
            break
    h = a1 * h
    kmu = np.sqrt(np.pi / (2.0 * z)) / s
    kmu1 = kmu * (mu + z + 0.5 - h) / z
    return kmu, kmu1


def _log_k_pair(nu: float, z: np.ndarray):
    """(log K_nu(z), log K_{nu+1}(z)) for nu >= -1/2, elementwise over z."""
    nu = abs(nu)  # K_{-nu} = K_nu
    n_up = int(nu + 0.5)
    mu = nu - n_up  # in [-1/2, 1/2)

    kmu = np.empty_like(z)
    kmu1 = np.empty_like(z)
    logsc = np.zeros_like(z)
    small = z <= 2.0
    if small.any():
        kmu[small], kmu1[small] = _temme_k_pair(mu, z[small])
    if (~small).any():
        zl = z[~small]
        a, b = _cf2_k_pair_scaled(mu, zl)
        kmu[~small] = a
        kmu1[~small] = b
        logsc[~small] = -zl

    for j in range(n_up):
        knext = kmu + (2.0 * (mu + j + 1.0) / z) * kmu1
        kmu = kmu1
        kmu1 = knext
        big = kmu1 > _RESCALE
        if big.any():
            kmu[big] /= _RESCALE
            kmu1[big] /= _RESCALE
            logsc[big] += _LOG_RESCALE
    return np.log(kmu) + logsc, np.log(kmu1) + logsc


def _ratio_i_cf(nu: float, z: np.ndarray):
    """I_{nu+1}(z)/I_nu(z) by continued fraction (modified Lentz)."""
    tiny = 1e-300
    f = np.full_like(z, tiny)
    c = np.full_like(z, tiny)
    d = np.zeros_like(z)
    active = z > 0.0
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        for k in range(1, 20000):
            bk = 2.0 * (nu + k) / np.where(z > 0.0, z, 1.0)
            d = np.where(active, bk + d, d)
            d = np.where(active & (d == 0.0), tiny, d)
            c = np.where(active, bk + 1.0 / c, c)
            c = np.where(active & (c == 0.0), tiny, c)
            d = np.where(active, 1.0 / d, d)
            delta = np.where(active, c * d, 1.0)
            f = np.where(active, f * delta, f)
            active &= np.abs(delta - 1.0) >= _EPS
            if not active.any():
                break
    return np.where(z > 0.0, f, 0.0)


def _log_i_series(nu: float, z: np.ndarray):
    """Ascending series for log I_nu, accumulated in the log domain."""
    logzz = 2.0 * np.log(0.5 * z)
    lsum = np.zeros_like(z)
    lt = np.zeros_like(z)
    active = np.ones(z.shape, dtype=bool)
    for k in range(1, 600):
        lt = np.where(active, lt + logzz - math.log(k * (nu + k)), lt)
        lsum = np.where(active, np.logaddexp(lsum, lt), lsum)
        active &= (lt - lsum) >= math.log(_EPS)
        if not active.any():
            break
    return nu * np.log(0.5 * z) - math.lgamma(nu + 1.0) + lsum


def log_bessel_i(nu: float, z):
    """log I_nu(z) for nu >= -1/2, z > 0 (scalar or array z)."""
    if nu < -0.5:
        raise ValueError(f"order must be >= -1/2, got {nu}")
    arr, scalar = _as_array(z)
    arr = np.atleast_1d(arr).astype(np.float64, copy=True)
    if (arr <= 0.0).any():
        raise ValueError("argument must be > 0")
    out = np.empty_like(arr)
    series = arr < max(10.0, nu)
    if series.any():
        out[series] = _log_i_series(nu, arr[series])
    rest = ~series
    if rest.any():
        zr = arr[rest]
        lk0, lk1 = _log_k_pair(nu, zr)
        ratio = _ratio_i_cf(nu, zr)
        # Wronskian: I_nu (K_{nu+1} + ratio*K_nu) = 1/z
        out[rest] = -np.log(zr) - np.logaddexp(lk1, np.log(ratio) + lk0)
    return float(out[0]) if scalar else out.reshape(np.shape(z))


def log_bessel_k(nu: float, z):
    """log K_nu(z) for real nu, z > 0 (scalar or array z)."""
    arr, scalar = _as_array(z)
    arr = np.atleast_1d(arr).astype(np.float64, copy=True)
    if (arr <= 0.0).any():
        raise ValueError("argument must be > 0")
    out, _ = _log_k_pair(abs(nu), arr)
    return float(out[0]) if scalar else out.reshape(np.shape(z))


def bessel_ratio_i(nu: float, z):
    """I_{nu+1}(z)/I_nu(z) in [0, 1); exactly 0 at z = 0; increasing in z."""
    if nu < -0.5:
        raise ValueError(f"order must be >= -1/2, got {nu}")
    arr, scalar = _as_array(z)
    arr = np.atleast_1d(arr).astype(np.float64, copy=True)
    if (arr < 0.0).any():
        raise ValueError("argument must be >= 0")
    out = _ratio_i_cf(nu, arr)
    return float(out[0]) if scalar else out.reshape(np.shape(z))


def bessel_ratio_k(nu: float, z):
    """K_{nu+1}(z)/K_nu(z) for nu >= -1/2, z > 0; always > 1 for nu >= 0."""
    arr, scalar = _as_array(z)
    arr = np.atleast_1d(arr).astype(np.float64, copy=True)
    if (arr <= 0.0).any():
        raise ValueError("argument must be > 0")
    lk0, lk1 = _log_k_pair(nu, arr)
    out = np.exp(lk1 - lk0)
    return float(out[0]) if scalar else out.reshape(np.shape(z))
