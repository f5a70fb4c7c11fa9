"""Base diffusions and their r-Green kernels.

Two base processes are supported on R^d, both with unit diffusion matrix:

* Brownian motion, reference measure = Lebesgue.  The Green kernel is radial
  with the closed form

      G_r(rho) = (2 pi)^(-d/2) * 2 * (rho^2 / (2r))^((2-d)/4)
                 * K_{(d-2)/2}(rho * sqrt(2r)),

  which has a pole at rho = 0 for d >= 2 and is decreasing in rho.

* Ornstein-Uhlenbeck dZ = -theta Z dt + dW, reference measure = its
  stationary Gaussian N(0, 1/(2 theta) I).  With s = exp(-theta t), the
  transition density symmetrised with respect to that measure is

      log q_t(x, y) = -(d/2) log(1 - s^2)
                      - theta s / (1 - s^2) * (s (|x|^2 + |y|^2) - 2 <x, y>),

  and G_r(x,y) = int_0^inf exp(-r t) q_t(x,y) dt is evaluated by
  Gauss-Legendre quadrature in u = log t on a fixed window.  The gradient
  differentiates the same quadrature sum exactly, so value and gradient are
  mutually consistent to machine precision.

All evaluations are done in the log domain; (x, y) pairs closer than
``rho_min`` raise instead of being clamped so that score targets are never
silently corrupted.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .errors import CoincidentPointsError, QuadratureError
from .special import (
    bessel_ratio_i,
    bessel_ratio_k,
    log_bessel_i,
    log_bessel_k,
)

__all__ = [
    "ProcessSpec",
    "GreenKernel",
    "brownian_kernel",
    "ou_kernel",
    "base_drift",
    "log_green",
    "grad_log_green",
    "log_reference_density",
    "bessel_log_I",
    "bessel_log_K",
    "bessel_ratio_I",
]

BROWNIAN = "brownian"
ORNSTEIN_UHLENBECK = "ornstein-uhlenbeck"

# quadrature tail must stay below this fraction of the integral
_TAIL_RTOL = 1e-9


@dataclass(frozen=True)
class ProcessSpec:
    """Base diffusion: kind, dimension, killing/discount rate, OU reversion speed."""

    kind: str
    dim: int
    rate: float
    ou_theta: float = 0.0

    def __post_init__(self):
        if self.kind not in (BROWNIAN, ORNSTEIN_UHLENBECK):
            raise ValueError(f"unknown process kind {self.kind!r}")
        if self.dim < 1:
            raise ValueError("dim must be >= 1")
        if self.rate <= 0.0:
            raise ValueError("rate must be > 0")
        if self.kind == ORNSTEIN_UHLENBECK and self.ou_theta <= 0.0:
            raise ValueError("ou_theta must be > 0 for the OU process")

    @property
    def order(self) -> float:
        """Bessel order (d - 2) / 2 attached to radial Brownian formulas."""
        return 0.5 * (self.dim - 2)


@dataclass(frozen=True)
class GreenKernel:
    """r-Green kernel of a base process, analytic (BM) or by quadrature.

    ``quad_rho_floor`` sets the smallest pair separation the fixed quadrature
    window resolves; evaluations below it raise ``QuadratureError`` (lower the
    floor and/or raise ``quad_nodes`` to extend the domain).
    """

    process: ProcessSpec
    mode: str = "analytic"
    quad_nodes: int = 256
    quad_t_max: float = 0.0
    rho_min: float = 1e-10
    quad_rho_floor: float = 1e-4

    def __post_init__(self):
        if self.mode not in ("analytic", "quadrature"):
            raise ValueError(f"unknown kernel mode {self.mode!r}")
        if self.mode == "analytic" and self.process.kind != BROWNIAN:
            raise ValueError("analytic mode is only valid for Brownian motion")
        if self.mode == "quadrature":
            if self.quad_nodes < 16:
                raise ValueError("quad_nodes must be >= 16")
            if self.quad_t_max == 0.0:
                # choose t_max so the discounted tail is below 1e-12
                object.__setattr__(self, "quad_t_max", -math.log(1e-12) / self.process.rate)
            if self.quad_t_max <= 0.0:
                raise ValueError("quad_t_max must be > 0")

    @property
    def dim(self) -> int:
        return self.process.dim

    @property
    def rate(self) -> float:
        return self.process.rate


def brownian_kernel(dim: int, rate: float) -> GreenKernel:
    return GreenKernel(ProcessSpec(BROWNIAN, dim, rate))


def ou_kernel(dim: int, rate: float, theta: float, **kw) -> GreenKernel:
    return GreenKernel(ProcessSpec(ORNSTEIN_UHLENBECK, dim, rate, theta),
                       mode="quadrature", **kw)


def base_drift(process: ProcessSpec, x: np.ndarray) -> np.ndarray:
    """Drift b(x) of the unconditioned base process."""
    if process.kind == BROWNIAN:
        return np.zeros_like(x)
    return -process.ou_theta * x


def log_reference_density(kernel: GreenKernel, y: np.ndarray):
    """log density of the reference measure m wrt Lebesgue (0 for BM)."""
    p = kernel.process
    if p.kind == BROWNIAN:
        return np.zeros(np.shape(y)[:-1])
    y = np.asarray(y, dtype=np.float64)
    return 0.5 * p.dim * math.log(p.ou_theta / math.pi) - p.ou_theta * (y * y).sum(axis=-1)


# --- quadrature node tables ------------------------------------------------

@lru_cache(maxsize=32)
def _quad_consts(kind, dim, rate, theta, n_nodes, t_max, rho_floor):
    """Per-node constants of the log-time Gauss-Legendre rule.

    Returns (log_pref, coef_sq, coef_dot) such that for a pair (x, y)

        log integrand_j = log_pref_j - coef_sq_j * (|x|^2 + |y|^2)
                          + coef_dot_j * <x, y>          (OU)
        log integrand_j = log_pref_j - coef_sq_j * rho^2  (BM, coef_dot unused)
    """
    u_lo = math.log(rho_floor * rho_floor / 1600.0)
    u_hi = math.log(t_max)
    xg, wg = np.polynomial.legendre.leggauss(n_nodes)
    u = 0.5 * (u_hi - u_lo) * xg + 0.5 * (u_hi + u_lo)
    wu = 0.5 * (u_hi - u_lo) * wg
    t = np.exp(u)
    if kind == BROWNIAN:
        log_pref = np.log(wu) + u - rate * t - 0.5 * dim * np.log(2.0 * math.pi * t)
        coef_sq = 0.5 / t
        coef_dot = np.zeros_like(t)
    else:
        s = np.exp(-theta * t)
        one_m_s2 = -np.expm1(-2.0 * theta * t)  # 1 - s^2 without cancellation
        log_pref = np.log(wu) + u - rate * t - 0.5 * dim * np.log(one_m_s2)
        coef_sq = theta * s * s / one_m_s2
        coef_dot = 2.0 * theta * s / one_m_s2
    return log_pref, coef_sq, coef_dot, t[-1]


def quad_consts(kernel: GreenKernel):
    p = kernel.process
    return _quad_consts(p.kind, p.dim, p.rate, p.ou_theta,
                        kernel.quad_nodes, kernel.quad_t_max, kernel.quad_rho_floor)


# --- evaluation ------------------------------------------------------------

def _pair_arrays(kernel, x, y):
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.shape[-1] != kernel.dim or y.shape[-1] != kernel.dim:
        raise ValueError(f"points must have dimension {kernel.dim}")
    scalar = x.ndim == 1 and y.ndim == 1
    x2 = np.atleast_2d(x)
    y2 = np.atleast_2d(y)
    x2, y2 = np.broadcast_arrays(x2, y2)
    rho = np.sqrt(((x2 - y2) ** 2).sum(axis=-1))
    if (rho < kernel.rho_min).any():
        raise CoincidentPointsError(
            f"pair separation below floor {kernel.rho_min:g}")
    return x2, y2, rho, scalar


def _log_green_bm_radial(kernel: GreenKernel, rho):
    """log G_r(rho) for the analytic Brownian kernel, vectorised over rho."""
    d = kernel.dim
    r = kernel.rate
    nu = kernel.process.order
    z = rho * math.sqrt(2.0 * r)
    out = (-0.5 * d * math.log(2.0 * math.pi) + math.log(2.0)
           + 0.5 * nu * math.log(2.0 * r) - nu * np.log(rho)
           + log_bessel_k(nu, z))
    return out


def _quad_weights(kernel, x2, y2, rho):
    """Per-node log integrand for quadrature kernels."""
    log_pref, coef_sq, coef_dot, _ = quad_consts(kernel)
    if (rho < kernel.quad_rho_floor).any():
        raise QuadratureError(
            f"pair separation below quadrature floor {kernel.quad_rho_floor:g}; "
            "rebuild the kernel with a smaller quad_rho_floor")
    if kernel.process.kind == BROWNIAN:
        expo = log_pref - np.multiply.outer(rho * rho, coef_sq)
    else:
        sq = (x2 * x2).sum(axis=-1) + (y2 * y2).sum(axis=-1)
        dot = (x2 * y2).sum(axis=-1)
        expo = (log_pref - np.multiply.outer(sq, coef_sq)
                + np.multiply.outer(dot, coef_dot))
    return expo


def _check_tail(kernel, expo, logval):
    # last node sits at t ~ t_max; its contribution bounds the discarded tail
    # up to the factor 1/(r * w_last) ~ exp of a few
    log_tail = expo[..., -1] - math.log(kernel.rate)
    if (log_tail - logval > math.log(_TAIL_RTOL)).any():
        raise QuadratureError("quadrature tail estimate exceeds tolerance; "
                              "increase quad_t_max")


def log_green(kernel: GreenKernel, x, y):
    """log G_r(x, y).  Accepts (d,) or (N, d) points; symmetric in (x, y)."""
    x2, y2, rho, scalar = _pair_arrays(kernel, x, y)
    if kernel.mode == "analytic":
        out = _log_green_bm_radial(kernel, rho)
    else:
        expo = _quad_weights(kernel, x2, y2, rho)
        m = expo.max(axis=-1)
        out = m + np.log(np.exp(expo - m[..., None]).sum(axis=-1))
        _check_tail(kernel, expo, out)
    return float(out[0]) if scalar else out


def grad_log_green(kernel: GreenKernel, x, y):
    """Gradient of log G_r in the first argument; shape matches x."""
    x2, y2, rho, scalar = _pair_arrays(kernel, x, y)
    if kernel.mode == "analytic":
        nu = kernel.process.order
        sq2r = math.sqrt(2.0 * kernel.rate)
        kr = bessel_ratio_k(nu, rho * sq2r)
        out = (-sq2r * kr / rho)[..., None] * (x2 - y2)
    else:
        expo = _quad_weights(kernel, x2, y2, rho)
        m = expo.max(axis=-1, keepdims=True)
        w = np.exp(expo - m)
        w /= w.sum(axis=-1, keepdims=True)
        _, coef_sq, coef_dot, _ = quad_consts(kernel)
        # d/dx of (-coef_sq |x|^2 + coef_dot <x,y>) = -2 coef_sq x + coef_dot y
        gx = -2.0 * np.einsum("...j,j,...k->...k", w, coef_sq, x2)
        gy = np.einsum("...j,j,...k->...k", w, coef_dot, y2)
        out = gx + gy
    return out[0] if scalar else out


# spec-facing aliases for the special functions
def bessel_log_I(nu: float, z):
    """log I_nu(z), nu >= 0, z > 0."""
    if nu < 0:
        raise ValueError("nu must be >= 0")
    return log_bessel_i(nu, z)


def bessel_log_K(nu: float, z):
    """log K_nu(z), nu >= 0, z > 0."""
    if nu < 0:
        raise ValueError("nu must be >= 0")
    return log_bessel_k(nu, z)


def bessel_ratio_I(nu: float, z):
    """I_{nu+1}(z)/I_nu(z) in [0, 1); 0 at z = 0."""
    return bessel_ratio_i(nu, z)
