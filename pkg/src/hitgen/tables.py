"""Compiled drift/kill descriptions consumed by the stepping engines.

The per-step hot loop must not call into the scalar special-function stack,
so radial quantities (Bessel ratios, the radial Brownian log-Green profile)
are tabulated once per transform on a logarithmic grid and evaluated by cubic
Hermite interpolation with analytic derivatives:

    d(K_{nu+1}/K_nu)/dz = KR^2 - (2 nu + 1)/z * KR - 1
    d(I_{nu+1}/I_nu)/dz = 1 - (2 nu + 1)/z * RI - RI^2
    d log G / d log z   = -z * KR(z)

Above the table the engines switch to two-term large-argument asymptotics;
below it the lookup clamps (the resulting drift exceeds the clip norm anyway,
and simulators never evaluate drifts inside kill sets).  Interpolation error
on the 8192-node grid is ~1e-12, far below the Euler-Maruyama step error.

Reference evaluations (`htransform.drift`, score targets, posteriors) never
use these tables; they call the exact special functions.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import PreconditionError
from .kernels import BROWNIAN, GreenKernel, quad_consts
from .special import bessel_ratio_i, bessel_ratio_k

# drift program kinds
DRIFT_FREE = 0        # lin_coef * x only (covers h == 1 for BM and OU)
DRIFT_SPHERE = 1      # sqrt(2r) * RI(|x| sqrt(2r)) * x/|x|
DRIFT_POINTS_BM = 2   # softmax mixture of Brownian Green gradients
DRIFT_POINTS_OU = 3   # softmax mixture of quadrature Green gradients
DRIFT_MLP = 4         # lin_coef * x + feed-forward score network

# kill program kinds
KILL_NONE = 0
KILL_EXP = 1          # pre-drawn step counts, handled by the orchestrator
KILL_BALL = 2
KILL_SPHERE_EXIT = 3
KILL_SUPPORT = 4

TABLE_SIZE = 8192
TABLE_Z_LO = 1e-8

_EMPTY = np.zeros(0, dtype=np.float64)
_EMPTY2 = np.zeros((0, 1), dtype=np.float64)
_EMPTY_I = np.zeros(0, dtype=np.int64)


@dataclass
class DriftProgram:
    kind: int
    dim: int
    lin_coef: float = 0.0
    clip_max: float = 1e6
    nu: float = 0.0
    sq2r: float = 0.0
    # Hermite tables over u = log z
    u0: float = 0.0
    du: float = 1.0
    z_hi: float = 0.0
    kr_val: np.ndarray = field(default_factory=lambda: _EMPTY)
    kr_der: np.ndarray = field(default_factory=lambda: _EMPTY)
    lg_val: np.ndarray = field(default_factory=lambda: _EMPTY)
    lg_der: np.ndarray = field(default_factory=lambda: _EMPTY)
    ri_val: np.ndarray = field(default_factory=lambda: _EMPTY)
    ri_der: np.ndarray = field(default_factory=lambda: _EMPTY)
    lg_asym_c0: float = 0.0
    # discrete target
    points: np.ndarray = field(default_factory=lambda: _EMPTY2)
    logits: np.ndarray = field(default_factory=lambda: _EMPTY)
    point_sq: np.ndarray = field(default_factory=lambda: _EMPTY)
    # OU quadrature nodes
    q_logpref: np.ndarray = field(default_factory=lambda: _EMPTY)
    q_csq: np.ndarray = field(default_factory=lambda: _EMPTY)
    q_cdot: np.ndarray = field(default_factory=lambda: _EMPTY)
    # score network
    mlp_weights: np.ndarray = field(default_factory=lambda: _EMPTY)
    mlp_dims: np.ndarray = field(default_factory=lambda: _EMPTY_I)
    mlp_activation: int = 0
    # constant additive drift (perturbed-control experiments)
    offset: np.ndarray = field(default_factory=lambda: _EMPTY)


@dataclass
class KillProgram:
    kind: int
    eps: float = 0.0
    radius: float = 0.0
    center: np.ndarray = field(default_factory=lambda: _EMPTY)
    points: np.ndarray = field(default_factory=lambda: _EMPTY2)


def hermite_grid(z_lo: float, z_hi: float, n: int = TABLE_SIZE):
    u = np.linspace(math.log(z_lo), math.log(z_hi), n)
    return u, np.exp(u)


def hermite_eval(u0, du, values, derivs, z):
    """Cubic Hermite interpolation in u = log z; clamps outside the grid."""
    n = values.shape[0]
    u = np.log(z)
    t = np.clip((u - u0) / du, 0.0, n - 1 - 1e-9)
    i = t.astype(np.int64)
    s = t - i
    s2 = s * s
    s3 = s2 * s
    h00 = 2 * s3 - 3 * s2 + 1
    h10 = s3 - 2 * s2 + s
    h01 = -2 * s3 + 3 * s2
    h11 = s3 - s2
    return (h00 * values[i] + h10 * du * derivs[i]
            + h01 * values[i + 1] + h11 * du * derivs[i + 1])


def _kr_tables(nu, z):
    kr = bessel_ratio_k(nu, z)
    der_u = z * (kr * kr - (2 * nu + 1) / z * kr - 1.0)
    return kr, der_u


def _ri_tables(nu, z):
    ri = bessel_ratio_i(nu, z)
    der_u = z - (2 * nu + 1) * ri - z * ri * ri
    return ri, der_u


def _logg_tables(kernel: GreenKernel, z, kr):
    # log G as a function of z = rho*sqrt(2r):  A - nu log z + log K_nu(z)
    from .special import log_bessel_k

    nu = kernel.process.order
    a0 = (-0.5 * kernel.dim * math.log(2 * math.pi) + math.log(2.0)
          + nu * math.log(2.0 * kernel.rate))
    val = a0 - nu * np.log(z) + log_bessel_k(nu, z)
    der_u = -z * kr
    return val, der_u, a0


def build_drift_program(spec, drift_max: float = 1e6,
                        offset=None) -> DriftProgram:
    """Lower an HSpec to the flat parameter pack the engines understand."""
    from .htransform import (
        Bridge,
        ConstantH,
        DiscreteBackward,
        LearnedBackward,
        SphereHit,
    )
    from .kernels import ORNSTEIN_UHLENBECK

    prog = _build_drift_program(spec, drift_max)
    if offset is not None:
        prog.offset = np.ascontiguousarray(offset, dtype=np.float64)
    return prog


def _build_drift_program(spec, drift_max: float) -> DriftProgram:
    from .htransform import (
        Bridge,
        ConstantH,
        DiscreteBackward,
        LearnedBackward,
        SphereHit,
    )
    from .kernels import ORNSTEIN_UHLENBECK

    kernel: GreenKernel = spec.kernel
    proc = kernel.process
    lin = -proc.ou_theta if proc.kind == ORNSTEIN_UHLENBECK else 0.0
    d = proc.dim

    if isinstance(spec, ConstantH):
        return DriftProgram(DRIFT_FREE, d, lin_coef=lin, clip_max=drift_max)

    if isinstance(spec, SphereHit):
        nu = proc.order
        sq2r = math.sqrt(2.0 * proc.rate)
        z_hi = max(50.0, sq2r * 4.0 * spec.radius + 10.0)
        u, z = hermite_grid(TABLE_Z_LO, z_hi)
        ri, ri_d = _ri_tables(nu, z)
        return DriftProgram(DRIFT_SPHERE, d, lin_coef=0.0, clip_max=drift_max,
                            nu=nu, sq2r=sq2r, u0=u[0], du=u[1] - u[0], z_hi=z_hi,
                            ri_val=ri, ri_der=ri_d)

    if isinstance(spec, LearnedBackward):
        params = spec.score
        return DriftProgram(DRIFT_MLP, d, lin_coef=lin, clip_max=drift_max,
                            mlp_weights=np.ascontiguousarray(params.weights, dtype=np.float64),
                            mlp_dims=np.asarray(params.layer_dims, dtype=np.int64),
                            mlp_activation=0 if params.activation == "tanh" else 1)

    if isinstance(spec, (Bridge, DiscreteBackward)):
        if isinstance(spec, Bridge):
            points = spec.x1[None, :]
            logits = np.zeros(1)
        else:
            points = spec.data.points
            logits = spec.base_logits
        points = np.ascontiguousarray(points, dtype=np.float64)
        logits = np.ascontiguousarray(logits, dtype=np.float64)
        if proc.kind == BROWNIAN:
            nu = proc.order
            sq2r = math.sqrt(2.0 * proc.rate)
            z_hi = max(50.0, sq2r * 2e4)
            u, z = hermite_grid(TABLE_Z_LO, z_hi)
            kr, kr_d = _kr_tables(nu, z)
            lg, lg_d, a0 = _logg_tables(kernel, z, kr)
            return DriftProgram(DRIFT_POINTS_BM, d, lin_coef=0.0, clip_max=drift_max,
                                nu=nu, sq2r=sq2r, u0=u[0], du=u[1] - u[0], z_hi=z_hi,
                                kr_val=kr, kr_der=kr_d, lg_val=lg, lg_der=lg_d,
                                lg_asym_c0=a0, points=points, logits=logits)
        log_pref, coef_sq, coef_dot, _ = quad_consts(kernel)
        return DriftProgram(DRIFT_POINTS_OU, d, lin_coef=lin, clip_max=drift_max,
                            points=points, logits=logits,
                            point_sq=(points * points).sum(axis=1),
                            q_logpref=np.ascontiguousarray(log_pref),
                            q_csq=np.ascontiguousarray(coef_sq),
                            q_cdot=np.ascontiguousarray(coef_dot))

    raise PreconditionError(f"no drift program for {type(spec).__name__}")


def build_kill_program(rule) -> KillProgram:
    from .sde import KillRule

    assert isinstance(rule, KillRule)
    if rule.kind == "none" or rule.kind == "exp":
        return KillProgram(KILL_NONE if rule.kind == "none" else KILL_EXP)
    if rule.kind == "ball":
        return KillProgram(KILL_BALL, eps=rule.eps,
                           center=np.ascontiguousarray(rule.center, dtype=np.float64))
    if rule.kind == "sphere":
        return KillProgram(KILL_SPHERE_EXIT, radius=rule.radius)
    if rule.kind == "support":
        est = rule.support
        return KillProgram(KILL_SUPPORT, eps=est.epsilon,
                           points=np.ascontiguousarray(est.base_points.points, dtype=np.float64))
    raise PreconditionError(f"no kill program for rule kind {rule.kind!r}")
