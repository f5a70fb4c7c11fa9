"""h-transform variants: drifts, log h values, and endpoint posteriors.

A transform is described by a tagged spec.  The three forward variants are

* ``ConstantH``     h == 1, the base process killed at an Exp(rate) time;
* ``Bridge``        h(y) = G_r(y, x1), attracted to and killed at x1;
* ``SphereHit``     h(y) = |y|^(-nu) I_nu(|y| sqrt(2r)) (Brownian only),
                    killed on exiting the ball of the given radius.

The two backward variants wrap a forward one:

* ``DiscreteBackward`` carries the closed-form backward function of a
  discrete target, log bh(x) = logsumexp_i [log w_i - log h(y_i)
  + log G_r(x, y_i)], whose gradient is a softmax mixture of Green-kernel
  gradients;
* ``LearnedBackward`` replaces that gradient with a trained score network.

All h-related quantities are carried in the log domain and only up to a
variant-wide additive constant; constants cancel in every posterior ratio and
drift.  Drift evaluations accept a single point ``(d,)`` or a batch
``(N, d)``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .dataio import PointCloud
from .errors import DriftOverflowError, EmptyDataError, PreconditionError
from .kernels import (
    BROWNIAN,
    GreenKernel,
    base_drift,
    grad_log_green,
    log_green,
)
from .special import bessel_ratio_i, log_bessel_i

DEFAULT_DRIFT_MAX = 1e6


@dataclass(frozen=True, eq=False)
class HSpec:
    """Common base: every variant carries the Green kernel it lives on."""

    kernel: GreenKernel

    @property
    def dim(self) -> int:
        return self.kernel.dim


@dataclass(frozen=True, eq=False)
class ConstantH(HSpec):
    pass


@dataclass(frozen=True, eq=False)
class Bridge(HSpec):
    x1: np.ndarray

    def __post_init__(self):
        x1 = np.asarray(self.x1, dtype=np.float64)
        if x1.shape != (self.kernel.dim,):
            raise ValueError("bridge target must be a single point of the right dimension")
        object.__setattr__(self, "x1", x1)


@dataclass(frozen=True, eq=False)
class SphereHit(HSpec):
    radius: float

    def __post_init__(self):
        if self.kernel.process.kind != BROWNIAN:
            raise ValueError("sphere-hitting transform requires a Brownian kernel")
        if self.radius <= 0:
            raise ValueError("radius must be > 0")


@dataclass(frozen=True, eq=False)
class DiscreteBackward(HSpec):
    data: PointCloud
    forward: HSpec
    base_logits: np.ndarray  # log w_i - log h_forward(y_i)

    def __post_init__(self):
        if self.data.n == 0:
            raise EmptyDataError("backward transform needs a non-empty point cloud")
        logits = np.asarray(self.base_logits, dtype=np.float64)
        if logits.shape != (self.data.n,):
            raise ValueError("base_logits must have one entry per data point")
        object.__setattr__(self, "base_logits", logits)


@dataclass(frozen=True, eq=False)
class LearnedBackward(HSpec):
    score: "object"  # ScoreParams; typed loosely to avoid an import cycle
    forward: HSpec


FORWARD_VARIANTS = (ConstantH, Bridge, SphereHit)


def _as_batch(x, dim):
    x = np.asarray(x, dtype=np.float64)
    if x.shape[-1] != dim:
        raise ValueError(f"state must have dimension {dim}")
    scalar = x.ndim == 1
    return np.atleast_2d(x), scalar


def sphere_log_h(kernel: GreenKernel, radii):
    """log h for the sphere-hitting transform as a function of |y|."""
    nu = kernel.process.order
    sq2r = math.sqrt(2.0 * kernel.rate)
    radii = np.asarray(radii, dtype=np.float64)
    out = np.empty_like(radii)
    tiny = radii < 1e-12
    # continuous extension at the origin: (sqrt(2r)/2)^nu / Gamma(nu+1)
    out[tiny] = nu * math.log(sq2r / 2.0) - math.lgamma(nu + 1.0)
    if (~tiny).any():
        rr = radii[~tiny]
        out[~tiny] = -nu * np.log(rr) + log_bessel_i(nu, rr * sq2r)
    return out


def log_backward_h(spec: DiscreteBackward, x):
    """log bh(x) (up to the variant-wide constant), batched over x."""
    xb, scalar = _as_batch(x, spec.dim)
    lg = log_green(spec.kernel, xb[:, None, :], spec.data.points)
    logits = spec.base_logits[None, :] + lg
    m = logits.max(axis=1)
    out = m + np.log(np.exp(logits - m[:, None]).sum(axis=1))
    return float(out[0]) if scalar else out


def posterior_logits(spec: DiscreteBackward, x):
    """Unnormalised log posterior over data points, batched over x."""
    xb, _ = _as_batch(x, spec.dim)
    lg = log_green(spec.kernel, xb[:, None, :], spec.data.points)
    return spec.base_logits[None, :] + lg


def posterior_endpoint_law(spec: DiscreteBackward, x) -> np.ndarray:
    """P(endpoint = y_i | start x): softmax of w_i G_r(x, y_i) / h(y_i)."""
    logits = posterior_logits(spec, x)
    m = logits.max(axis=1, keepdims=True)
    p = np.exp(logits - m)
    p /= p.sum(axis=1, keepdims=True)
    x = np.asarray(x)
    return p[0] if x.ndim == 1 else p


def h_value(spec: HSpec, y):
    """log h(y) (forward variants) or log bh(y) (discrete backward).

    Values are defined up to an additive constant per variant; the constant
    cancels in all posterior ratios.
    """
    if isinstance(spec, ConstantH):
        yb, scalar = _as_batch(y, spec.dim)
        out = np.zeros(yb.shape[0])
        return 0.0 if scalar else out
    if isinstance(spec, Bridge):
        return log_green(spec.kernel, y, spec.x1)
    if isinstance(spec, SphereHit):
        yb, scalar = _as_batch(y, spec.dim)
        out = sphere_log_h(spec.kernel, np.sqrt((yb * yb).sum(axis=1)))
        return float(out[0]) if scalar else out
    if isinstance(spec, DiscreteBackward):
        return log_backward_h(spec, y)
    raise PreconditionError(f"h_value is not defined for {type(spec).__name__}")


def drift(spec: HSpec, x, drift_max: float = DEFAULT_DRIFT_MAX):
    """Drift of the h-transformed process at x.

    Raises ``DriftOverflowError`` if any drift norm exceeds ``drift_max``
    (the simulator instead clips and counts; see ``sde``).
    """
    xb, scalar = _as_batch(x, spec.dim)
    out = _drift_batch(spec, xb)
    norms = np.sqrt((out * out).sum(axis=1))
    if (norms > drift_max).any():
        raise DriftOverflowError(f"drift norm {norms.max():.3g} exceeds {drift_max:g}")
    if not np.isfinite(out).all():
        raise DriftOverflowError("drift is not finite")
    return out[0] if scalar else out


def _drift_batch(spec: HSpec, xb: np.ndarray) -> np.ndarray:
    if isinstance(spec, ConstantH):
        return base_drift(spec.kernel.process, xb)
    if isinstance(spec, Bridge):
        return base_drift(spec.kernel.process, xb) + grad_log_green(spec.kernel, xb, spec.x1)
    if isinstance(spec, SphereHit):
        radii = np.sqrt((xb * xb).sum(axis=1))
        if (radii >= spec.radius).any():
            raise PreconditionError("sphere-hitting drift evaluated outside the open ball")
        sq2r = math.sqrt(2.0 * spec.kernel.rate)
        ratio = bessel_ratio_i(spec.kernel.process.order, radii * sq2r)
        with np.errstate(invalid="ignore", divide="ignore"):
            scale = np.where(radii > 0.0, sq2r * ratio / np.where(radii > 0, radii, 1.0), 0.0)
        return scale[:, None] * xb
    if isinstance(spec, DiscreteBackward):
        logits = posterior_logits(spec, xb)
        m = logits.max(axis=1, keepdims=True)
        w = np.exp(logits - m)
        w /= w.sum(axis=1, keepdims=True)
        grads = grad_log_green(spec.kernel, xb[:, None, :], spec.data.points)
        return base_drift(spec.kernel.process, xb) + (w[..., None] * grads).sum(axis=1)
    if isinstance(spec, LearnedBackward):
        from .score import score_eval  # local import to avoid a cycle

        return base_drift(spec.kernel.process, xb) + score_eval(spec.score, xb)
    raise PreconditionError(f"drift is not defined for {type(spec).__name__}")
