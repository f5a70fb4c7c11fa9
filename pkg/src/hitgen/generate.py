"""Backward generation: initialise, run until the support is hit, collect.

Initial states for unconditional sampling depend on the forward transform:
bridge -> a point at a small offset from the pinned state (pole
regularisation), sphere -> uniform on the sphere, h == 1 -> the stationary
law of the base process (OU only; Brownian motion has none).  Conditioning
needs no initial law at all: start the backward process at the state of
interest.

A generation is a sample only if it terminates by hitting the estimated
support; step-cap exhaustions are failures, excluded from sample sets and
counted, never silently included.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .errors import (
    GenerationFailedError,
    InitializationError,
    PreconditionError,
)
from .htransform import (
    Bridge,
    ConstantH,
    DiscreteBackward,
    HSpec,
    LearnedBackward,
    SphereHit,
)
from .kernels import ORNSTEIN_UHLENBECK
from .sde import HIT_KILL, KillRule, simulate_batch

DEFAULT_START_OFFSET = 1e-3
_MAX_INIT_TRIES = 100


def init_unconditional(forward: HSpec, rng_seed, support=None,
                       start_offset: float = DEFAULT_START_OFFSET) -> np.ndarray:
    """Draw one backward starting point matching the forward terminal law."""
    rng = np.random.default_rng(rng_seed)
    d = forward.kernel.dim
    proc = forward.kernel.process

    def draw():
        if isinstance(forward, Bridge):
            u = rng.standard_normal(d)
            u /= np.linalg.norm(u)
            return forward.x1 + start_offset * u
        if isinstance(forward, SphereHit):
            u = rng.standard_normal(d)
            u /= np.linalg.norm(u)
            return forward.radius * u
        if isinstance(forward, ConstantH):
            if proc.kind != ORNSTEIN_UHLENBECK:
                raise PreconditionError(
                    "unconditional initialisation with h == 1 needs the OU kernel "
                    "(the Brownian base process has no stationary law)")
            if proc.rate > proc.ou_theta / 10.0:
                warnings.warn("rate should be small relative to ou_theta for the "
                              "stationary initialisation to be accurate",
                              stacklevel=3)
            return rng.normal(0.0, np.sqrt(0.5 / proc.ou_theta), d)
        raise PreconditionError(
            f"no unconditional initialiser for {type(forward).__name__}")

    for _ in range(_MAX_INIT_TRIES):
        x = draw()
        if support is None or not support.contains(x):
            return x
    raise InitializationError(
        f"initial law persistently intersects the support estimate "
        f"({_MAX_INIT_TRIES} attempts)")


@dataclass(frozen=True)
class GenerationResult:
    sample: np.ndarray
    lifetime: float
    steps: int
    init: np.ndarray


@dataclass(frozen=True)
class GenerationBatch:
    samples: np.ndarray      # (m, d), successful generations only
    lifetimes: np.ndarray    # (m,)
    steps: np.ndarray        # (m,)
    inits: np.ndarray        # (m, d)
    n_failed: int
    n_clipped_steps: int

    @property
    def n_requested(self) -> int:
        return len(self.samples) + self.n_failed

    def metrics(self) -> dict:
        n = max(self.n_requested, 1)
        return {
            "n_requested": self.n_requested,
            "n_samples": int(len(self.samples)),
            "n_failed": int(self.n_failed),
            "failure_rate": self.n_failed / n,
            "mean_lifetime": float(self.lifetimes.mean()) if len(self.lifetimes) else None,
            "clipped_steps": int(self.n_clipped_steps),
        }


def _check_backward(backward):
    if not isinstance(backward, (LearnedBackward, DiscreteBackward)):
        raise PreconditionError(
            "generation needs a discrete or learned backward transform")


def generate(backward, support, init, dt: float, seed,
             step_cap: int = 1_000_000, drift_max: float = 1e6) -> GenerationResult:
    """One backward run from `init`, terminated at first hitting of the support."""
    _check_backward(backward)
    init = np.asarray(init, dtype=np.float64)
    if support.contains(init):
        raise PreconditionError("init lies inside the estimated support")
    rule = KillRule.hit_support(support, step_cap=step_cap)
    path = simulate_batch(backward, init[None, :], rule, dt, seed,
                          drift_max=drift_max)[0]
    if path.kill_reason != HIT_KILL:
        raise GenerationFailedError(f"step cap {step_cap} reached without hitting "
                                    "the support estimate")
    return GenerationResult(sample=path.endpoint, lifetime=path.lifetime,
                            steps=path.kill_index, init=init)


def generate_many(backward, support, inits, n: int, dt: float, seed,
                  step_cap: int = 1_000_000, drift_max: float = 1e6,
                  threads: int = 1) -> GenerationBatch:
    """n backward runs; `inits` is one point (reused) or an (n, d) array."""
    _check_backward(backward)
    inits = np.asarray(inits, dtype=np.float64)
    if inits.ndim == 1:
        inits = np.repeat(inits[None, :], n, axis=0)
    if inits.shape[0] != n:
        raise ValueError("need one init per requested generation")
    member = support.contains(inits)
    if np.asarray(member).any():
        raise PreconditionError("some inits lie inside the estimated support")
    rule = KillRule.hit_support(support, step_cap=step_cap)
    paths = simulate_batch(backward, inits, rule, dt, seed,
                           drift_max=drift_max, threads=threads)
    ok = [i for i, p in enumerate(paths) if p.kill_reason == HIT_KILL]
    samples = np.stack([paths[i].endpoint for i in ok]) if ok else np.zeros((0, inits.shape[1]))
    return GenerationBatch(
        samples=samples,
        lifetimes=np.array([paths[i].lifetime for i in ok]),
        steps=np.array([paths[i].kill_index for i in ok], dtype=np.int64),
        inits=inits[ok] if ok else np.zeros((0, inits.shape[1])),
        n_failed=len(paths) - len(ok),
        n_clipped_steps=sum(p.clipped_steps for p in paths),
    )
