"""Closed-form backward transform for discrete targets.

For a weighted point target the backward function is available exactly,
    log bh(x) = logsumexp_i [ log w_i - log h(y_i) + log G_r(x, y_i) ],
so the backward process can be simulated without any learning.  It doubles as
the testing oracle for the learned model: its endpoint law is the exact
posterior softmax(log w_i - log h(y_i) + log G_r(x, y_i)).
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import support as support_mod
from .dataio import PointCloud
from .errors import EmptyDataError, GenerationFailedError, PreconditionError
from .htransform import FORWARD_VARIANTS, DiscreteBackward, HSpec, h_value
from .sde import HIT_KILL, KillRule, simulate_batch

DEFAULT_START_OFFSET = 1e-3  # pole regularisation for bridge-style starts


def build_exact_backward(data: PointCloud, forward: HSpec) -> DiscreteBackward:
    """Exact backward spec for the discrete target carried by `data`."""
    if not isinstance(forward, FORWARD_VARIANTS):
        raise PreconditionError(
            "forward transform must be one of the h == 1 / bridge / sphere variants")
    if data.n == 0:
        raise EmptyDataError("empty point cloud")
    log_h = np.atleast_1d(h_value(forward, data.points))
    base_logits = np.log(data.weights) - log_h
    return DiscreteBackward(kernel=forward.kernel, data=data, forward=forward,
                            base_logits=base_logits)


@dataclass(frozen=True)
class ExactSample:
    endpoint: np.ndarray   # the resolved data point
    index: int             # its index in the cloud
    lifetime: float
    hit_state: np.ndarray  # first state inside the epsilon-enlarged support
    steps: int


def _resolve_endpoint(data: PointCloud, state: np.ndarray) -> int:
    d2 = ((data.points - state[None, :]) ** 2).sum(axis=1)
    return int(d2.argmin())  # argmin breaks ties at the lowest index


def sample_exact(backward: DiscreteBackward, init, epsilon: float, dt: float,
                 seed: int, step_cap: int = 1_000_000) -> ExactSample:
    """Run the exact backward process from `init` until it hits the
    epsilon-enlargement of the data, and resolve the nearest data point."""
    if epsilon <= 0:
        raise ValueError("epsilon must be > 0")
    est = support_mod.build(backward.data, epsilon)
    if est.contains(np.asarray(init, dtype=np.float64)):
        raise PreconditionError("init lies inside the epsilon-enlarged data support")
    rule = KillRule.hit_support(est, step_cap=step_cap)
    path = simulate_batch(backward, np.asarray(init)[None, :], rule, dt, seed)[0]
    if path.kill_reason != HIT_KILL:
        raise GenerationFailedError(
            f"step cap {step_cap} reached before hitting the data support")
    idx = _resolve_endpoint(backward.data, path.endpoint)
    return ExactSample(endpoint=backward.data.points[idx].copy(), index=idx,
                       lifetime=path.lifetime, hit_state=path.endpoint,
                       steps=path.kill_index)


def hit_counts(backward: DiscreteBackward, init, n_runs: int, epsilon: float,
               dt: float, seed: int, step_cap: int = 1_000_000,
               threads: int = 1):
    """Endpoint counts over the data points for repeated exact generation.

    Returns (counts, n_failed); capped runs are excluded from the counts.
    """
    est = support_mod.build(backward.data, epsilon)
    rule = KillRule.hit_support(est, step_cap=step_cap)
    starts = np.repeat(np.asarray(init, dtype=np.float64)[None, :], n_runs, axis=0)
    paths = simulate_batch(backward, starts, rule, dt, seed, threads=threads)
    counts = np.zeros(backward.data.n, dtype=np.int64)
    n_failed = 0
    for p in paths:
        if p.kill_reason != HIT_KILL:
            n_failed += 1
            continue
        counts[_resolve_endpoint(backward.data, p.endpoint)] += 1
    return counts, n_failed
