"""Statistical self-tests of the simulated laws.

Each check runs a seeded Monte-Carlo experiment against a closed-form
consequence of the transform calculus and emits a machine-readable
pass/fail record:

* endpoint laws: h == 1 lifetimes are Exp(rate); bridges end at the pinned
  state; sphere exits are uniform on the sphere;
* control optimality: the transform drift minimises the stopping/control
  functional J(u) = E[int_0^tau (rate + |u|^2/2) dt - log h(state at tau)],
  with value -log h(start); perturbed controls must cost measurably more
  (paired common-random-number comparison);
* the large-dimension linear approximation of the sphere-hitting drift.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .htransform import Bridge, ConstantH, HSpec, SphereHit, drift as h_drift
from .kernels import grad_log_green, log_green
from .sde import HIT_KILL, KillRule, simulate_batch
from .special import bessel_ratio_i
from .stats import chi_square_uniform, equal_area_band_counts, ks_exponential


@dataclass
class CheckReport:
    name: str
    passed: bool
    seed: int
    details: dict = field(default_factory=dict)

    def to_json_dict(self) -> dict:
        return {"name": self.name, "passed": bool(self.passed),
                "seed": self.seed, "details": self.details}


def check_endpoint_law(forward: HSpec, start, n: int, dt: float = 1e-3,
                       seed: int = 0, eps_kill: float = 0.05,
                       threads: int = 1) -> CheckReport:
    """Endpoint/lifetime law of the forward transform against its closed form."""
    start = np.asarray(start, dtype=np.float64)
    starts = np.repeat(start[None, :], n, axis=0)
    rate = forward.kernel.rate

    if isinstance(forward, ConstantH):
        rule = KillRule.exponential(rate)
        paths = simulate_batch(forward, starts, rule, dt, seed, threads=threads)
        lifetimes = np.array([p.lifetime for p in paths])
        se = (1.0 / rate) / math.sqrt(n)
        mean_ok = abs(lifetimes.mean() - 1.0 / rate) <= 3.0 * se
        ks, crit, pval = ks_exponential(lifetimes, rate)
        return CheckReport(
            "endpoint-law-constant", bool(mean_ok and ks < crit), seed,
            {"mean_lifetime": float(lifetimes.mean()), "expected": 1.0 / rate,
             "se": se, "ks_statistic": ks, "ks_critical_1pct": crit,
             "ks_pvalue": pval, "n": n})

    if isinstance(forward, Bridge):
        rule = KillRule.hit_ball(forward.x1, eps_kill)
        paths = simulate_batch(forward, starts, rule, dt, seed, threads=threads)
        dists = np.array([np.linalg.norm(p.endpoint - forward.x1) for p in paths])
        slack = eps_kill + 6.0 * math.sqrt(dt)
        all_hit = all(p.kill_reason == HIT_KILL for p in paths)
        return CheckReport(
            "endpoint-law-bridge", bool(all_hit and (dists <= slack).all()), seed,
            {"max_endpoint_distance": float(dists.max()), "allowed": slack, "n": n})

    if isinstance(forward, SphereHit):
        rule = KillRule.exit_sphere(forward.radius)
        paths = simulate_batch(forward, starts, rule, dt, seed, threads=threads)
        endpoints = np.stack([p.endpoint for p in paths])
        counts = equal_area_band_counts(endpoints)
        stat, pval = chi_square_uniform(counts)
        return CheckReport(
            "endpoint-law-sphere", bool(pval > 0.01), seed,
            {"chi2": stat, "pvalue": pval, "bin_counts": counts.tolist(), "n": n})

    raise ValueError(f"no endpoint law check for {type(forward).__name__}")


def check_control_optimality(forward: Bridge, start, perturbations, n: int,
                             dt: float = 5e-4, seed: int = 0,
                             eps_kill: float = 0.2, direction=None,
                             threads: int = 1) -> CheckReport:
    """Monte-Carlo comparison of the transform control against perturbations.

    The control u* = grad log h is simulated together with u* + c*v for each
    scale c (common random numbers).  Expectations: the paired cost gap to
    every c != 0 exceeds twice its standard error, and the c = 0 cost matches
    -log h(start) within three standard errors.
    """
    if not isinstance(forward, Bridge):
        raise ValueError("the control check is formulated for the bridge transform")
    perturbations = list(perturbations)
    if 0.0 not in perturbations:
        perturbations = [0.0] + perturbations
    start = np.asarray(start, dtype=np.float64)
    d = start.shape[0]
    if direction is None:
        direction = np.zeros(d)
        direction[0] = 1.0
    direction = np.asarray(direction, dtype=np.float64)
    rate = forward.kernel.rate
    starts = np.repeat(start[None, :], n, axis=0)
    rule = KillRule.hit_ball(forward.x1, eps_kill)

    costs = {}
    for c in perturbations:
        paths = simulate_batch(forward, starts, rule, dt, seed, record=True,
                               threads=threads, drift_offset=c * direction)
        vals = np.empty(n)
        for i, p in enumerate(paths):
            pre = p.states[:p.kill_index]          # states before the hit
            u_star = grad_log_green(forward.kernel, pre, forward.x1)
            u = u_star + c * direction[None, :]
            running = dt * (rate * p.kill_index + 0.5 * float((u * u).sum()))
            vals[i] = running - log_green(forward.kernel, p.endpoint, forward.x1)
        costs[c] = vals

    base = costs[0.0]
    target = -log_green(forward.kernel, start, forward.x1)
    se0 = base.std(ddof=1) / math.sqrt(n)
    identity_ok = abs(base.mean() - target) <= 3.0 * se0
    gaps = {}
    dominated = True
    for c in perturbations:
        if c == 0.0:
            continue
        diff = costs[c] - base
        se = diff.std(ddof=1) / math.sqrt(n)
        gaps[c] = {"gap": float(diff.mean()), "se": float(se)}
        dominated &= diff.mean() >= 2.0 * se
    return CheckReport(
        "control-optimality", bool(identity_ok and dominated), seed,
        {"cost_at_optimum": float(base.mean()), "neg_log_h": float(target),
         "se": float(se0), "gaps": {str(k): v for k, v in gaps.items()}, "n": n})


def check_ou_approx(dim: int, rate: float, radii=None,
                    tolerance: float = 0.05) -> CheckReport:
    """Deviation of the sphere-hitting drift from its linear approximation.

    For large dim and moderate |x| the radial drift is close to
    (2 rate / dim) |x|; the check reports the max relative deviation over the
    radius grid (default |x| <= 1).
    """
    if radii is None:
        radii = np.linspace(0.05, 1.0, 20)
    radii = np.asarray(radii, dtype=np.float64)
    nu = 0.5 * (dim - 2)
    sq2r = math.sqrt(2.0 * rate)
    exact = sq2r * bessel_ratio_i(nu, radii * sq2r)
    linear = (2.0 * rate / dim) * radii
    rel = np.abs(exact - linear) / linear
    return CheckReport(
        "ou-approximation", bool(rel.max() < tolerance), 0,
        {"dim": dim, "rate": rate, "max_rel_deviation": float(rel.max()),
         "tolerance": tolerance, "radii": radii.tolist()})


def run_default_checks(seed: int = 0, n_endpoint: int = 10_000,
                       n_control: int = 5_000, threads: int = 1) -> list[CheckReport]:
    """The standard battery used by the `validate` CLI subcommand."""
    from .kernels import brownian_kernel

    k3 = brownian_kernel(3, 0.5)
    k2 = brownian_kernel(2, 0.5)
    reports = [
        check_endpoint_law(ConstantH(k3), np.zeros(3), n_endpoint,
                           seed=seed, threads=threads),
        check_endpoint_law(Bridge(k3, np.array([1.0, 0.0, 0.0])),
                           np.array([-1.0, 0.0, 0.0]), min(n_endpoint, 2000),
                           seed=seed + 1, threads=threads),
        check_endpoint_law(SphereHit(k3, 5.0), np.zeros(3), n_endpoint,
                           seed=seed + 2, threads=threads),
        check_control_optimality(Bridge(k2, np.zeros(2)),
                                 np.array([1.5, 0.0]),
                                 [0.5, -0.5, 1.0, -1.0], n_control,
                                 seed=seed + 3, threads=threads),
        check_ou_approx(100, 0.5),
    ]
    return reports
