"""Anomaly scoring and classification on top of a trained backward model.

Both tasks reuse unmodified backward generation; the quantity of interest is
*which* part of the support kills the process and *how long* that takes.
States already inside the estimated support short-circuit: lifetime 0, and
classification falls back to the nearest class.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import PreconditionError
from .generate import generate_many
from .htransform import DiscreteBackward, posterior_endpoint_law
from .sde import HIT_KILL, KillRule, simulate_batch
from .support import SupportEstimate


@dataclass(frozen=True)
class AnomalyReport:
    mean_lifetime: float
    is_anomaly: bool
    threshold: float
    n_runs: int
    n_capped: int
    in_support: bool

    def to_json_dict(self) -> dict:
        return {
            "mean_lifetime": self.mean_lifetime,
            "threshold": self.threshold,
            "decision": "anomaly" if self.is_anomaly else "normal",
            "n_runs": self.n_runs,
            "n_capped": self.n_capped,
            "in_support": self.in_support,
        }


def anomaly_score(x, backward, support: SupportEstimate, n_runs: int, dt: float,
                  seed, threshold: float, step_cap: int = 1_000_000,
                  threads: int = 1) -> AnomalyReport:
    """Mean backward lifetime from x over n_runs; anomaly if above threshold.

    Capped runs contribute the cap time (conservative: an unreachable support
    is itself anomalous evidence) and are reported separately.
    """
    if n_runs < 1:
        raise ValueError("n_runs must be >= 1")
    x = np.asarray(x, dtype=np.float64)
    if support.contains(x):
        return AnomalyReport(0.0, False, threshold, n_runs, 0, True)
    rule = KillRule.hit_support(support, step_cap=step_cap)
    paths = simulate_batch(backward, np.repeat(x[None, :], n_runs, axis=0),
                           rule, dt, seed, threads=threads)
    lifetimes = np.array([p.lifetime if p.kill_reason == HIT_KILL else step_cap * dt
                          for p in paths])
    n_capped = sum(p.kill_reason != HIT_KILL for p in paths)
    mean_lt = float(lifetimes.mean())
    return AnomalyReport(mean_lt, mean_lt > threshold, threshold, n_runs,
                         n_capped, False)


def calibrate_threshold(backward, support: SupportEstimate, probes, n_runs: int,
                        dt: float, seed, quantile: float = 0.99,
                        step_cap: int = 1_000_000, threads: int = 1) -> float:
    """Threshold = the given quantile of mean lifetimes over held-out probes."""
    probes = np.atleast_2d(np.asarray(probes, dtype=np.float64))
    means = []
    for i, p in enumerate(probes):
        rep = anomaly_score(p, backward, support, n_runs, dt, seed + i,
                            threshold=np.inf, step_cap=step_cap, threads=threads)
        means.append(rep.mean_lifetime)
    return float(np.quantile(np.array(means), quantile))


@dataclass(frozen=True)
class ClassifyResult:
    label: int | None        # None = step cap reached (classification failure)
    lifetime: float          # reliability measure; 0 for the in-support gate
    in_support: bool

    def to_json_dict(self) -> dict:
        return {"class": self.label, "lifetime": self.lifetime,
                "in_support": self.in_support}


def classify(x, backward, class_supports: SupportEstimate, dt: float, seed,
             step_cap: int = 1_000_000) -> ClassifyResult:
    """Class of the ball that kills the backward process started at x."""
    if not class_supports.has_labels:
        raise PreconditionError("classification needs a labelled support estimate")
    x = np.asarray(x, dtype=np.float64)
    if class_supports.contains(x):
        return ClassifyResult(int(class_supports.nearest_class(x)), 0.0, True)
    rule = KillRule.hit_support(class_supports, step_cap=step_cap)
    path = simulate_batch(backward, x[None, :], rule, dt, seed)[0]
    if path.kill_reason != HIT_KILL:
        return ClassifyResult(None, path.lifetime, False)
    return ClassifyResult(int(class_supports.nearest_class(path.endpoint)),
                          path.lifetime, False)


@dataclass(frozen=True)
class ClassPosterior:
    labels: np.ndarray       # sorted class labels
    frequencies: np.ndarray  # empirical over successful runs
    exact: np.ndarray | None # discrete posterior when available
    n_runs: int
    n_failed: int
    mean_lifetime: float

    def to_json_dict(self) -> dict:
        return {
            "labels": [int(v) for v in self.labels],
            "posterior": [float(v) for v in self.frequencies],
            "exact": None if self.exact is None else [float(v) for v in self.exact],
            "M": self.n_runs,
            "failures": self.n_failed,
            "mean_lifetime": self.mean_lifetime,
        }


def class_posterior(x, backward, class_supports: SupportEstimate, n_runs: int,
                    dt: float, seed, step_cap: int = 1_000_000,
                    threads: int = 1) -> ClassPosterior:
    """Empirical class frequencies over n_runs backward generations from x.

    When the backward transform is the exact discrete one, the closed-form
    class posterior is reported alongside.
    """
    if n_runs < 1:
        raise ValueError("n_runs must be >= 1")
    if not class_supports.has_labels:
        raise PreconditionError("class posterior needs a labelled support estimate")
    x = np.asarray(x, dtype=np.float64)
    labels = class_supports.class_labels()
    batch = generate_many(backward, class_supports, x, n_runs, dt, seed,
                          step_cap=step_cap, threads=threads)
    counts = {int(lab): 0 for lab in labels}
    for s in batch.samples:
        counts[int(class_supports.nearest_class(s))] += 1
    total = max(len(batch.samples), 1)
    freqs = np.array([counts[int(lab)] / total for lab in labels])

    exact = None
    if isinstance(backward, DiscreteBackward) and backward.data.labels is not None:
        post = posterior_endpoint_law(backward, x)
        exact = np.array([post[backward.data.labels == lab].sum() for lab in labels])
    return ClassPosterior(labels=labels, frequencies=freqs, exact=exact,
                          n_runs=n_runs, n_failed=batch.n_failed,
                          mean_lifetime=float(batch.lifetimes.mean()) if len(batch.lifetimes) else 0.0)
