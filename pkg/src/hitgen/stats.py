"""Goodness-of-fit helpers shared by the validation suite and the tests."""
from __future__ import annotations

import math

import numpy as np
from scipy import stats as sps


def ks_exponential(samples, rate: float):
    """One-sample KS statistic against Exp(rate) and the asymptotic 1% critical value."""
    samples = np.asarray(samples, dtype=np.float64)
    res = sps.kstest(samples, sps.expon(scale=1.0 / rate).cdf)
    crit_1pct = 1.6276 / math.sqrt(len(samples))
    return float(res.statistic), crit_1pct, float(res.pvalue)


def equal_area_band_counts(endpoints: np.ndarray, n_bins: int = 12):
    """Counts over equal-area latitude bands of the sphere in R^3.

    Bands of equal height in the last coordinate have equal area
    (Archimedes), so a uniform law puts equal mass in each band.
    """
    endpoints = np.asarray(endpoints, dtype=np.float64)
    if endpoints.shape[1] != 3:
        raise ValueError("equal-area bands are implemented for d = 3")
    radii = np.linalg.norm(endpoints, axis=1)
    zfrac = np.clip(endpoints[:, 2] / radii, -1.0, 1.0 - 1e-12)
    bins = ((zfrac + 1.0) * 0.5 * n_bins).astype(np.int64)
    return np.bincount(bins, minlength=n_bins)


def chi_square_uniform(counts):
    """Chi-square p-value against the uniform law over the given bins."""
    counts = np.asarray(counts, dtype=np.float64)
    res = sps.chisquare(counts)
    return float(res.statistic), float(res.pvalue)


def spearman(x, y) -> float:
    return float(sps.spearmanr(x, y).statistic)
