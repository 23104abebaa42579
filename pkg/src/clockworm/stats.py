"""Small estimator-statistics toolbox: jackknife means and blocked ratio errors."""

from __future__ import annotations

import numpy as np


def jackknife_mean(values) -> tuple[float, float]:
    """Mean and leave-one-out jackknife standard error of a 1D sample."""
    x = np.asarray(values, dtype=float)
    n = x.size
    if n == 0:
        raise ValueError("jackknife of an empty sample")
    mean = float(x.mean())
    if n == 1:
        return mean, 0.0
    loo = (x.sum() - x) / (n - 1)
    var = (n - 1) / n * ((loo - loo.mean()) ** 2).sum()
    return mean, float(np.sqrt(var))


def jackknife_ratio(numerators, denominators) -> tuple[float, float]:
    """Leave-one-block-out error of sum(num)/sum(den) over correlated blocks."""
    num = np.asarray(numerators, dtype=float)
    den = np.asarray(denominators, dtype=float)
    if num.shape != den.shape or num.ndim != 1:
        raise ValueError("numerators and denominators must be matching 1D arrays")
    tot_n, tot_d = num.sum(), den.sum()
    if tot_d <= 0:
        raise ValueError("ratio jackknife needs a positive denominator total")
    b = num.size
    if b == 1:
        return float(tot_n / tot_d), 0.0
    keep = (tot_d - den) > 0
    loo = np.where(keep, (tot_n - num) / np.where(keep, tot_d - den, 1.0), tot_n / tot_d)
    var = (b - 1) / b * ((loo - loo.mean()) ** 2).sum()
    return float(tot_n / tot_d), float(np.sqrt(var))


def _merge_pairs(a: np.ndarray) -> np.ndarray:
    m = (a.shape[0] // 2) * 2
    out = a[:m:2] + a[1:m:2]
    if a.shape[0] % 2:  # fold the odd tail in rather than dropping counts
        out = out.copy()
        out[-1] += a[-1]
    return out


def blocked_ratio_error(numerators, denominators, min_blocks: int = 8) -> float:
    """Ratio standard error, maximized over pair-merging blocking levels.

    Successively merging adjacent blocks absorbs autocorrelation; taking the
    largest jackknife error across levels with at least ``min_blocks`` blocks
    is the usual conservative plateau estimate.
    """
    num = np.asarray(numerators, dtype=float)
    den = np.asarray(denominators, dtype=float)
    best = 0.0
    while num.size >= max(min_blocks, 2):
        _, err = jackknife_ratio(num, den)
        best = max(best, err)
        num, den = _merge_pairs(num), _merge_pairs(den)
    return best


def naive_ratio_error(numerators, denominators) -> float:
    """Binomial-style error ignoring correlations (for autocorrelation ratios)."""
    n = float(np.sum(numerators))
    d = float(np.sum(denominators))
    if d <= 0:
        raise ValueError("empty sample")
    p = n / d
    return float(np.sqrt(max(p * (1.0 - p), 0.0) / d))
