"""Physical diagnostics reduced over Born-sampled disorder realizations.

Because realizations are drawn with their Born probabilities, every disorder
average here is an unweighted mean: the sampling measure already carries the
record weight, so no partition function is ever evaluated.  Errors are
leave-one-realization-out jackknives, and the per-realization values are
retained so fits can be redone downstream.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from clockworm.stats import jackknife_mean
from clockworm.worm import SectorEstimate

SCALING_MODELS = ("exp_L", "linear_t_over_L", "exp_t")


@dataclass
class DisorderedObservable:
    """Disorder mean with jackknife error and the retained per-realization values."""

    estimate: float
    stderr: float
    n_realizations: int
    values: np.ndarray

    @staticmethod
    def from_values(values: Sequence[float]) -> "DisorderedObservable":
        arr = np.asarray(values, dtype=float)
        if arr.size == 0:
            raise ValueError("no realizations to average")
        mean, err = jackknife_mean(arr)
        return DisorderedObservable(estimate=mean, stderr=err, n_realizations=arr.size, values=arr)


def winding_phase_square(probabilities: np.ndarray) -> float:
    """|sum_Q omega^Q P(Q)|^2 for one realization."""
    n = probabilities.shape[0]
    omega = np.exp(2j * np.pi * np.arange(n) / n)
    return float(abs((omega * probabilities).sum()) ** 2)


def entropy_nats(probabilities: np.ndarray) -> float:
    p = np.asarray(probabilities, dtype=float)
    if p.sum() <= 0:
        raise ValueError("probabilities sum to zero")
    p = p[p > 0]
    return float(-(p * np.log(p)).sum())


def order_parameter(estimates: Sequence[SectorEstimate]) -> DisorderedObservable:
    """Disorder mean of the squared phase-weighted sector sum.

    This is the sharpening order parameter: 0 when every record leaves the
    sectors uniform, 1 when each record pins a single sector.
    """
    return DisorderedObservable.from_values(
        [winding_phase_square(e.probabilities) for e in estimates])


def charge_variance(op: DisorderedObservable) -> DisorderedObservable:
    """Complement of the order parameter; errors carry over unchanged."""
    return DisorderedObservable(
        estimate=1.0 - op.estimate,
        stderr=op.stderr,
        n_realizations=op.n_realizations,
        values=1.0 - op.values,
    )


def coherent_information(estimates: Sequence[SectorEstimate]) -> DisorderedObservable:
    """Disorder mean of the sector-probability Shannon entropy, in nats.

    Divide by ln N for the normalized column; ln N means a fully protected
    logical qudit, 0 a fully revealed charge.
    """
    return DisorderedObservable.from_values([entropy_nats(e.probabilities) for e in estimates])


def local_sharpening(correlators: Sequence[float]) -> DisorderedObservable:
    """Disorder mean of per-record two-replica correlator values."""
    return DisorderedObservable.from_values(list(correlators))


@dataclass
class SharpeningTime:
    value: float
    censored: bool
    warning: Optional[str] = None


def sharpening_time(curve: Sequence[tuple[float, float]], threshold: float = 0.5) -> SharpeningTime:
    """First threshold crossing of an order-parameter-versus-time curve.

    Linear interpolation between the bracketing points; a curve already above
    threshold reports the first time with a flag, and one never crossing is
    censored at the largest simulated time.  If the curve wiggles through the
    threshold more than once, the widest (last) crossing is used and flagged.
    """
    pts = sorted((float(t), float(v)) for t, v in curve)
    if not pts:
        raise ValueError("empty curve")
    times = np.array([p[0] for p in pts])
    vals = np.array([p[1] for p in pts])
    if vals[0] >= threshold:
        return SharpeningTime(value=times[0], censored=False,
                              warning="already above threshold at the first simulated time")
    above = np.nonzero(vals >= threshold)[0]
    if above.size == 0:
        return SharpeningTime(value=float(times[-1]), censored=True)
    crossings = [i for i in range(1, len(vals)) if vals[i - 1] < threshold <= vals[i]]
    i = crossings[-1]
    warning = "non-monotone near the crossing; using the widest crossing" if len(crossings) > 1 else None
    t0, t1 = times[i - 1], times[i]
    v0, v1 = vals[i - 1], vals[i]
    t_star = t0 + (threshold - v0) * (t1 - t0) / (v1 - v0)
    return SharpeningTime(value=float(t_star), censored=False, warning=warning)


@dataclass
class ScalingFit:
    model: str
    coefficients: np.ndarray  # (intercept, slope) of the linearized model
    r_squared: float
    residuals: np.ndarray

    @property
    def slope(self) -> float:
        return float(self.coefficients[1])

    @property
    def intercept(self) -> float:
        return float(self.coefficients[0])


def _design_column(model: str, sizes_l: np.ndarray, sizes_t: np.ndarray) -> np.ndarray:
    if model == "exp_L":
        return sizes_l.astype(float)
    if model == "linear_t_over_L":
        return sizes_t / sizes_l
    if model == "exp_t":
        return sizes_t.astype(float)
    raise ValueError(f"unknown scaling model {model!r}; expected one of {SCALING_MODELS}")


def fit_scaling(data: Sequence[tuple[float, float, float]], regime: str) -> ScalingFit:
    """Least-squares fit of one asymptotic regime to (L, t, y) points.

    exp_L fits ln|y| = a - alpha*L (deviations exponentially suppressed in
    width); linear_t_over_L fits y = a + c*(t/L) (spin-wave sector cost);
    exp_t fits y = a + c*t (a domain wall stretched along the time
    direction).  y is a log-ratio for the latter two regimes.
    """
    rows = np.asarray(data, dtype=float)
    if rows.ndim != 2 or rows.shape[1] != 3 or rows.shape[0] < 4:
        raise ValueError("need at least 4 (L, t, y) points")
    sizes_l, sizes_t, y = rows[:, 0], rows[:, 1], rows[:, 2]
    x = _design_column(regime, sizes_l, sizes_t)
    target = np.log(np.abs(y)) if regime == "exp_L" else y
    design = np.column_stack([np.ones_like(x), x])
    if np.linalg.matrix_rank(design) < 2:
        raise ValueError("degenerate design matrix: covariate does not vary across points")
    coef, *_ = np.linalg.lstsq(design, target, rcond=None)
    fitted = design @ coef
    residuals = target - fitted
    ss_res = float((residuals**2).sum())
    ss_tot = float(((target - target.mean()) ** 2).sum())
    r2 = 1.0 - ss_res / ss_tot if ss_tot > 0 else (1.0 if ss_res == 0 else 0.0)
    return ScalingFit(model=regime, coefficients=coef, r_squared=max(min(r2, 1.0), 0.0),
                      residuals=residuals)


def log_sector_ratio(estimate: SectorEstimate, q_num: int, q_den: int) -> tuple[float, float]:
    """ln(P(q_num)/P(q_den)) from one sector estimate, with propagated error."""
    p1 = estimate.probabilities[q_num % estimate.n]
    p0 = estimate.probabilities[q_den % estimate.n]
    if p1 <= 0 or p0 <= 0:
        raise ValueError("sector with zero estimated probability; ratio undefined")
    e1 = estimate.errors[q_num % estimate.n] / p1
    e0 = estimate.errors[q_den % estimate.n] / p0
    return float(math.log(p1 / p0)), float(math.hypot(e1, e0))
