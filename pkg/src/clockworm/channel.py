"""Weak-measurement channel for a Z_N charge, expressed as clock-model weights.

A channel is a probability vector p_k over Z_N outcomes, parity symmetric
(p_k = p_{N-k mod N}), generated from cosine Fourier couplings beta_m:

    p_k = exp(alpha_k) / sum_k' exp(alpha_k'),
    alpha_k = sum_{m=0..floor(N/2)} beta_m * cos(2*pi*k*m / N).

The single-coupling family beta_1 = 1/T interpolates from projective
measurement (T -> 0) to no measurement (T -> infinity).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

PROJECTIVE_TEMPERATURE_FLOOR = 1e-3


@dataclass(frozen=True)
class ClockChannel:
    """Immutable weak-measurement channel; log-weights are canonical."""

    n: int
    couplings: np.ndarray  # beta_m, length floor(n/2)+1
    log_weights: np.ndarray  # log p_k, length n, normalized

    @property
    def weights(self) -> np.ndarray:
        """Outcome probabilities p_k (derived from the log-domain values)."""
        return np.exp(self.log_weights)

    def __post_init__(self):
        object.__setattr__(self, "couplings", np.asarray(self.couplings, dtype=float))
        object.__setattr__(self, "log_weights", np.asarray(self.log_weights, dtype=float))
        p = self.weights
        if abs(p.sum() - 1.0) > 1e-12:
            raise ValueError("channel weights must sum to 1")
        if not np.allclose(p, p[(-np.arange(self.n)) % self.n], rtol=0, atol=1e-13):
            raise ValueError("channel weights must be parity symmetric")


def _log_weights_from_alpha(alpha: np.ndarray) -> np.ndarray:
    # subtract the max before exponentiating so beta ~ 1/T stays finite at tiny T
    shifted = alpha - alpha.max()
    return shifted - np.log(np.exp(shifted).sum())


def channel_from_couplings(n: int, couplings) -> ClockChannel:
    """Build a channel from cosine couplings beta_m, m = 0..floor(n/2).

    beta_0 shifts every alpha_k equally and cancels in normalization; it is
    accepted for Fourier completeness but has no effect.
    """
    if n < 2:
        raise ValueError(f"symmetry order must be >= 2, got {n}")
    beta = np.asarray(couplings, dtype=float)
    want = n // 2 + 1
    if beta.shape != (want,):
        raise ValueError(f"expected {want} couplings for n={n}, got shape {beta.shape}")
    k = np.arange(n)
    m = np.arange(want)
    alpha = (beta[None, :] * np.cos(2.0 * np.pi * k[:, None] * m[None, :] / n)).sum(axis=1)
    alpha = 0.5 * (alpha + alpha[(-k) % n])  # parity holds exactly, not just to rounding
    return ClockChannel(n=n, couplings=beta, log_weights=_log_weights_from_alpha(alpha))


def channel_from_temperature(n: int, temperature: float) -> ClockChannel:
    """Single-coupling channel with beta_1 = 1/T, all other modes zero."""
    if n < 2:
        raise ValueError(f"symmetry order must be >= 2, got {n}")
    if not temperature > 0:
        raise ValueError(f"temperature must be positive, got {temperature}")
    beta = np.zeros(n // 2 + 1)
    beta[1] = 1.0 / temperature
    return channel_from_couplings(n, beta)


def projective_channel(n: int, temperature_floor: float = PROJECTIVE_TEMPERATURE_FLOOR) -> ClockChannel:
    """Near-projective channel at a finite temperature floor.

    Exact zeros in p_k would freeze worm acceptance ratios; the floor keeps
    them finite while exact projective behavior stays with the oracle module.
    """
    return channel_from_temperature(n, temperature_floor)


def outcome_weight(channel: ClockChannel, charge: int, outcome: int) -> float:
    """Probability of measurement outcome given the link charge: p_{charge-outcome}."""
    return float(np.exp(log_outcome_weight(channel, charge, outcome)))


def log_outcome_weight(channel: ClockChannel, charge: int, outcome: int) -> float:
    """log p_{(charge - outcome) mod N}; the numerically safe variant."""
    n = channel.n
    if not (0 <= charge < n):
        raise ValueError(f"charge {charge} out of range for Z_{n}")
    if not (0 <= outcome < n):
        raise ValueError(f"outcome {outcome} out of range for Z_{n}")
    return float(channel.log_weights[(charge - outcome) % n])


def couplings_from_weights(n: int, weights) -> np.ndarray:
    """Invert weights to cosine couplings (discrete cosine transform of log p).

    Returns beta with beta_0 chosen so that channel_from_couplings reproduces
    the input weights; inverse of the alpha_k expansion restricted to parity-
    symmetric weight vectors.
    """
    p = np.asarray(weights, dtype=float)
    if p.shape != (n,):
        raise ValueError(f"expected {n} weights, got shape {p.shape}")
    logp = np.log(p)
    k = np.arange(n)
    mmax = n // 2
    beta = np.zeros(mmax + 1)
    for m in range(mmax + 1):
        c = np.cos(2.0 * np.pi * k * m / n)
        # cosine modes are orthogonal on Z_N; norm is n for m=0 and m=n/2, n/2 otherwise
        norm = float((c * c).sum())
        beta[m] = float((logp * c).sum()) / norm
    return beta
