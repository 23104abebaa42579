"""Single-site Metropolis sampler of the dual-spin clock model at fixed disorder.

Single-site moves never change the homology sector of the implied flow, so
this sampler explores exactly one winding sector (which is why the worm, not
this engine, measures P(Q|s)).  It owns two jobs: the two-replica spin-spin
correlator behind the local sharpening diagnostic, and thermodynamic
integration over a fractional twist, which measures log sector-weight ratios
even when one sector is exponentially suppressed and direct sampling could
never visit it.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from clockworm import _kernels
from clockworm.channel import ClockChannel
from clockworm.lattice import TorusLattice
from clockworm.oracle import bond_energy_table
from clockworm.seeding import KernelRng
from clockworm.stats import jackknife_mean
from clockworm.worm import ChainSchedule

_TWO_PI = 2.0 * np.pi


@dataclass
class SpinChainState:
    """Plaquette spins plus the cached energy and frozen bond tables."""

    n: int
    theta: np.ndarray  # (P,) int64
    energy: np.ndarray  # (1,) float64 cached total energy
    record_values: np.ndarray  # (E,) float64 twisted record in use
    bond_energy: np.ndarray  # (E, N) float64

    @staticmethod
    def create(lattice: TorusLattice, channel: ClockChannel, record_values,
               theta: Optional[np.ndarray] = None) -> "SpinChainState":
        values = np.asarray(record_values, dtype=float)
        if values.shape != (lattice.n_links,):
            raise ValueError("record length does not match the lattice")
        eb = bond_energy_table(lattice, channel, values)
        th = np.zeros(lattice.n_plaquettes, dtype=np.int64) if theta is None else theta.astype(np.int64)
        state = SpinChainState(n=channel.n, theta=th, energy=np.zeros(1), record_values=values, bond_energy=eb)
        state.resync_energy(lattice)
        return state

    def total_energy(self, lattice: TorusLattice) -> float:
        lp = lattice.link_plaquettes
        dtheta = (self.theta[lp[:, 0]] - self.theta[lp[:, 1]]) % self.n
        return float(self.bond_energy[np.arange(lattice.n_links), dtheta].sum())

    def resync_energy(self, lattice: TorusLattice) -> None:
        self.energy[0] = self.total_energy(lattice)


def metro_sweep(state: SpinChainState, lattice: TorusLattice, channel: ClockChannel,
                rng: KernelRng, n_sweeps: int = 1) -> SpinChainState:
    """Run n_sweeps sweeps (P single-site Metropolis updates each)."""
    counters = np.zeros(_kernels.N_COUNTERS, dtype=np.int64)
    _kernels.metro_run(
        state.theta, np.int64(channel.n), state.bond_energy,
        lattice.plaquette_links, lattice.plaquette_neighbors, lattice.plaquette_signs,
        rng.state, np.int64(n_sweeps), state.energy, counters,
    )
    return state


def _spin_phase(state: SpinChainState, pair) -> complex:
    p1, p2 = pair
    return np.exp(2j * np.pi * (state.theta[p1] - state.theta[p2]) / state.n)


def two_replica_correlator(lattice: TorusLattice, channel: ClockChannel, record_values,
                           pair: tuple[int, int], schedule: ChainSchedule,
                           rng: np.random.Generator, resync_every: int = 512) -> float:
    """Unbiased |<omega^(theta_p1 - theta_p2)>|^2 at fixed disorder.

    Two independent chains on the same record; averaging sample_1 *
    conj(sample_2) gives the squared thermal average without the upward bias
    of squaring one noisy mean.  Returns the per-disorder value.
    """
    p1, p2 = pair
    if p1 == p2:
        return 1.0
    replicas = []
    for _ in range(2):
        seed_words = rng.integers(0, 2**64, size=2, dtype=np.uint64)
        replicas.append((SpinChainState.create(lattice, channel, record_values), KernelRng(seed_words)))
    for state, krng in replicas:
        metro_sweep(state, lattice, channel, krng, schedule.burn_in)
    acc = 0.0
    since_resync = 0
    for _ in range(schedule.measurements):
        samples = []
        for state, krng in replicas:
            metro_sweep(state, lattice, channel, krng, schedule.thin)
            samples.append(_spin_phase(state, pair))
        acc += (samples[0] * np.conj(samples[1])).real
        since_resync += schedule.thin
        if since_resync >= resync_every:
            for state, _ in replicas:
                state.resync_energy(lattice)
            since_resync = 0
    return float(acc / schedule.measurements)


# --- thermodynamic integration over a fractional winding twist ---------------------------


def twist_energy_gradient(state: SpinChainState, lattice: TorusLattice, channel: ClockChannel,
                          base_record: np.ndarray, lam: float, q: int) -> float:
    """dH/d(lambda) at twist fraction lambda (twist subtracts lambda*q along gamma)."""
    n = channel.n
    gamma = lattice.frame.gamma_path
    lp = lattice.link_plaquettes
    dtheta = (state.theta[lp[gamma, 0]] - state.theta[lp[gamma, 1]]) % n
    arg = dtheta - base_record[gamma] + lam * q
    total = 0.0
    for m, b in enumerate(channel.couplings):
        if b != 0.0:
            total += float((b * (_TWO_PI * m * q / n) * np.sin(_TWO_PI * m * arg / n)).sum())
    return total


def sector_log_ratio(lattice: TorusLattice, channel: ClockChannel, record_values,
                     q: int, schedule: ChainSchedule, rng: np.random.Generator,
                     nodes: int = 8) -> tuple[float, float]:
    """log of the sector-weight ratio Z[record twisted by q] / Z[record].

    Thermodynamic integration: interpolate the twist with a real-valued
    lambda in [0, 1], run one chain per Gauss-Legendre node and integrate
    the mean twist-energy gradient.  The variance stays O(1) per node no
    matter how suppressed the twisted sector is, which direct sector
    sampling cannot do.  Returns (estimate, standard error).
    """
    base = np.asarray(record_values, dtype=float)
    x, w = np.polynomial.legendre.leggauss(nodes)
    lams = 0.5 * (x + 1.0)
    weights = 0.5 * w
    total = 0.0
    var = 0.0
    for lam, weight in zip(lams, weights):
        twisted = base.copy()
        twisted[lattice.frame.gamma_path] -= lam * q
        state = SpinChainState.create(lattice, channel, twisted)
        krng = KernelRng(rng.integers(0, 2**64, size=2, dtype=np.uint64))
        metro_sweep(state, lattice, channel, krng, schedule.burn_in)
        series = np.empty(schedule.measurements)
        for i in range(schedule.measurements):
            metro_sweep(state, lattice, channel, krng, schedule.thin)
            series[i] = twist_energy_gradient(state, lattice, channel, base, lam, q)
        mean, err = _blocked_mean(series)
        total += weight * mean
        var += (weight * err) ** 2
    return -total, float(np.sqrt(var))


def ti_sector_probabilities(lattice: TorusLattice, channel: ClockChannel, record_values,
                            schedule: ChainSchedule, rng: np.random.Generator,
                            nodes: int = 8) -> np.ndarray:
    """Winding-sector distribution from thermodynamic integration.

    Integrates one fractional twist per sector and normalizes the resulting
    log weights.  Spatial winding is held fixed at the record's own
    structure, so this is the dominant-spatial-sector distribution: accurate
    on the ordered side (where the spatial trace is exponentially dominated
    and where worm chains mix winding too slowly to be trusted), and not
    meaningful deep in the fuzzy phase, which is the worm's territory.
    """
    n = channel.n
    log_ratios = np.zeros(n)
    for q in range(1, n):
        log_ratios[q], _ = sector_log_ratio(lattice, channel, record_values, q,
                                            schedule, rng, nodes=nodes)
    w = np.exp(log_ratios - log_ratios.max())
    return w / w.sum()


def _blocked_mean(series: np.ndarray) -> tuple[float, float]:
    """Mean with an error maximized over pair-merging blocking levels."""
    mean = float(series.mean())
    x = series.copy()
    best = 0.0
    while x.size >= 8:
        _, err = jackknife_mean(x)
        best = max(best, err)
        m = (x.size // 2) * 2
        x = 0.5 * (x[:m:2] + x[1:m:2])
    if best == 0.0:
        _, best = jackknife_mean(series)
    return mean, best
