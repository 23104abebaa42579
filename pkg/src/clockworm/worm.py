"""Worm-algorithm Markov chain over the current-loop ensemble at fixed disorder.

The chain lives on an extended configuration space: closed states are the
divergence-free flows with the product link weight, open states carry a
defect pair (head charge +q, tail charge -q) created by shifting links.
Opening picks a site, a charge and one of four incident links in one move,
and the head stepping back onto the tail closes the worm; both directions
reduce to a Metropolis test on the single affected link, and the open/close
proposal asymmetry is exactly absorbed by an open-state fugacity of
1/(V*(n-1)).  Because the head can wander around either handle of the torus,
the chain is ergodic across all winding sectors, which is what lets it
estimate the sector probabilities P(Q|s).

Winding is tracked incrementally: every accepted shift of a link on the
temporal (spatial) cut updates a running flux counter, so measuring costs
O(1) per step.  Only closed configurations are measured, by occupation
counting inside the measurement windows.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from clockworm import _kernels
from clockworm.channel import ClockChannel
from clockworm.born import DisorderRealization
from clockworm.flows import FlowConfig
from clockworm.lattice import TorusLattice
from clockworm.seeding import KernelRng
from clockworm.stats import blocked_ratio_error, jackknife_ratio, naive_ratio_error


@dataclass
class ChainSchedule:
    """Chain lengths in sweeps (one sweep = E worm steps).

    ``measurements`` windows of ``thin`` sweeps each follow ``burn_in``
    sweeps; every closed configuration inside a window is counted.
    """

    burn_in: int
    measurements: int
    thin: int = 1

    def __post_init__(self):
        if self.burn_in <= 0 or self.measurements <= 0 or self.thin <= 0:
            raise ValueError("schedule values must be positive")


WormRng = KernelRng  # the worm consumes the shared kernel PCG32 stream


@dataclass
class WormState:
    """Mutable chain state: flow plus defect bookkeeping and raw flux counters."""

    flow: FlowConfig
    phase: str = "closed"  # "closed" | "open"
    head: int = -1
    tail: int = -1
    charge: int = 0
    _vec: np.ndarray = field(default=None, repr=False)  # kernel view

    @staticmethod
    def closed(lattice: TorusLattice, flow: FlowConfig, correlator_sign: Optional[np.ndarray] = None) -> "WormState":
        vec = np.zeros(8, dtype=np.int64)
        vec[_kernels.W_WT] = int(flow.k[lattice.frame.temporal_cut].sum())
        vec[_kernels.W_WX] = int(flow.k[lattice.frame.spatial_cut].sum())
        if correlator_sign is not None:
            vec[_kernels.W_CORR] = int((correlator_sign * flow.k).sum())
        vec[_kernels.W_HEAD] = -1
        vec[_kernels.W_TAIL] = -1
        return WormState(flow=flow, _vec=vec)

    def _sync_from_vec(self):
        self.phase = "closed" if self._vec[_kernels.W_PHASE] == 0 else "open"
        self.head = int(self._vec[_kernels.W_HEAD])
        self.tail = int(self._vec[_kernels.W_TAIL])
        self.charge = int(self._vec[_kernels.W_CHARGE])

    @property
    def temporal_winding_raw(self) -> int:
        return int(self._vec[_kernels.W_WT])

    @property
    def spatial_winding_raw(self) -> int:
        return int(self._vec[_kernels.W_WX])


@dataclass
class WindingHistogram:
    """Closed-configuration counts per temporal winding, kept per window."""

    n: int
    block_counts: np.ndarray  # (windows, n) int64

    @property
    def counts(self) -> np.ndarray:
        return self.block_counts.sum(axis=0)

    @property
    def total(self) -> int:
        return int(self.block_counts.sum())

    def merged_with(self, other: "WindingHistogram") -> "WindingHistogram":
        if other.n != self.n:
            raise ValueError("cannot merge histograms of different Z_N order")
        return WindingHistogram(self.n, np.concatenate([self.block_counts, other.block_counts]))


@dataclass
class WormDiagnostics:
    acceptance_rate: float
    closed_fraction: float
    tau_int: float
    effective_samples: float
    n_steps: int
    correlator: Optional[complex] = None
    correlator_err: Optional[float] = None
    correlator_samples: int = 0
    log_fugacity: float = 0.0
    reset_after_burn_in: bool = False


@dataclass
class SectorEstimate:
    """Normalized winding-sector probabilities with blocked standard errors."""

    n: int
    probabilities: np.ndarray
    errors: np.ndarray
    effective_samples: float
    diagnostics: Optional[WormDiagnostics] = None

    def order_phase(self) -> complex:
        """sum_Q omega^Q P(Q): the phase-weighted sector sum."""
        omega = np.exp(2j * np.pi * np.arange(self.n) / self.n)
        return complex((omega * self.probabilities).sum())


def _kernel_inputs(lattice: TorusLattice, channel: ClockChannel, record: DisorderRealization,
                   correlator_pair=None):
    if record.n != channel.n:
        raise ValueError("record and channel have different Z_N order")
    corr_sign = np.zeros(lattice.n_links, dtype=np.int64)
    if correlator_pair is not None:
        p1, p2 = correlator_pair
        x1, y1 = lattice.site_xy(p1)
        x2, y2 = lattice.site_xy(p2)
        x = x1
        while x != x2:
            corr_sign[lattice.link_index(x + 1, y1, 1)] += 1
            x = (x + 1) % lattice.width
        y = y1
        while y != y2:
            corr_sign[lattice.link_index(x2, y + 1, 0)] -= 1
            y = (y + 1) % lattice.height
    return (
        np.int64(channel.n),
        channel.log_weights.astype(np.float64),
        record.s.astype(np.int64),
        lattice.site_links,
        lattice.site_neighbors,
        lattice.temporal_cut_mask,
        lattice.spatial_cut_mask,
        corr_sign,
    )


def _initial_flow(lattice: TorusLattice, record: DisorderRealization) -> FlowConfig:
    """Closed starting flow: the record, repaired to divergence-free.

    Near-projective records are (almost) valid flows and far more probable
    than the zero flow, so starting near them avoids a long stranded-defect
    transient at low temperature; any closed start is unbiased, this one
    just mixes fast.
    """
    from clockworm.flows import repair_to_divergence_free

    return repair_to_divergence_free(FlowConfig(record.n, record.s.astype(np.int64).copy()), lattice)


def worm_step(state: WormState, lattice: TorusLattice, channel: ClockChannel,
              record: DisorderRealization, rng: WormRng, n_steps: int = 1,
              log_fugacity: float = 0.0) -> WormState:
    """Advance the chain by n_steps elementary updates (no measuring)."""
    n, logp, s, site_links, site_nbrs, tcut, xcut, corr = _kernel_inputs(lattice, channel, record)
    hist = np.zeros(channel.n, dtype=np.int64)
    corr_acc = np.zeros(2, dtype=np.float64)
    counters = np.zeros(_kernels.N_COUNTERS, dtype=np.int64)
    _kernels.worm_run(
        state.flow.k, n, logp, s, site_links, site_nbrs, tcut, xcut, corr,
        state._vec, rng.state, np.int64(n_steps), hist, corr_acc, counters, False,
        np.float64(log_fugacity),
    )
    state._sync_from_vec()
    return state


def run_chain(
    lattice: TorusLattice,
    channel: ClockChannel,
    record: DisorderRealization,
    schedule: ChainSchedule,
    rng: WormRng,
    correlator_pair=None,
) -> tuple[WindingHistogram, WormDiagnostics]:
    """Run one worm chain; returns the winding histogram and diagnostics.

    Deterministic given the rng seed.  With ``correlator_pair`` set, closed
    zero-winding configurations also accumulate the open 't Hooft string
    phase between the two plaquettes (flux representation of the spin-spin
    correlator), reported through the diagnostics.
    """
    n, logp, s, site_links, site_nbrs, tcut, xcut, corr = _kernel_inputs(
        lattice, channel, record, correlator_pair)
    state = WormState.closed(lattice, _initial_flow(lattice, record), correlator_sign=corr)
    steps_per_sweep = lattice.n_links
    counters = np.zeros(_kernels.N_COUNTERS, dtype=np.int64)
    corr_acc = np.zeros(2, dtype=np.float64)
    block_counts = np.zeros((schedule.measurements, channel.n), dtype=np.int64)
    block_corr = np.zeros((schedule.measurements, 2), dtype=np.float64)
    block_corr_n = np.zeros(schedule.measurements, dtype=np.int64)

    # Plain burn-in first, at the default open/closed balance.
    log_fugacity = 0.0
    reset_after_burn_in = False
    half = max(schedule.burn_in // 2, 1)

    def _burn(sweeps: int) -> tuple[int, int]:
        before_closed = int(counters[_kernels.C_CLOSED])
        before_events = int(counters[_kernels.C_CLOSE_EVENTS])
        _kernels.worm_run(
            state.flow.k, n, logp, s, site_links, site_nbrs, tcut, xcut, corr,
            state._vec, rng.state, np.int64(sweeps * steps_per_sweep),
            np.zeros(channel.n, dtype=np.int64), corr_acc, counters, False,
            np.float64(log_fugacity),
        )
        return (int(counters[_kernels.C_CLOSED]) - before_closed,
                int(counters[_kernels.C_CLOSE_EVENTS]) - before_events)

    def _healthy(closed_steps: int, events: int) -> bool:
        # closing routinely, or frozen shut (a point-mass sector law)
        return events >= 3 or closed_steps >= half * steps_per_sweep // 2

    _burn(schedule.burn_in - half)
    closed_steps, events = _burn(half)

    # Records with measurement defects make every closed completion pay an
    # exponential string cost, and the worm can essentially stop closing.
    # If the second half of the burn-in neither closed repeatedly nor froze
    # shut, lower the open-state fugacity until one of the two holds; the
    # value is frozen during measurement, so the chain stays exactly
    # balanced and the closed-sector conditional law is untouched.  The
    # rescue only arms for defective records: a divergence-free record makes
    # closures merely slow, never exponentially suppressed, and freezing a
    # slow ordered-phase chain would pin it in an arbitrary sector.
    from clockworm.flows import FlowConfig, is_divergence_free

    record_defective = not is_divergence_free(
        FlowConfig(record.n, record.s.astype(np.int64)), lattice)
    lf_floor = -max(240.0, 6.0 * float(logp.max() - logp.min()) + 48.0)
    if not record_defective:
        lf_floor = 0.0
    while not _healthy(closed_steps, events) and log_fugacity > lf_floor:
        log_fugacity -= 8.0
        closed_steps, events = _burn(half)

    for attempt in range(64):
        counters[:] = 0
        corr_acc[:] = 0.0
        block_counts[:] = 0
        block_corr[:] = 0.0
        block_corr_n[:] = 0
        for b in range(schedule.measurements):
            corr_before = corr_acc.copy()
            corr_n_before = int(counters[_kernels.C_CORR])
            _kernels.worm_run(
                state.flow.k, n, logp, s, site_links, site_nbrs, tcut, xcut, corr,
                state._vec, rng.state, np.int64(schedule.thin * steps_per_sweep),
                block_counts[b], corr_acc, counters, True,
                np.float64(log_fugacity),
            )
            block_corr[b] = corr_acc - corr_before
            block_corr_n[b] = int(counters[_kernels.C_CORR]) - corr_n_before
        if block_counts.sum() > 0:
            break
        # nothing measured: the chain drifted into defect-pinned open states
        # after the burn-in health check; escalate and re-equilibrate, with a
        # restart from the repaired record once the fugacity bottoms out
        # (clean records just get more burn-in: their closures are only slow)
        reset_after_burn_in = True
        if record_defective and log_fugacity > lf_floor:
            log_fugacity -= 8.0
        elif record_defective:
            state = WormState.closed(lattice, _initial_flow(lattice, record), correlator_sign=corr)
        _burn(half)
    else:
        raise RuntimeError(
            "worm chain recorded no closed configurations; the record's measurement "
            "defects suppress closures beyond the fugacity range, increase burn_in/thin")

    state._sync_from_vec()
    hist = WindingHistogram(channel.n, block_counts)
    n_meas_steps = schedule.measurements * schedule.thin * steps_per_sweep
    diag = WormDiagnostics(
        acceptance_rate=float(counters[_kernels.C_ACCEPT]) / max(int(counters[_kernels.C_PROPOSE]), 1),
        closed_fraction=float(counters[_kernels.C_CLOSED]) / n_meas_steps,
        tau_int=0.0,
        effective_samples=0.0,
        n_steps=int(counters[_kernels.C_PROPOSE]) + schedule.burn_in * steps_per_sweep,
        log_fugacity=log_fugacity,
        reset_after_burn_in=reset_after_burn_in,
    )
    _fill_autocorr(hist, diag)
    if correlator_pair is not None and block_corr_n.sum() > 0:
        den_corr = block_corr_n.astype(float)
        re, err = jackknife_ratio(block_corr[:, 0], den_corr)
        im = float(block_corr[:, 1].sum() / block_corr_n.sum())
        diag.correlator = complex(re, im)
        diag.correlator_err = max(err, blocked_ratio_error(block_corr[:, 0], den_corr))
        diag.correlator_samples = int(block_corr_n.sum())
    return hist, diag


def _fill_autocorr(hist: WindingHistogram, diag: WormDiagnostics) -> None:
    """Autocorrelation estimate from the dominant sector's blocked vs naive error."""
    total = hist.total
    if total == 0:
        return
    counts = hist.counts
    q = int(np.argmax(counts))
    num = hist.block_counts[:, q].astype(float)
    den = hist.block_counts.sum(axis=1).astype(float)
    p = counts[q] / total
    if p <= 0 or p >= 1:
        diag.tau_int = 0.5
        diag.effective_samples = float(total)
        return
    blocked = blocked_ratio_error(num, den)
    naive = naive_ratio_error(num, den)
    tau = 0.5 * (blocked / naive) ** 2 if naive > 0 else 0.5
    diag.tau_int = max(tau, 0.5)
    diag.effective_samples = total / (2.0 * diag.tau_int)


def sector_probabilities(histogram: WindingHistogram, diagnostics: Optional[WormDiagnostics] = None) -> SectorEstimate:
    """Normalize the histogram into P(Q|s) with blocked jackknife errors."""
    total = histogram.total
    if total <= 0:
        raise ValueError("empty winding histogram")
    counts = histogram.counts
    probs = counts / total
    den = histogram.block_counts.sum(axis=1).astype(float)
    errors = np.zeros(histogram.n)
    for q in range(histogram.n):
        errors[q] = blocked_ratio_error(histogram.block_counts[:, q].astype(float), den)
    ess = total
    if diagnostics is not None and diagnostics.tau_int > 0:
        ess = total / (2.0 * diagnostics.tau_int)
    return SectorEstimate(
        n=histogram.n,
        probabilities=probs,
        errors=errors,
        effective_samples=float(ess),
        diagnostics=diagnostics,
    )
