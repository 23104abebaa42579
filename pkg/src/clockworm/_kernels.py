"""Compiled inner loops: PCG32 draws, worm updates, single-site spin updates.

Everything here is deliberately branch-simple int64/float64 code so numba can
compile it once (``cache=True``) and the chains stay bit-reproducible for a
given seed pair.
"""

from __future__ import annotations

import numpy as np
from numba import njit

_U64 = np.uint64
_U32 = np.uint32
_PCG_MULT = _U64(6364136223846793005)
_TWO32 = _U64(4294967296)
_INV_TWO32 = 2.3283064365386963e-10  # 2**-32


@njit(cache=True, inline="always")
def _pcg32_next(rng):
    old = rng[0]
    rng[0] = old * _PCG_MULT + rng[1]
    xorshifted = _U32(((old >> _U64(18)) ^ old) >> _U64(27))
    rot = _U32(old >> _U64(59))
    return _U32((xorshifted >> rot) | (xorshifted << ((_U32(0) - rot) & _U32(31))))


@njit(cache=True)
def rng_init(seed_state, seed_stream):
    """PCG32 state from two uint64 seed words."""
    rng = np.empty(2, dtype=np.uint64)
    rng[1] = (_U64(seed_stream) << _U64(1)) | _U64(1)
    rng[0] = _U64(0)
    _pcg32_next(rng)
    rng[0] = rng[0] + _U64(seed_state)
    _pcg32_next(rng)
    return rng


@njit(cache=True, inline="always")
def _uniform(rng):
    # strictly inside (0, 1), so log() is always finite
    return (np.float64(_pcg32_next(rng)) + 0.5) * _INV_TWO32


@njit(cache=True, inline="always")
def _rand_below(rng, n):
    # rejection sampling: exactly uniform on 0..n-1
    lim = _TWO32 - _TWO32 % _U64(n)
    while True:
        x = _U64(_pcg32_next(rng))
        if x < lim:
            return np.int64(x % _U64(n))


@njit(cache=True, inline="always")
def link_log_ratio(k_old, k_new, s_val, logp, n):
    """Log weight ratio of one link changing its flow from k_old to k_new."""
    return logp[(k_new - s_val) % n] - logp[(k_old - s_val) % n]


# state-vector slots for the worm
W_PHASE = 0  # 0 closed, 1 open
W_HEAD = 1
W_TAIL = 2
W_CHARGE = 3
W_WT = 4  # running signed flux through the temporal cut (not reduced mod n)
W_WX = 5  # same, spatial cut
W_CORR = 6  # same, correlator dual path

# counter slots
C_ACCEPT = 0
C_PROPOSE = 1
C_CLOSED = 2
C_CORR = 3
C_CLOSE_EVENTS = 4
N_COUNTERS = 8


@njit(cache=True)
def worm_run(
    k,
    n,
    logp,
    s,
    site_links,
    site_neighbors,
    tcut,
    xcut,
    corr_sign,
    state,
    rng,
    n_steps,
    hist,
    corr_acc,
    counters,
    measure,
    log_fugacity,
):
    """Advance the worm chain by n_steps elementary updates.

    One update either proposes to open a worm (pick a site, a defect charge
    and one of the four incident links, shift that link so the head steps
    off the tail) or, when open, proposes to move the head across one of its
    four links.  Acceptance is Metropolis in the single affected link's
    weight; the head landing on the tail closes the worm.  Opening and
    closing are exact inverses with matched proposal probabilities, so
    detailed balance holds with closed configurations weighted by the
    current-loop measure and open ones carrying a fugacity of
    exp(log_fugacity)/(V*(n-1)) each: log_fugacity biases only the
    open/closed balance (opening gains it, closing pays it back), never the
    closed-sector conditional law.

    When ``measure`` is on, every update that ends in a closed configuration
    bumps the winding histogram (occupation counting keeps the closed-sector
    estimate unbiased), and closed zero-winding configurations accumulate
    the dual-path correlator phase.
    """
    n_sites = site_links.shape[0]
    phase = state[W_PHASE]
    head = state[W_HEAD]
    tail = state[W_TAIL]
    charge = state[W_CHARGE]
    wt = state[W_WT]
    wx = state[W_WX]
    corr = state[W_CORR]
    accepted = np.int64(0)
    closed_steps = np.int64(0)

    for _ in range(n_steps):
        if phase == 0:
            v = _rand_below(rng, n_sites)
            q = np.int64(1) + _rand_below(rng, n - 1)
            d = _rand_below(rng, 4)
            link = site_links[v, d]
            delta = -q if d < 2 else q
            k_old = k[link]
            k_new = (k_old + delta) % n
            dlw = link_log_ratio(k_old, k_new, s[link], logp, n) + log_fugacity
            if dlw >= 0.0 or np.log(_uniform(rng)) < dlw:
                k[link] = k_new
                shift = k_new - k_old
                wt += tcut[link] * shift
                wx += xcut[link] * shift
                corr += corr_sign[link] * shift
                phase = np.int64(1)
                head = site_neighbors[v, d]
                tail = v
                charge = q
                accepted += 1
        else:
            d = _rand_below(rng, 4)
            link = site_links[head, d]
            delta = -charge if d < 2 else charge
            k_old = k[link]
            k_new = (k_old + delta) % n
            dlw = link_log_ratio(k_old, k_new, s[link], logp, n)
            if site_neighbors[head, d] == tail:
                dlw -= log_fugacity  # this move closes the worm
            if dlw >= 0.0 or np.log(_uniform(rng)) < dlw:
                k[link] = k_new
                shift = k_new - k_old
                wt += tcut[link] * shift
                wx += xcut[link] * shift
                corr += corr_sign[link] * shift
                head = site_neighbors[head, d]
                accepted += 1
                if head == tail:
                    phase = np.int64(0)
                    counters[C_CLOSE_EVENTS] += 1

        if phase == 0:
            closed_steps += 1
            if measure:
                wq = wt % n
                hist[wq] += 1
                if wq == 0 and wx % n == 0:
                    ang = 6.283185307179586 * np.float64(corr % n) / np.float64(n)
                    corr_acc[0] += np.cos(ang)
                    corr_acc[1] += np.sin(ang)
                    counters[C_CORR] += 1

    counters[C_ACCEPT] += accepted
    counters[C_PROPOSE] += n_steps
    counters[C_CLOSED] += closed_steps
    state[W_PHASE] = phase
    state[W_HEAD] = head
    state[W_TAIL] = tail
    state[W_CHARGE] = charge
    state[W_WT] = wt
    state[W_WX] = wx
    state[W_CORR] = corr


@njit(cache=True)
def metro_run(
    theta,
    n,
    bond_energy,
    plaq_links,
    plaq_neighbors,
    plaq_signs,
    rng,
    n_sweeps,
    energy,
    counters,
):
    """n_sweeps Metropolis sweeps of the dual-spin (clock) model.

    One sweep is P single-site proposals theta_p -> theta_p + delta with
    delta uniform over nonzero shifts; dH comes from the four bond-energy
    table rows bordering the plaquette.  The cached total energy in
    ``energy[0]`` is updated incrementally.
    """
    n_plaq = theta.shape[0]
    accepted = np.int64(0)
    for _ in range(n_sweeps):
        for _ in range(n_plaq):
            p = _rand_below(rng, n_plaq)
            delta = np.int64(1) + _rand_below(rng, n - 1)
            d_h = 0.0
            for j in range(4):
                link = plaq_links[p, j]
                nb = plaq_neighbors[p, j]
                if plaq_signs[p, j] > 0:
                    old = (theta[p] - theta[nb]) % n
                    new = (theta[p] + delta - theta[nb]) % n
                else:
                    old = (theta[nb] - theta[p]) % n
                    new = (theta[nb] - theta[p] - delta) % n
                d_h += bond_energy[link, new] - bond_energy[link, old]
            if d_h <= 0.0 or np.log(_uniform(rng)) < -d_h:
                theta[p] = (theta[p] + delta) % n
                energy[0] += d_h
                accepted += 1
    counters[C_ACCEPT] += accepted
    counters[C_PROPOSE] += np.int64(n_sweeps) * np.int64(n_plaq)
