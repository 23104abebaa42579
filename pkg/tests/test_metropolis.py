import math

import numpy as np
import pytest

from clockworm.born import sample_disorder
from clockworm.channel import channel_from_temperature
from clockworm.lattice import build_lattice
from clockworm.metropolis import (
    SpinChainState,
    metro_sweep,
    sector_log_ratio,
    two_replica_correlator,
)
from clockworm.oracle import (
    exact_spin_correlator,
    log_spin_partition,
    spin_boltzmann,
)
from clockworm.seeding import KernelRng, stream
from clockworm.worm import ChainSchedule
from tests.conftest import chi_square_pvalue


def test_infinite_temperature_accepts_all():
    lat = build_lattice(4, 4)
    ch = channel_from_temperature(3, 1e12)
    state = SpinChainState.create(lat, ch, np.zeros(lat.n_links))
    from clockworm import _kernels

    counters = np.zeros(_kernels.N_COUNTERS, dtype=np.int64)
    _kernels.metro_run(state.theta, np.int64(3), state.bond_energy,
                       lat.plaquette_links, lat.plaquette_neighbors, lat.plaquette_signs,
                       KernelRng.from_key(0, 0).state, np.int64(16), state.energy, counters)
    assert counters[_kernels.C_ACCEPT] == counters[_kernels.C_PROPOSE]


def test_cold_ground_state_energy():
    # the zero-record steady state at strong coupling is a constant theta
    # with energy -sum_m beta_m per bond; annealing avoids the domain-wall
    # quench metastability of a random deep start
    lat = build_lattice(4, 4)
    rng_init = np.random.default_rng(1)
    theta = rng_init.integers(0, 2, lat.n_plaquettes, dtype=np.int64)
    krng = KernelRng.from_key(1, 0)
    for i, temp in enumerate([1.0, 0.5, 0.2, 0.05]):
        ch = channel_from_temperature(2, temp)
        state = SpinChainState.create(lat, ch, np.zeros(lat.n_links), theta=theta)
        metro_sweep(state, lat, ch, krng, n_sweeps=600)
        theta = state.theta
    assert len(set(theta.tolist())) == 1
    per_bond = state.total_energy(lat) / lat.n_links
    assert per_bond == pytest.approx(-ch.couplings.sum(), rel=1e-12)


def test_energy_cache_tracks_exactly():
    lat = build_lattice(3, 4)
    ch = channel_from_temperature(4, 0.8)
    rec = sample_disorder(lat, ch, stream(2, 0))
    state = SpinChainState.create(lat, ch, rec.s.astype(float))
    metro_sweep(state, lat, ch, KernelRng.from_key(2, 1), n_sweeps=10_000)
    drift = abs(state.energy[0] - state.total_energy(lat))
    assert drift < 1e-9


def test_magnetization_histogram_matches_enumeration():
    lat = build_lattice(2, 3)
    ch = channel_from_temperature(2, 1.0)
    rec = sample_disorder(lat, ch, stream(3, 0))
    theta_all, log_w = spin_boltzmann(lat, ch, rec.s.astype(float))
    # exact distribution of the number of zero spins, over the theta_0 = 0 slice
    nzeros = (theta_all == 0).sum(axis=1)
    w = np.exp(log_w - log_w.max())
    exact = np.zeros(lat.n_plaquettes + 1)
    for m, weight in zip(nzeros, w):
        exact[m] += weight
    exact /= exact.sum()

    state = SpinChainState.create(lat, ch, rec.s.astype(float))
    rng = KernelRng.from_key(3, 1)
    counts = np.zeros(lat.n_plaquettes + 1, dtype=int)
    metro_sweep(state, lat, ch, rng, n_sweeps=200)
    for _ in range(30_000):
        metro_sweep(state, lat, ch, rng, n_sweeps=8)
        # fold out the global shift the enumeration fixed at theta_0 = 0
        folded = (state.theta - state.theta[0]) % 2
        counts[(folded == 0).sum()] += 1
    assert chi_square_pvalue(counts, exact, min_expected=10) > 0.005


def test_two_replica_correlator_identity_pair():
    lat = build_lattice(3, 3)
    ch = channel_from_temperature(2, 1.0)
    assert two_replica_correlator(lat, ch, np.zeros(lat.n_links), (2, 2),
                                  ChainSchedule(4, 4, 1), stream(4, 0)) == 1.0


def test_two_replica_correlator_limits():
    lat = build_lattice(3, 3)
    pair = (0, 4)
    cold = two_replica_correlator(lat, channel_from_temperature(2, 0.05), np.zeros(lat.n_links),
                                  pair, ChainSchedule(256, 512, 1), stream(5, 0))
    assert cold > 0.98
    hots = [two_replica_correlator(lat, channel_from_temperature(2, 1e12), np.zeros(lat.n_links),
                                   pair, ChainSchedule(64, 2048, 1), stream(5, i + 1))
            for i in range(4)]
    sem = np.std(hots, ddof=1) / 2
    assert abs(np.mean(hots)) <= max(3 * sem, 0.02)


def test_two_replica_correlator_matches_oracle():
    lat = build_lattice(3, 3)
    ch = channel_from_temperature(2, 1.0)
    rec = sample_disorder(lat, ch, stream(6, 0))
    pair = (0, 4)
    exact = abs(exact_spin_correlator(lat, ch, rec.s.astype(float), pair)) ** 2
    vals = [two_replica_correlator(lat, ch, rec.s.astype(float), pair,
                                   ChainSchedule(256, 8000, 1), stream(6, i + 1))
            for i in range(8)]
    mean = np.mean(vals)
    sem = np.std(vals, ddof=1) / math.sqrt(len(vals))
    assert abs(mean - exact) <= max(3 * sem, 0.01)


def test_sector_log_ratio_matches_exact_partition():
    lat = build_lattice(3, 3)
    ch = channel_from_temperature(2, 1.0)
    rec = sample_disorder(lat, ch, stream(7, 0))
    base = rec.s.astype(float)
    twisted = base.copy()
    twisted[lat.frame.gamma_path] -= 1.0
    exact = log_spin_partition(lat, ch, twisted) - log_spin_partition(lat, ch, base)
    est, err = sector_log_ratio(lat, ch, base, 1, ChainSchedule(128, 1024, 1), stream(7, 1), nodes=8)
    assert err > 0
    assert abs(est - exact) <= max(4 * err, 0.05)


def test_sector_log_ratio_zero_twist_is_zero():
    lat = build_lattice(3, 3)
    ch = channel_from_temperature(2, 0.8)
    rec = sample_disorder(lat, ch, stream(8, 0))
    est, err = sector_log_ratio(lat, ch, rec.s.astype(float), 0,
                                ChainSchedule(32, 128, 1), stream(8, 1), nodes=4)
    assert est == pytest.approx(0.0, abs=1e-12)


def test_ti_sector_probabilities_match_oracle():
    from clockworm.metropolis import ti_sector_probabilities
    from clockworm.oracle import sector_table

    lat = build_lattice(3, 3)
    ch = channel_from_temperature(4, 0.6)
    for r in range(3):
        rec = sample_disorder(lat, ch, stream(60, r))
        exact = sector_table(lat, ch, rec).probabilities
        est = ti_sector_probabilities(lat, ch, rec.s.astype(float),
                                      ChainSchedule(128, 1024, 1), stream(61, r))
        assert np.abs(est - exact).max() < 0.08  # fixed-spatial-sector approximation


def test_state_create_validates_record_length():
    lat = build_lattice(3, 3)
    ch = channel_from_temperature(2, 1.0)
    with pytest.raises(ValueError):
        SpinChainState.create(lat, ch, np.zeros(lat.n_links + 1))
