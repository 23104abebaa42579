import math

import numpy as np
import pytest

from clockworm.born import DisorderRealization, sample_disorder
from clockworm.channel import channel_from_temperature
from clockworm.lattice import build_lattice
from clockworm.oracle import (
    DENSE_SECTOR_LIMIT,
    InstanceTooLarge,
    apply_link_channel,
    born_record_distribution,
    decohered_logical_state,
    enumerate_records,
    enumerate_sector,
    enumerate_sector_flows,
    exact_flow_correlator,
    exact_observables,
    exact_spin_correlator,
    log_spin_partition,
    logical_state,
    purity,
    relative_entropy,
    sector_basis,
    sector_table,
)
from clockworm.seeding import stream


def zero_record(lat, n):
    return DisorderRealization(n, np.zeros(lat.n_links, dtype=np.int64))


def test_infinite_temperature_sectors_equal():
    lat = build_lattice(2, 2)
    ch = channel_from_temperature(2, 1e12)
    table = sector_table(lat, ch, zero_record(lat, 2))
    assert np.allclose(table.z, table.z[0])
    # each temporal sector holds 16 flows, weight (1/2)^E each
    assert table.z[0] == pytest.approx(16 * 0.5**lat.n_links, rel=1e-10)


def test_zero_record_argmax_is_trivial_sector():
    lat = build_lattice(3, 3)
    for n, temp in [(2, 1.0), (3, 0.7)]:
        ch = channel_from_temperature(n, temp)
        table = sector_table(lat, ch, zero_record(lat, n))
        assert int(np.argmax(table.z)) == 0


def test_normalization_identity():
    # sum_s Z[s, Q] = number of flows in sector Q, since the outcome weights
    # per link sum to one for every flow
    lat = build_lattice(2, 2)
    for n, temp in [(2, 1.0), (3, 0.6)]:
        ch = channel_from_temperature(n, temp)
        zsum = np.zeros(n)
        for row in enumerate_records(lat, n):
            zsum += sector_table(lat, ch, DisorderRealization(n, row)).z
        assert np.allclose(zsum, n ** lat.n_sites, rtol=1e-9)


def test_enumerate_sector_scalar():
    lat = build_lattice(2, 2)
    ch = channel_from_temperature(2, 1.0)
    rec = sample_disorder(lat, ch, stream(1, 0))
    table = sector_table(lat, ch, rec)
    assert enumerate_sector(lat, ch, rec, 1) == pytest.approx(table.z[1], rel=1e-12)


def test_budget_guards():
    with pytest.raises(InstanceTooLarge):
        sector_table(build_lattice(8, 8), channel_from_temperature(2, 1.0),
                     zero_record(build_lattice(8, 8), 2))
    with pytest.raises(InstanceTooLarge):
        enumerate_records(build_lattice(4, 4), 3)
    with pytest.raises(InstanceTooLarge):
        sector_basis(build_lattice(4, 4), 3, (0,))


def test_born_distribution_normalized():
    lat = build_lattice(2, 2)
    for n in (2, 3):
        ch = channel_from_temperature(n, 0.9)
        _, probs = born_record_distribution(lat, ch)
        assert probs.sum() == pytest.approx(1.0, abs=1e-10)
        assert (probs >= 0).all()


def test_flow_and_spin_correlators_agree():
    lat = build_lattice(3, 3)
    for n, temp in [(2, 1.0), (3, 0.8)]:
        ch = channel_from_temperature(n, temp)
        rec = sample_disorder(lat, ch, stream(2, n))
        for pair in [(0, 1), (0, 4), (2, 7)]:
            spin = exact_spin_correlator(lat, ch, rec.s.astype(float), pair)
            flow = exact_flow_correlator(lat, ch, rec, pair, (0, 0))
            assert spin == pytest.approx(flow, abs=1e-10)


def test_spin_partition_reconstructs_sector_table():
    # Z[s, Q] = normalizer^(-E) * sum_R Z_spin[s - Q*gamma - R*seam]: the
    # sector table is the spatially traced twisted spin model
    from scipy.special import logsumexp

    from clockworm.oracle import bond_energy_table

    lat = build_lattice(2, 2)
    for n, temp in [(2, 0.7), (3, 1.2)]:
        ch = channel_from_temperature(n, temp)
        rec = sample_disorder(lat, ch, stream(3, n))
        log_norm = logsumexp(-bond_energy_table(lat, ch, np.zeros(lat.n_links))[0])
        table = sector_table(lat, ch, rec)
        for q in range(n):
            parts = []
            for r in range(n):
                twisted = rec.s.astype(float)
                twisted[lat.frame.gamma_path] -= q
                twisted[lat.frame.spatial_path] -= r
                parts.append(log_spin_partition(lat, ch, twisted))
            reconstructed = logsumexp(parts) - lat.n_links * log_norm
            assert reconstructed == pytest.approx(table.log_z[q], abs=1e-9)


def test_exact_observables_limits():
    lat = build_lattice(2, 2)
    hot = exact_observables(lat, channel_from_temperature(2, 1e12))
    assert hot.order_parameter == pytest.approx(0.0, abs=1e-9)
    assert hot.coherent_information == pytest.approx(math.log(2), abs=1e-9)
    assert hot.exact_disorder_sum
    cold = exact_observables(lat, channel_from_temperature(2, 1e-3))
    assert cold.order_parameter > 0.99
    assert cold.coherent_information < 0.01
    assert cold.charge_variance == pytest.approx(1 - cold.order_parameter)


def test_exact_observables_monotone_grid():
    lat = build_lattice(2, 2)
    temps = [3.0, 1.5, 1.0, 0.6, 0.3]
    ops = [exact_observables(lat, channel_from_temperature(2, t)).order_parameter for t in temps]
    assert all(a < b for a, b in zip(ops, ops[1:]))


def test_exact_observables_sampled_route():
    lat = build_lattice(3, 3)  # N^E too big for the full sum
    ch = channel_from_temperature(2, 1.0)
    obs = exact_observables(lat, ch, rng=stream(4, 0), n_records=40)
    assert not obs.exact_disorder_sum
    assert obs.n_records == 40
    assert 0 <= obs.order_parameter <= 1
    assert obs.order_parameter_err > 0
    with pytest.raises(ValueError):
        exact_observables(lat, ch)  # needs an rng for the Born route


# --- dense decohered states ---------------------------------------------------------------


def test_sector_basis_dimensions():
    lat = build_lattice(2, 2)
    flows, labels = sector_basis(lat, 2, (0, 1))
    assert flows.shape == (32, lat.n_links)
    assert labels.tolist() == [0] * 16 + [1] * 16
    assert 2 ** lat.n_sites <= DENSE_SECTOR_LIMIT


def test_logical_state_pure_uniform():
    lat = build_lattice(2, 2)
    state = logical_state(lat, 2, 0)
    state.validate()
    assert purity(state) == pytest.approx(1.0, abs=1e-12)
    assert state.rho.shape == (16, 16)
    assert np.allclose(state.rho, 1 / 16)


def test_infinite_temperature_channel_is_identity():
    lat = build_lattice(2, 2)
    ch = channel_from_temperature(2, 1e12)
    state = logical_state(lat, 2, 0)
    out = apply_link_channel(state, ch)
    assert np.allclose(out.rho, state.rho, atol=1e-9)


def test_projective_channel_dephases():
    lat = build_lattice(2, 2)
    ch = channel_from_temperature(2, 1e-3)
    out = decohered_logical_state(lat, ch, 0)
    out.validate()
    off = out.rho - np.diag(np.diag(out.rho))
    assert np.abs(off).max() < 1e-12
    assert purity(out) == pytest.approx(1 / 16, rel=1e-6)


def test_purity_monotone_in_channel_strength():
    lat = build_lattice(2, 2)
    purities = [purity(decohered_logical_state(lat, channel_from_temperature(2, t), 0))
                for t in [5.0, 2.0, 1.0, 0.5, 0.2]]
    assert all(a > b for a, b in zip(purities, purities[1:]))


def test_relative_entropy_basics():
    lat = build_lattice(2, 2)
    ch = channel_from_temperature(2, 1.0)
    rho = decohered_logical_state(lat, ch, 0, basis_sectors=(0, 1))
    assert relative_entropy(rho, rho) <= 1e-10
    # orthogonal pure states in different sectors: infinite divergence
    a = logical_state(lat, 2, 0, basis_sectors=(0, 1))
    b = logical_state(lat, 2, 1, basis_sectors=(0, 1))
    assert relative_entropy(a, b) == math.inf


def test_relative_entropy_data_processing_conserves_classical_part():
    # sector-label mixtures differ only classically; a sector-preserving
    # channel leaves that relative entropy exactly invariant
    lat = build_lattice(2, 2)
    ch = channel_from_temperature(2, 1.5)
    r0 = logical_state(lat, 2, 0, basis_sectors=(0, 1))
    r1 = logical_state(lat, 2, 1, basis_sectors=(0, 1))

    def mix(w):
        return r0.__class__(n=2, basis_flows=r0.basis_flows, basis_sectors=r0.basis_sectors,
                            rho=w * r0.rho + (1 - w) * r1.rho)

    a, b = mix(0.75), mix(0.25)
    expected = 0.5 * math.log(3.0)  # (0.75 - 0.25) * ln(0.75/0.25)
    values = []
    for _ in range(3):
        values.append(relative_entropy(a, b))
        a, b = apply_link_channel(a, ch), apply_link_channel(b, ch)
    assert np.allclose(values, expected, atol=1e-8)


def test_relative_entropy_data_processing_damps_coherences():
    # logical superpositions differ by cross-sector coherences, which the
    # per-link channel damps: D strictly decreases with extra rounds
    lat = build_lattice(2, 2)
    ch = channel_from_temperature(2, 1.5)
    template = logical_state(lat, 2, 0, basis_sectors=(0, 1))
    dim = template.rho.shape[0]
    psi_p = np.full(dim, 1 / math.sqrt(dim), dtype=complex)
    psi_m = psi_p.copy()
    psi_m[dim // 2:] *= -1

    def pure(psi):
        return template.__class__(n=2, basis_flows=template.basis_flows,
                                  basis_sectors=template.basis_sectors,
                                  rho=np.outer(psi, psi.conj()))

    a, b = apply_link_channel(pure(psi_p), ch), apply_link_channel(pure(psi_m), ch)
    values = []
    for _ in range(4):
        values.append(relative_entropy(a, b))
        a, b = apply_link_channel(a, ch), apply_link_channel(b, ch)
    assert all(np.isfinite(values))
    assert all(x >= y - 1e-10 for x, y in zip(values, values[1:]))
    assert values[0] > values[-1] + 1e-3


def test_relative_entropy_rejects_non_states():
    lat = build_lattice(2, 2)
    bad = logical_state(lat, 2, 0)
    bad.rho = bad.rho * 2.0
    good = logical_state(lat, 2, 0)
    with pytest.raises(ValueError):
        relative_entropy(bad, good)


def test_dense_state_channel_rounds_commute_with_composition():
    lat = build_lattice(2, 2)
    ch = channel_from_temperature(2, 0.8)
    state = logical_state(lat, 2, 0)
    twice = apply_link_channel(apply_link_channel(state, ch), ch)
    rounds2 = apply_link_channel(state, ch, rounds=2)
    assert np.allclose(twice.rho, rounds2.rho, atol=1e-13)
