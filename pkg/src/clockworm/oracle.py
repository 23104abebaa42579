"""Brute-force ground truth on tiny instances.

Everything here enumerates: divergence-free flows are parametrized as dual
gradients (plaquette spins with the first spin pinned to zero, which
quotients the global-shift redundancy) plus explicit winding strings, so
each flow appears exactly once.  On top of that sit exact sector partition
functions, Born marginals, spin correlators, and dense decohered logical
states with their relative entropies.

These are validation tools: guards reject instances whose enumeration would
not finish at desk scale, and no transfer-matrix or other acceleration is
attempted.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Optional, Sequence

import numpy as np
from scipy.special import logsumexp

from clockworm.born import DisorderRealization, sample_disorder
from clockworm.channel import ClockChannel
from clockworm.lattice import TorusLattice

ENUMERATION_BUDGET = 2**26  # max N^(V+1) flow terms per sector table
DENSE_SECTOR_LIMIT = 4096  # max flows per sector in dense states
EIG_CLAMP = 1e-14

_TWO_PI = 2.0 * np.pi


class InstanceTooLarge(ValueError):
    pass


def _check_flow_budget(lattice: TorusLattice, n: int, budget: int = ENUMERATION_BUDGET) -> None:
    if (lattice.n_sites + 1) * math.log(n) > math.log(budget):
        raise InstanceTooLarge(
            f"flow enumeration needs N^(V+1) = {n}^{lattice.n_sites + 1} terms, over the budget {budget}"
        )


def _theta_blocks(n: int, n_free: int, block_rows: int = 4096) -> Iterable[np.ndarray]:
    """All Z_N assignments of the free plaquette spins, in mixed-radix order."""
    total = n**n_free
    digits = np.array([n**(n_free - 1 - i) for i in range(n_free)], dtype=np.int64) if n_free else None
    for start in range(0, total, block_rows):
        idx = np.arange(start, min(start + block_rows, total), dtype=np.int64)
        if n_free == 0:
            yield np.zeros((idx.size, 0), dtype=np.int64)
        else:
            yield (idx[:, None] // digits[None, :]) % n


def _gradient_flows(lattice: TorusLattice, theta_free: np.ndarray, n: int) -> np.ndarray:
    """Flows of the dual gradients for a block of free-spin rows (theta_0 = 0)."""
    theta = np.concatenate([np.zeros((theta_free.shape[0], 1), dtype=np.int64), theta_free], axis=1)
    lp = lattice.link_plaquettes
    return (theta[:, lp[:, 0]] - theta[:, lp[:, 1]]) % n


@dataclass
class SectorTable:
    """Exact per-sector partition functions Z[s, Q] (temporal Q, spatial summed)."""

    n: int
    log_z: np.ndarray  # (N,) natural logs, unnormalized

    @property
    def z(self) -> np.ndarray:
        return np.exp(self.log_z)

    @property
    def probabilities(self) -> np.ndarray:
        return np.exp(self.log_z - logsumexp(self.log_z))

    @property
    def log_record_weight(self) -> float:
        """log sum_Q Z[s, Q]; the unnormalized Born weight of the record."""
        return float(logsumexp(self.log_z))


def sector_table(lattice: TorusLattice, channel: ClockChannel, record: DisorderRealization) -> SectorTable:
    """Exact Z[s, Q] for every temporal sector Q by full flow enumeration."""
    n = channel.n
    if record.n != n:
        raise ValueError("record and channel have different Z_N order")
    _check_flow_budget(lattice, n)
    logp = channel.log_weights
    s = record.s
    gamma = lattice.frame.gamma_path
    seam = lattice.frame.spatial_path
    others = np.setdiff1d(np.arange(lattice.n_links), np.concatenate([gamma, seam]))

    pieces: list[list[float]] = [[] for _ in range(n)]
    for theta_free in _theta_blocks(n, lattice.n_plaquettes - 1):
        k = _gradient_flows(lattice, theta_free, n)
        base = logp[(k[:, others] - s[others]) % n].sum(axis=1)
        # winding strings touch only the two (disjoint) paths, so the
        # sector shifts separate into a temporal and a spatial correction
        dt = np.stack([logp[(k[:, gamma] + q - s[gamma]) % n].sum(axis=1) for q in range(n)])
        dx = np.stack([logp[(k[:, seam] + r - s[seam]) % n].sum(axis=1) for r in range(n)])
        for q in range(n):
            pieces[q].append(logsumexp(base[None, :] + dt[q][None, :] + dx))
    return SectorTable(n=n, log_z=np.array([logsumexp(np.array(p)) for p in pieces]))


def enumerate_sector(lattice: TorusLattice, channel: ClockChannel, record: DisorderRealization, q: int) -> float:
    """Exact Z[s, q] (spatial winding summed over)."""
    return float(sector_table(lattice, channel, record).z[q % channel.n])


def enumerate_sector_flows(lattice: TorusLattice, n: int, q_temporal: int, q_spatial: int) -> np.ndarray:
    """All divergence-free flows of one (temporal, spatial) winding sector."""
    _check_flow_budget(lattice, n)
    rows = []
    gamma = lattice.frame.gamma_path
    seam = lattice.frame.spatial_path
    for theta_free in _theta_blocks(n, lattice.n_plaquettes - 1):
        k = _gradient_flows(lattice, theta_free, n)
        k[:, gamma] = (k[:, gamma] + q_temporal) % n
        k[:, seam] = (k[:, seam] + q_spatial) % n
        rows.append(k)
    return np.concatenate(rows, axis=0)


# --- record (Born) marginals ------------------------------------------------------------


def enumerate_records(lattice: TorusLattice, n: int, budget: int = 2**20) -> np.ndarray:
    """All N^E records, mixed-radix order."""
    e = lattice.n_links
    if e * math.log(n) > math.log(budget):
        raise InstanceTooLarge(f"record enumeration: {n}^{e} records over budget")
    digits = np.array([n**(e - 1 - i) for i in range(e)], dtype=np.int64)
    idx = np.arange(n**e, dtype=np.int64)
    return (idx[:, None] // digits[None, :]) % n


def born_record_distribution(lattice: TorusLattice, channel: ClockChannel) -> tuple[np.ndarray, np.ndarray]:
    """Exact Born marginal P(s) over all records of a tiny instance."""
    n = channel.n
    records = enumerate_records(lattice, n)
    logp = channel.log_weights
    log_weights = np.full(records.shape[0], -np.inf)
    for q in range(n):
        for r in range(n):
            flows = enumerate_sector_flows(lattice, n, q, r)
            # sum over flows of prod_links p_{k - s}, accumulated per record
            lw = logsumexp(
                logp[(flows[:, None, :] - records[None, :, :]) % n].sum(axis=2), axis=0
            )
            log_weights = np.logaddexp(log_weights, lw)
    log_weights -= (lattice.n_sites + 1) * math.log(n)  # normalize: sum_s P(s) = 1
    return records, np.exp(log_weights)


# --- dual-spin (clock model) exact quantities --------------------------------------------


def bond_energy_table(lattice: TorusLattice, channel: ClockChannel, record_values: np.ndarray) -> np.ndarray:
    """(E, N) bond energies -sum_m beta_m cos(2 pi m (d - s_l) / N) per flow value d.

    Records may be real-valued here (fractional twists interpolate sectors).
    """
    n = channel.n
    beta = channel.couplings
    d = np.arange(n)
    diff = d[None, :] - np.asarray(record_values, dtype=float)[:, None]  # (E, N)
    energy = np.zeros_like(diff)
    for m, b in enumerate(beta):
        if b != 0.0:
            energy -= b * np.cos(_TWO_PI * m * diff / n)
    return energy


def _all_theta(lattice: TorusLattice, n: int) -> np.ndarray:
    blocks = list(_theta_blocks(n, lattice.n_plaquettes - 1))
    theta_free = np.concatenate(blocks, axis=0)
    return np.concatenate([np.zeros((theta_free.shape[0], 1), dtype=np.int64), theta_free], axis=1)


def spin_boltzmann(lattice: TorusLattice, channel: ClockChannel, record_values: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """All spin configurations (theta_0 = 0) and their log Boltzmann weights."""
    _check_flow_budget(lattice, channel.n)
    eb = bond_energy_table(lattice, channel, record_values)
    theta = _all_theta(lattice, channel.n)
    lp = lattice.link_plaquettes
    dtheta = (theta[:, lp[:, 0]] - theta[:, lp[:, 1]]) % channel.n
    log_w = -eb[np.arange(lattice.n_links)[None, :], dtheta].sum(axis=1)
    return theta, log_w


def log_spin_partition(lattice: TorusLattice, channel: ClockChannel, record_values: np.ndarray) -> float:
    """log sum_theta exp(-H) with theta_0 pinned to zero."""
    _, log_w = spin_boltzmann(lattice, channel, record_values)
    return float(logsumexp(log_w))


def exact_spin_correlator(lattice: TorusLattice, channel: ClockChannel, record_values: np.ndarray,
                          pair: tuple[int, int]) -> complex:
    """Thermal expectation of omega^(theta_p1 - theta_p2) in the spin model."""
    p1, p2 = pair
    theta, log_w = spin_boltzmann(lattice, channel, record_values)
    w = np.exp(log_w - logsumexp(log_w))
    phase = np.exp(2j * np.pi * (theta[:, p1] - theta[:, p2]) / channel.n)
    return complex((w * phase).sum())


def exact_flow_correlator(lattice: TorusLattice, channel: ClockChannel, record: DisorderRealization,
                          pair: tuple[int, int], sector: tuple[int, int] = (0, 0)) -> complex:
    """Open 't Hooft string expectation in the flow representation, one sector.

    The string runs along the dual path between the pair; each crossed link
    contributes its flow with the left-to-right sign.  Telescoping makes this
    identical to exact_spin_correlator in the (0,0) sector; the equality is a
    cross-check of the dual geometry, not an assumption.
    """
    from clockworm.flows import FlowConfig, flux_through_dual_path

    n = channel.n
    flows = enumerate_sector_flows(lattice, n, *sector)
    logp = channel.log_weights
    log_w = logp[(flows - record.s[None, :]) % n].sum(axis=1)
    w = np.exp(log_w - logsumexp(log_w))
    flux = np.array([
        flux_through_dual_path(FlowConfig(n, row), lattice, pair[0], pair[1]) for row in flows
    ])
    return complex((w * np.exp(2j * np.pi * flux / n)).sum())


# --- exact disorder-averaged observables --------------------------------------------------


@dataclass
class ExactObservables:
    order_parameter: float
    order_parameter_err: float
    coherent_information: float  # nats
    coherent_information_err: float
    correlator: float  # disorder mean of |<omega^(theta_p1-theta_p2)>|^2
    correlator_err: float
    pair: tuple[int, int]
    n_records: int
    exact_disorder_sum: bool

    @property
    def charge_variance(self) -> float:
        return 1.0 - self.order_parameter

    def coherent_information_normalized(self, n: int) -> float:
        return self.coherent_information / math.log(n)


def _entropy_nats(p: np.ndarray) -> float:
    p = p[p > 0]
    return float(-(p * np.log(p)).sum())


def default_pair(lattice: TorusLattice) -> tuple[int, int]:
    return 0, lattice.plaquette_index(lattice.width // 2, 0)


def exact_observables(
    lattice: TorusLattice,
    channel: ClockChannel,
    pair: Optional[tuple[int, int]] = None,
    rng: Optional[np.random.Generator] = None,
    n_records: int = 200,
    record_budget: int = 2**16,
) -> ExactObservables:
    """Disorder-averaged order parameter, coherent information, correlator.

    Sums every record exactly when N^E fits the budget; otherwise draws
    Born-sampled records (exact per-record tables) and reports jackknife
    errors over the sample.
    """
    from clockworm.stats import jackknife_mean

    n = channel.n
    pair = pair if pair is not None else default_pair(lattice)
    omega = np.exp(2j * np.pi * np.arange(n) / n)
    full_sum = lattice.n_links * math.log(n) <= math.log(record_budget)

    if full_sum:
        records, probs = born_record_distribution(lattice, channel)
        op = ci = corr = 0.0
        for row, p_s in zip(records, probs):
            rec = DisorderRealization(n=n, s=row)
            table = sector_table(lattice, channel, rec)
            pq = table.probabilities
            op += p_s * abs((omega * pq).sum()) ** 2
            ci += p_s * _entropy_nats(pq)
            corr += p_s * abs(exact_spin_correlator(lattice, channel, row.astype(float), pair)) ** 2
        return ExactObservables(op, 0.0, ci, 0.0, corr, 0.0, pair, records.shape[0], True)

    if rng is None:
        raise ValueError("instance too large for the full record sum; pass an rng for Born sampling")
    ops, cis, corrs = [], [], []
    for _ in range(n_records):
        rec = sample_disorder(lattice, channel, rng)
        table = sector_table(lattice, channel, rec)
        pq = table.probabilities
        ops.append(abs((omega * pq).sum()) ** 2)
        cis.append(_entropy_nats(pq))
        corrs.append(abs(exact_spin_correlator(lattice, channel, rec.s.astype(float), pair)) ** 2)
    op, op_err = jackknife_mean(ops)
    ci, ci_err = jackknife_mean(cis)
    corr, corr_err = jackknife_mean(corrs)
    return ExactObservables(op, op_err, ci, ci_err, corr, corr_err, pair, n_records, False)


# --- dense decohered logical states -------------------------------------------------------


@dataclass
class DenseState:
    """Density operator over an explicit divergence-free flow basis.

    Basis rows are ordered sector block by sector block (in basis_sectors
    order); within a block the spatial winding ascends first, then the free
    plaquette spins in mixed-radix order.
    """

    n: int
    basis_flows: np.ndarray  # (dim, E)
    basis_sectors: tuple[int, ...]
    rho: np.ndarray  # (dim, dim) complex

    def validate(self, atol: float = 1e-10) -> None:
        if abs(np.trace(self.rho).real - 1.0) > atol or abs(np.trace(self.rho).imag) > atol:
            raise ValueError("density matrix trace is not 1")
        if not np.allclose(self.rho, self.rho.conj().T, atol=atol):
            raise ValueError("density matrix is not Hermitian")
        if np.linalg.eigvalsh(self.rho).min() < -atol:
            raise ValueError("density matrix is not positive semidefinite")


def sector_basis(lattice: TorusLattice, n: int, basis_sectors: Sequence[int]) -> tuple[np.ndarray, np.ndarray]:
    """Flow basis of one or several temporal sectors; returns (flows, sector labels)."""
    _check_flow_budget(lattice, n)
    per_sector = n ** lattice.n_sites
    if per_sector > DENSE_SECTOR_LIMIT:
        raise InstanceTooLarge(f"sector dimension {per_sector} over the dense-state limit")
    blocks, labels = [], []
    for q in basis_sectors:
        for r in range(n):
            flows = enumerate_sector_flows(lattice, n, q, r)
            blocks.append(flows)
            labels.append(np.full(flows.shape[0], q, dtype=np.int64))
    return np.concatenate(blocks, axis=0), np.concatenate(labels)


def logical_state(lattice: TorusLattice, n: int, q: int,
                  basis_sectors: Optional[Sequence[int]] = None) -> DenseState:
    """Pure uniform superposition over the sector-q flow basis."""
    sectors = tuple(basis_sectors) if basis_sectors is not None else (q,)
    flows, labels = sector_basis(lattice, n, sectors)
    psi = (labels == q).astype(complex)
    psi /= np.linalg.norm(psi)
    return DenseState(n=n, basis_flows=flows, basis_sectors=sectors, rho=np.outer(psi, psi.conj()))


def _link_channel_factor(state: DenseState, channel: ClockChannel) -> np.ndarray:
    """Elementwise damping factor of one full round of per-link measurement channels."""
    n = channel.n
    p = channel.weights
    g = np.array([(np.sqrt(p * np.roll(p, -d))).sum() for d in range(n)])
    k = state.basis_flows
    dim = k.shape[0]
    factor = np.ones((dim, dim))
    for mu in range(k.shape[1]):
        factor *= g[(k[:, mu][:, None] - k[:, mu][None, :]) % n]
    return factor


def apply_link_channel(state: DenseState, channel: ClockChannel, rounds: int = 1) -> DenseState:
    """Apply the per-link weak-measurement channel (Kraus sum over outcomes).

    Each link's Kraus operators are diagonal in the flow basis, so one round
    multiplies rho elementwise by a product of per-link damping factors.
    """
    if channel.n != state.n:
        raise ValueError("channel and state have different Z_N order")
    factor = _link_channel_factor(state, channel)
    rho = state.rho.copy()
    for _ in range(rounds):
        rho = rho * factor
    return DenseState(n=state.n, basis_flows=state.basis_flows, basis_sectors=state.basis_sectors, rho=rho)


def decohered_logical_state(lattice: TorusLattice, channel: ClockChannel, q: int,
                            basis_sectors: Optional[Sequence[int]] = None) -> DenseState:
    """Logical sector-q state after one round of the per-link channel."""
    return apply_link_channel(logical_state(lattice, channel.n, q, basis_sectors), channel)


def purity(state: DenseState) -> float:
    return float(np.trace(state.rho @ state.rho).real)


def relative_entropy(a: DenseState, b: DenseState) -> float:
    """Tr a (ln a - ln b) in nats; +inf when supp(a) leaks outside supp(b)."""
    a.validate()
    b.validate()
    if a.rho.shape != b.rho.shape:
        raise ValueError("states live on different bases")
    ev_a, vec_a = np.linalg.eigh(a.rho)
    ev_b, vec_b = np.linalg.eigh(b.rho)
    ev_a = np.clip(ev_a.real, 0.0, None)
    support_b = ev_b > EIG_CLAMP
    if not support_b.all():
        outside = vec_b[:, ~support_b]
        leak = float(np.einsum("ij,jk,ki->", outside.conj().T, a.rho, outside).real)
        if leak > 1e-12:
            return math.inf
    term_a = float((ev_a[ev_a > EIG_CLAMP] * np.log(ev_a[ev_a > EIG_CLAMP])).sum())
    log_b = (vec_b[:, support_b] * np.log(ev_b[support_b])) @ vec_b[:, support_b].conj().T
    term_b = float(np.trace(a.rho @ log_b).real)
    return max(term_a - term_b, 0.0)
