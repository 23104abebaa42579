"""Born-rule sampling of quenched measurement records.

A record is drawn by first sampling a hidden flow (uniform winding charges,
then a uniform divergence-free flow in that sector) and then sampling each
link outcome conditionally on the flow through it.  The marginal law of the
record is proportional to the sector-summed partition function, i.e. the
disorder sits exactly on the Nishimori line without ever evaluating Z.

The hidden charges are the ground truth a decoder would try to infer; they
are stored for diagnostics only and must never enter estimators.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from clockworm.channel import ClockChannel
from clockworm.flows import uniform_gauss_sample
from clockworm.lattice import TorusLattice


@dataclass(frozen=True)
class Provenance:
    master_seed: Optional[int]
    index: Optional[int]
    hidden_temporal: int
    hidden_spatial: int


@dataclass
class DisorderRealization:
    """One quenched measurement record: an outcome in Z_N per link."""

    n: int
    s: np.ndarray
    provenance: Optional[Provenance] = None


def sample_disorder(
    lattice: TorusLattice,
    channel: ClockChannel,
    rng: np.random.Generator,
    master_seed: Optional[int] = None,
    index: Optional[int] = None,
) -> DisorderRealization:
    """Draw one record with its Born probability."""
    n = channel.n
    q_t = int(rng.integers(n))
    q_x = int(rng.integers(n))
    flow = uniform_gauss_sample(lattice, n, rng, q_temporal=q_t, q_spatial=q_x)
    # outcome s = k - d with d ~ p, so P(s | k) = p_{(k-s) mod N} linkwise
    d = rng.choice(n, size=lattice.n_links, p=channel.weights)
    s = (flow.k - d) % n
    return DisorderRealization(
        n=n,
        s=s.astype(np.int64),
        provenance=Provenance(master_seed, index, hidden_temporal=q_t, hidden_spatial=q_x),
    )


def twist_disorder(record: DisorderRealization, lattice: TorusLattice, q: int) -> DisorderRealization:
    """Subtract q from the record on every gamma-path link (new record).

    Relabels the winding sectors: the sector-q partition function of the
    twisted record equals the sector-(Q+q) one of the original.
    """
    s = record.s.copy()
    path = lattice.frame.gamma_path
    s[path] = (s[path] - q) % record.n
    return DisorderRealization(n=record.n, s=s, provenance=record.provenance)


def twist_disorder_spatial(record: DisorderRealization, lattice: TorusLattice, q: int) -> DisorderRealization:
    """Spatial analogue of twist_disorder, along the spatial seam."""
    s = record.s.copy()
    path = lattice.frame.spatial_path
    s[path] = (s[path] - q) % record.n
    return DisorderRealization(n=record.n, s=s, provenance=record.provenance)


def record_frustration(record: DisorderRealization, lattice: TorusLattice) -> int:
    """Temporal winding of the record itself, mod N.

    For near-projective records this equals the hidden temporal charge; in
    the ordered phase the sector with this label is the unfrustrated one.
    """
    return int(record.s[lattice.frame.temporal_cut].sum() % record.n)
