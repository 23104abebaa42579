"""Z_N flow configurations on links: Gauss law, winding, dual-spin parametrization.

A flow assigns an element of Z_N to every link (value on the canonical
orientation).  Physical configurations are divergence-free at every site;
on the torus they split into N x N topological sectors labeled by the
temporal and spatial winding.  Every zero-winding flow is the lattice
gradient of plaquette spins theta (N-fold degenerate under a global shift),
and winding is added by explicit strings along the homology paths, which is
what makes exact uniform sector sampling possible.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from clockworm.lattice import TorusLattice


@dataclass
class FlowConfig:
    """Link flows k in Z_N (canonical orientation)."""

    n: int
    k: np.ndarray  # (E,) int64, values in 0..n-1

    def copy(self) -> "FlowConfig":
        return FlowConfig(self.n, self.k.copy())


@dataclass
class DualSpinConfig:
    """Plaquette spins theta in Z_N."""

    n: int
    theta: np.ndarray  # (P,) int64, values in 0..n-1


def divergence(flow: FlowConfig, lattice: TorusLattice, site: int) -> int:
    """Signed sum of flows over the links incident to the site, mod N."""
    if not (0 <= site < lattice.n_sites):
        raise ValueError(f"site {site} out of range")
    links = lattice.site_links[site]
    signs = lattice.direction_signs
    return int((flow.k[links] * signs).sum() % flow.n)


def divergence_all(flow: FlowConfig, lattice: TorusLattice) -> np.ndarray:
    """Divergence at every site at once (vectorized)."""
    return (flow.k[lattice.site_links] * lattice.direction_signs[None, :]).sum(axis=1) % flow.n


def is_divergence_free(flow: FlowConfig, lattice: TorusLattice) -> bool:
    return bool((divergence_all(flow, lattice) == 0).all())


def temporal_winding(flow: FlowConfig, lattice: TorusLattice) -> int:
    """Net flux through the temporal cut, mod N.

    Well-defined (cut-row independent) only on divergence-free flows; the
    caller owns that precondition.
    """
    return int(flow.k[lattice.frame.temporal_cut].sum() % flow.n)


def spatial_winding(flow: FlowConfig, lattice: TorusLattice) -> int:
    """Net flux through the spatial cut, mod N."""
    return int(flow.k[lattice.frame.spatial_cut].sum() % flow.n)


def flow_from_dual_spins(theta: DualSpinConfig, lattice: TorusLattice) -> FlowConfig:
    """Lattice gradient of plaquette spins: k = theta_P1 - theta_P2 mod N.

    The (P1, P2) pair per link follows the left-to-right dual-crossing
    convention frozen in the lattice module.  The result is divergence-free
    with both windings zero, and is invariant under a global theta shift.
    """
    lp = lattice.link_plaquettes
    k = (theta.theta[lp[:, 0]] - theta.theta[lp[:, 1]]) % theta.n
    return FlowConfig(theta.n, k.astype(np.int64))


def add_winding_string(flow: FlowConfig, lattice: TorusLattice, q: int, cycle: str) -> FlowConfig:
    """Add q units of flow along the chosen winding path (new FlowConfig).

    Divergence is unchanged; the corresponding winding increases by q mod N.
    """
    if cycle == "temporal":
        path = lattice.frame.gamma_path
    elif cycle == "spatial":
        path = lattice.frame.spatial_path
    else:
        raise ValueError(f"cycle must be 'temporal' or 'spatial', got {cycle!r}")
    out = flow.copy()
    out.k[path] = (out.k[path] + q) % flow.n
    return out


def uniform_gauss_sample(
    lattice: TorusLattice,
    n: int,
    rng: np.random.Generator,
    q_temporal: int = 0,
    q_spatial: int = 0,
) -> FlowConfig:
    """Uniform divergence-free flow in the (q_temporal, q_spatial) sector.

    theta is drawn uniformly and converted to a zero-winding flow, then the
    two winding strings are added.  Each flow in the sector has exactly N
    theta preimages (the global shift), so the result is exactly uniform over
    the sector at O(P) cost, with no rejection.
    """
    theta = DualSpinConfig(n, rng.integers(0, n, size=lattice.n_plaquettes, dtype=np.int64))
    flow = flow_from_dual_spins(theta, lattice)
    if q_temporal % n:
        flow = add_winding_string(flow, lattice, q_temporal % n, "temporal")
    if q_spatial % n:
        flow = add_winding_string(flow, lattice, q_spatial % n, "spatial")
    return flow


def repair_to_divergence_free(flow: FlowConfig, lattice: TorusLattice) -> FlowConfig:
    """Nearest-effort divergence-free completion of an arbitrary flow.

    Walks charge off every defective site along L-shaped paths to the next
    defective site (x first, then t), cancelling divergences pairwise; a
    divergence-free input comes back unchanged.  The result is not a
    minimal-weight completion, just a valid one close to the input, which is
    what a Markov chain wants as its starting point.
    """
    out = flow.copy()
    n = flow.n
    div = divergence_all(out, lattice)
    defective = [int(v) for v in np.nonzero(div)[0]]
    while defective:
        a = defective[0]
        charge = int(div[a])
        b = next(v for v in defective if v != a) if len(defective) > 1 else a
        if a == b:  # lone defect can only cancel against itself around a cycle; impossible
            raise ValueError("flow has a single defective site; divergences do not balance")
        xa, ya = lattice.site_xy(a)
        xb, yb = lattice.site_xy(b)
        # subtracting `charge` along a path from a to b moves the divergence of a onto b
        x = xa
        while x != xb:
            link = lattice.link_index(x, ya, 0)
            out.k[link] = (out.k[link] - charge) % n
            x = (x + 1) % lattice.width
        y = ya
        while y != yb:
            link = lattice.link_index(xb, y, 1)
            out.k[link] = (out.k[link] - charge) % n
            y = (y + 1) % lattice.height
        div = divergence_all(out, lattice)
        defective = [int(v) for v in np.nonzero(div)[0]]
    return out


def flux_through_dual_path(flow: FlowConfig, lattice: TorusLattice, p1: int, p2: int) -> int:
    """Flux picked up by an open dual-lattice string from plaquette p1 to p2.

    The string runs rightward along p1's row to p1's column... routed first
    along the row of p1 to the column of p2, then along that column; each
    dual step accumulates the flow of the direct link it crosses, with the
    left-to-right sign convention.  On a gradient flow this telescopes to
    theta_{p1} - theta_{p2}.
    """
    x1, y1 = lattice.site_xy(p1)
    x2, y2 = lattice.site_xy(p2)
    total = 0
    # step right: crossing from plaquette (x, y1) to (x+1, y1) crosses t-link at (x+1, y1)
    x = x1
    while x != x2:
        total += flow.k[lattice.link_index(x + 1, y1, 1)]
        x = (x + 1) % lattice.width
    # step up: crossing from plaquette (x2, y) to (x2, y+1) crosses x-link at (x2, y+1),
    # oriented right-to-left as seen from the walker, hence the minus sign
    y = y1
    while y != y2:
        total -= flow.k[lattice.link_index(x2, y + 1, 0)]
        y = (y + 1) % lattice.height
    return int(total % flow.n)
