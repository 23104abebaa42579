"""L x t periodic square lattice: sites, oriented links, plaquettes, homology.

Index conventions (frozen so that serialized output is comparable across
runs):

* site (x, y) -> index y*L + x, with x in [0, L) the spatial column and
  y in [0, t) the temporal row;
* link id = 2*site + direction, direction 0 for the +x link out of the site,
  1 for the +t link; canonical orientations point in +x and +t;
* plaquette (x, y) -> index y*L + x names the square whose lower-left corner
  is site (x, y).

Dual-crossing orientation (shared with the flow and spin modules): a positive
flow on an x-link equals theta_above - theta_below of the two bordering
plaquettes, and on a t-link theta_left - theta_right; equivalently the dual
link crosses the direct link from its left to its right.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np

DIR_X = 0
DIR_T = 1

# head-movement directions used by the worm tables: +x, +t, -x, -t
N_DIRECTIONS = 4


@dataclass(frozen=True)
class LinkRef:
    """A directed link named by its base site and axis."""

    site: int
    direction: int  # DIR_X or DIR_T

    @property
    def index(self) -> int:
        return 2 * self.site + self.direction

    @staticmethod
    def from_index(index: int) -> "LinkRef":
        return LinkRef(site=index // 2, direction=index % 2)


@dataclass(frozen=True)
class HomologyFrame:
    """Fixed homology structures: cuts measure winding, paths carry twists.

    The temporal cut is the row of t-links crossing the horizontal line
    between rows 0 and 1 (all signs +1); gamma_path is the column of t-links
    at x=0 winding once around the temporal cycle.  The spatial analogues sit
    at column 0 / row 0.  gamma_path shares exactly one link with the
    temporal cut (and likewise for the spatial pair).
    """

    temporal_cut: np.ndarray  # link ids, length L
    gamma_path: np.ndarray  # link ids, length t
    spatial_cut: np.ndarray  # link ids, length t
    spatial_path: np.ndarray  # link ids, length L


class TorusLattice:
    """Geometry and incidence tables for the L x t torus."""

    def __init__(self, width: int, height: int):
        if width < 2 or height < 2:
            raise ValueError(f"lattice dimensions must be >= 2, got {width}x{height}")
        self.width = int(width)
        self.height = int(height)
        self.n_sites = self.width * self.height
        self.n_links = 2 * self.n_sites
        self.n_plaquettes = self.n_sites

    # --- site/link/plaquette arithmetic -------------------------------------------------

    def site_index(self, x: int, y: int) -> int:
        return (y % self.height) * self.width + (x % self.width)

    def site_xy(self, site: int) -> tuple[int, int]:
        return site % self.width, site // self.width

    def link_index(self, x: int, y: int, direction: int) -> int:
        return 2 * self.site_index(x, y) + direction

    plaquette_index = site_index

    def __repr__(self) -> str:
        return f"TorusLattice({self.width}x{self.height})"

    # --- incidence tables ----------------------------------------------------------------

    @cached_property
    def site_links(self) -> np.ndarray:
        """(V, 4) link ids in head-move order +x, +t, -x, -t."""
        out = np.empty((self.n_sites, N_DIRECTIONS), dtype=np.int64)
        for s in range(self.n_sites):
            x, y = self.site_xy(s)
            out[s, 0] = self.link_index(x, y, DIR_X)
            out[s, 1] = self.link_index(x, y, DIR_T)
            out[s, 2] = self.link_index(x - 1, y, DIR_X)
            out[s, 3] = self.link_index(x, y - 1, DIR_T)
        return out

    @cached_property
    def site_neighbors(self) -> np.ndarray:
        """(V, 4) neighboring site across each of the four directions."""
        out = np.empty((self.n_sites, N_DIRECTIONS), dtype=np.int64)
        for s in range(self.n_sites):
            x, y = self.site_xy(s)
            out[s, 0] = self.site_index(x + 1, y)
            out[s, 1] = self.site_index(x, y + 1)
            out[s, 2] = self.site_index(x - 1, y)
            out[s, 3] = self.site_index(x, y - 1)
        return out

    @cached_property
    def direction_signs(self) -> np.ndarray:
        """Orientation sign of each direction's link as seen from the site: +1 outgoing."""
        return np.array([+1, +1, -1, -1], dtype=np.int64)

    @cached_property
    def link_plaquettes(self) -> np.ndarray:
        """(E, 2) ordered plaquette pair (P1, P2) with flow = theta_P1 - theta_P2."""
        out = np.empty((self.n_links, 2), dtype=np.int64)
        for s in range(self.n_sites):
            x, y = self.site_xy(s)
            out[2 * s + DIR_X, 0] = self.plaquette_index(x, y)  # above
            out[2 * s + DIR_X, 1] = self.plaquette_index(x, y - 1)  # below
            out[2 * s + DIR_T, 0] = self.plaquette_index(x - 1, y)  # left
            out[2 * s + DIR_T, 1] = self.plaquette_index(x, y)  # right
        return out

    @cached_property
    def plaquette_links(self) -> np.ndarray:
        """(P, 4) links bordering each plaquette (bottom, top, left, right)."""
        out = np.empty((self.n_plaquettes, N_DIRECTIONS), dtype=np.int64)
        for p in range(self.n_plaquettes):
            x, y = self.site_xy(p)
            out[p, 0] = self.link_index(x, y, DIR_X)
            out[p, 1] = self.link_index(x, y + 1, DIR_X)
            out[p, 2] = self.link_index(x, y, DIR_T)
            out[p, 3] = self.link_index(x + 1, y, DIR_T)
        return out

    @cached_property
    def plaquette_neighbors(self) -> np.ndarray:
        """(P, 4) plaquette across each bordering link, matching plaquette_links order."""
        out = np.empty((self.n_plaquettes, N_DIRECTIONS), dtype=np.int64)
        for p in range(self.n_plaquettes):
            x, y = self.site_xy(p)
            out[p, 0] = self.plaquette_index(x, y - 1)
            out[p, 1] = self.plaquette_index(x, y + 1)
            out[p, 2] = self.plaquette_index(x - 1, y)
            out[p, 3] = self.plaquette_index(x + 1, y)
        return out

    @cached_property
    def plaquette_signs(self) -> np.ndarray:
        """(P, 4) coefficient of theta_p in the flow on each bordering link."""
        return np.tile(np.array([+1, -1, -1, +1], dtype=np.int64), (self.n_plaquettes, 1))

    # --- homology ------------------------------------------------------------------------

    @cached_property
    def frame(self) -> HomologyFrame:
        L, t = self.width, self.height
        return HomologyFrame(
            temporal_cut=np.array([self.link_index(x, 0, DIR_T) for x in range(L)], dtype=np.int64),
            gamma_path=np.array([self.link_index(0, y, DIR_T) for y in range(t)], dtype=np.int64),
            spatial_cut=np.array([self.link_index(0, y, DIR_X) for y in range(t)], dtype=np.int64),
            spatial_path=np.array([self.link_index(x, 0, DIR_X) for x in range(L)], dtype=np.int64),
        )

    @cached_property
    def temporal_cut_mask(self) -> np.ndarray:
        mask = np.zeros(self.n_links, dtype=np.int64)
        mask[self.frame.temporal_cut] = 1
        return mask

    @cached_property
    def spatial_cut_mask(self) -> np.ndarray:
        mask = np.zeros(self.n_links, dtype=np.int64)
        mask[self.frame.spatial_cut] = 1
        return mask


def build_lattice(width: int, height: int) -> TorusLattice:
    """Construct the torus; raises on dimensions below 2."""
    return TorusLattice(width, height)


def incident_links(lattice: TorusLattice, site: int) -> list[tuple[LinkRef, int]]:
    """The four links touching a site, each with its orientation sign.

    Sign +1 marks links whose canonical orientation leaves the site, -1 links
    that enter it; the signed sum of flows over this list is the lattice
    divergence at the site.
    """
    if not (0 <= site < lattice.n_sites):
        raise ValueError(f"site {site} out of range")
    links = lattice.site_links[site]
    signs = lattice.direction_signs
    return [(LinkRef.from_index(int(links[d])), int(signs[d])) for d in range(N_DIRECTIONS)]
