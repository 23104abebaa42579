"""Worm-algorithm Monte Carlo for Z_N clock models with Born-sampled bond disorder.

The package simulates the current-loop ensemble of a Z_N clock model on an
L x t periodic torus, where the quenched bonds are measurement records drawn
with their Born probabilities.  Winding-sector probabilities estimated by the
worm chain feed the charge-sharpening order parameter, the coherent
information, and the local sharpening correlator; exact enumeration oracles
validate everything at desk scale.
"""

from clockworm.channel import ClockChannel, channel_from_couplings, channel_from_temperature
from clockworm.lattice import TorusLattice, build_lattice
from clockworm.flows import uniform_gauss_sample
from clockworm.born import DisorderRealization, sample_disorder, twist_disorder
from clockworm.worm import ChainSchedule, SectorEstimate, run_chain, sector_probabilities
from clockworm.oracle import SectorTable, enumerate_sector, sector_table

__all__ = [
    "ClockChannel",
    "channel_from_couplings",
    "channel_from_temperature",
    "TorusLattice",
    "build_lattice",
    "uniform_gauss_sample",
    "DisorderRealization",
    "sample_disorder",
    "twist_disorder",
    "ChainSchedule",
    "SectorEstimate",
    "run_chain",
    "sector_probabilities",
    "SectorTable",
    "enumerate_sector",
    "sector_table",
]
