"""Hidden-time transaction simulator.

Photons are modelled as search/query/confirm exchanges on a lattice, run on
a discrete hidden clock.  The package covers the protocol engine, the
quanta-counting clock, EPR/Furry/CHSH scenarios, a local hidden-variable
baseline and a double-slit path sum.
"""
from .lattice import Lattice, LatticeError, build_chain, build_double_slit, build_epr_chain, build_grid
from .engine import Engine
from .experiments import (
    run_chsh,
    run_double_slit,
    run_epr,
    run_furry,
    run_lhv_baseline,
    joint_probabilities,
    symmetrized_amplitude,
)
from .chronometry import run_clock, flight_time_vs_distance

__version__ = "0.1.0"
