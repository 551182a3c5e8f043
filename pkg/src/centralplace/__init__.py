"""Central place hierarchies from a multi-industry economic geography model."""

__version__ = "0.1.0"

from .economy import ModelParams, indirect_utility, market_shares
from .geometry import RingGeography, freeness, freeness_matrix, ring_distance
from .solver import SolverConfig, check_equilibrium, project_feasible, solve_equilibrium

__all__ = [
    "ModelParams",
    "RingGeography",
    "SolverConfig",
    "check_equilibrium",
    "freeness",
    "freeness_matrix",
    "indirect_utility",
    "market_shares",
    "project_feasible",
    "ring_distance",
    "solve_equilibrium",
]
