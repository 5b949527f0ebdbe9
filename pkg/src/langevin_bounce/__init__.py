"""Reflected Langevin process with sub-critical elasticity: bounce skeleton,
ladder heights, path integration and tail statistics."""

__version__ = "0.1.0"

from ._validation import DomainError, QuadratureError, SimulationGuardError
from .analytic import C_CR, ModelParams, c_of_k, k_of_c
from .path import PathConfig, integrate_sor, resurrect, simulate_excursions
from .skeleton import ChainConfig, simulate_chain, simulate_chain_batch, simulate_tilted_chain

__all__ = [
    "__version__", "DomainError", "QuadratureError", "SimulationGuardError",
    "C_CR", "ModelParams", "c_of_k", "k_of_c",
    "PathConfig", "integrate_sor", "resurrect", "simulate_excursions",
    "ChainConfig", "simulate_chain", "simulate_chain_batch", "simulate_tilted_chain",
]
