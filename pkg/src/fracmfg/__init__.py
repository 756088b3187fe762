"""Mean field games with jump diffusion and confining drift, in 1D."""

__version__ = "0.1.0"

from .grid import Grid, make_grid
from .levy import LevyKernel, LevyOperator, assemble, lyapunov_certificate
from .model import (Coupling, DriftField, Hamiltonian, ProblemInstance,
                    default_instance, truncate_drift, validate)

__all__ = [
    "Grid", "make_grid", "LevyKernel", "LevyOperator", "assemble",
    "lyapunov_certificate", "Coupling", "DriftField", "Hamiltonian",
    "ProblemInstance", "default_instance", "truncate_drift", "validate",
]
