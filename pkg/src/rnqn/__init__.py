"""
Partitioned fluid-structure coupling with quasi-Newton accelerated
Robin-Neumann iterations.

Subpackages and modules
-----------------------
densela
    Householder QR and least squares.
accel
    Relaxation, Aitken and interface quasi-Newton updates.
schemes
    Dirichlet-Neumann and Robin-Neumann coupling loops and the time loop.
models
    Affine, balloon and flexible-tube test problems.
metrics
    Artificial flux, analytic balloon radius, iteration statistics.
cli
    JSON-configured runs and sweeps.
"""

from .accel import IQNILS, IQNIMVLS, AitkenRelaxation, ConstantRelaxation, NoUpdate
from .errors import CouplingError, IncompressibilityDilemma, MaxIterationsExceeded
from .models import build_problem
from .schemes import ConvergenceConfig, RunReport, run_simulation

__version__ = "0.1.0"

__all__ = [
    "AitkenRelaxation",
    "ConstantRelaxation",
    "ConvergenceConfig",
    "CouplingError",
    "IQNILS",
    "IQNIMVLS",
    "IncompressibilityDilemma",
    "MaxIterationsExceeded",
    "NoUpdate",
    "RunReport",
    "build_problem",
    "run_simulation",
]
