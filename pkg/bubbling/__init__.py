"""
Bubbling Package

This package contains the components of the collapsing-vortex bubbling
laboratory on the flat unit torus:
- Periodic grids and the spectral Poisson solver
- The Green's function and its regular part
- Entire Liouville solutions and their kernels
- The base state w and its non-degeneracy margin
- The approximate solution U_{t,q}
- The projected linear theory, contraction and q-adjustment
- Blow-up diagnostics and rate sweeps
"""

__version__ = "1.0.0"
__author__ = "Bubbling Lab Team"

# Import main entry points for easy access
from .config import ProblemConfig, load_config
from .errors import BubblingError
from .torus_spectral import make_grid, solve_poisson_meanzero
from .greens import CollapsePair, GreenEvaluator
from .base_state import WeightSpec, solve_base
from .bubble_ansatz import CollapseProblem, assemble_ansatz, derive_params
from .reduction import adjust_q, build_frame, contraction_solve, solve_reduced
from .diagnostics import build_problem, run_sweep, solve_point

__all__ = [
    "ProblemConfig",
    "load_config",
    "BubblingError",
    "make_grid",
    "solve_poisson_meanzero",
    "CollapsePair",
    "GreenEvaluator",
    "WeightSpec",
    "solve_base",
    "CollapseProblem",
    "assemble_ansatz",
    "derive_params",
    "adjust_q",
    "build_frame",
    "contraction_solve",
    "solve_reduced",
    "build_problem",
    "run_sweep",
    "solve_point",
]
