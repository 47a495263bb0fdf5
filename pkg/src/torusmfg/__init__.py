"""Solvers for first-order stationary mean-field games with congestion
on the 1D/2D torus, built around a convex variational discretisation."""

from .grid import (
    GridFunction,
    GridVectorField,
    TorusGrid,
    central_diff,
    divergence_central,
    gradient_central,
    integrate,
    upwind_grad_power,
)
from .model import (
    CouplingG,
    PotentialFamily,
    ProblemSpec,
    barf,
    barf_recession,
    conjugate_deriv,
    eval_G,
    eval_g,
)
from .optimizer import SolveOptions, SolveResult, minimize
from .oracle import classical_existence_check, solve_critical, solve_P0
from .variational import (
    AprioriDiagnostics,
    DegenerateSolutionError,
    DiscreteObjective,
    FeasiblePoint,
    apriori_diagnostics,
    assemble_Jh,
    estimate_Hbar,
    grad_Jh,
    project_feasible,
)

__version__ = "0.1.0"

__all__ = [
    "TorusGrid", "GridFunction", "GridVectorField",
    "central_diff", "gradient_central", "divergence_central",
    "upwind_grad_power", "integrate",
    "CouplingG", "PotentialFamily", "ProblemSpec",
    "barf", "barf_recession", "conjugate_deriv", "eval_G", "eval_g",
    "DiscreteObjective", "FeasiblePoint", "AprioriDiagnostics",
    "assemble_Jh", "grad_Jh", "project_feasible", "estimate_Hbar",
    "apriori_diagnostics", "DegenerateSolutionError",
    "SolveOptions", "SolveResult", "minimize",
    "solve_P0", "solve_critical", "classical_existence_check",
    "__version__",
]
