"""Optimal dividends with a reversible switch between two drift regimes.

Closed-form single-regime benchmarks, a regime classifier and solver for the
coupled switching problem, a Monte Carlo policy simulator and a
finite-difference cross-check.
"""

from .errors import (BranchError, DivswitchError, InvalidPolicy, MonotonicityError,
                     NoBracket, NonConvergence, NoSolution, ParamError)
from .model import ModelParams, char_roots, validate
from .closed_form import vhat0, vhat0_solution, vhat1_solution, w1L, w1L_solution, x1L, xhat0, xhat1
from .solver import Solution, classify, hjb_residual, solve
from .montecarlo import (Estimate, PathState, ThresholdPolicy, estimate_value,
                         optimal_policy_from, simulate_path)
from .pde import GridSpec, compare, make_grid, solve_vi_system

__version__ = "0.1.0"

__all__ = [
    "BranchError", "DivswitchError", "InvalidPolicy", "MonotonicityError", "NoBracket",
    "NonConvergence", "NoSolution", "ParamError", "ModelParams", "char_roots", "validate",
    "vhat0", "vhat0_solution", "vhat1_solution", "w1L", "w1L_solution", "x1L", "xhat0",
    "xhat1", "Solution", "classify", "hjb_residual", "solve", "Estimate", "PathState",
    "ThresholdPolicy", "estimate_value", "optimal_policy_from", "simulate_path", "GridSpec",
    "compare", "make_grid", "solve_vi_system",
]
