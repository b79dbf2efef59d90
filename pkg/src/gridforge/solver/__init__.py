"""Embedded LP/MILP solvers for :class:`gridforge.ir.ModelIR`."""
from .bnb import InternalConsistencyError, MilpSolution, fix_integers_resolve, relative_gap, solve_milp
from .lp import (LpEngine, LpSolution, SolverOptions, complementary_slackness, dual_objective, dual_sign_violation,
                 solve_lp)

__all__ = [
    "InternalConsistencyError", "LpEngine", "LpSolution", "MilpSolution", "SolverOptions",
    "complementary_slackness", "dual_objective", "dual_sign_violation", "fix_integers_resolve", "relative_gap",
    "solve_lp", "solve_milp",
]
