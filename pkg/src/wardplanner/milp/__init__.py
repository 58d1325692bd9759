"""Small exact MILP toolkit: model container, simplex, branch-and-bound, LP files."""
from .blocks import components, sub_model
from .branch_bound import BACKENDS, SolveResult, objective_granularity, solve_lp, solve_milp
from .lpformat import read_lp, write_lp
from .model import (Constraint, LinearProgram, ModelError, NodeLimitReached, SolverError,
                    Variable, fix_variables)
from .simplex import INFEASIBLE, OPTIMAL, UNBOUNDED

__all__ = [
    "BACKENDS", "Constraint", "LinearProgram", "ModelError", "NodeLimitReached",
    "SolverError", "SolveResult", "Variable", "components", "fix_variables",
    "objective_granularity", "sub_model", "read_lp", "solve_lp", "solve_milp", "write_lp",
    "OPTIMAL", "INFEASIBLE", "UNBOUNDED",
]
