"""Mixed-integer linear program container.

Models are minimisation problems over named variables with simple bounds.
Build one with :meth:`LinearProgram.add_variable` / :meth:`add_constraint`
and treat it as read-only once it has been handed to a solver.
"""
from __future__ import annotations

import copy
import math
from dataclasses import dataclass, replace
from typing import Iterable, Mapping

import numpy as np

SENSES = ("<=", ">=", "==")
_SENSE_ALIASES = {"<=": "<=", "=<": "<=", "<": "<=", ">=": ">=", "=>": ">=", ">": ">=",
                  "==": "==", "=": "=="}


class ModelError(ValueError):
    """Raised for malformed models (bad bounds, NaN coefficients, unknown names)."""


class SolverError(RuntimeError):
    """Internal solver failure: iteration limit, singular basis, failed verification."""


class NodeLimitReached(SolverError):
    """Branch-and-bound stopped before proving optimality."""


@dataclass(frozen=True)
class Variable:
    name: str
    lb: float = 0.0
    ub: float = math.inf
    integer: bool = False


@dataclass(frozen=True)
class Constraint:
    coeffs: tuple[tuple[int, float], ...]
    sense: str
    rhs: float
    name: str = ""

    def activity(self, x) -> float:
        return float(sum(a * x[j] for j, a in self.coeffs))

    def violation(self, x) -> float:
        lhs = self.activity(x)
        if self.sense == "<=":
            return max(0.0, lhs - self.rhs)
        if self.sense == ">=":
            return max(0.0, self.rhs - lhs)
        return abs(lhs - self.rhs)


class LinearProgram:
    """min c'x + c0  s.t.  rows (<=, >=, ==) rhs,  lb <= x <= ub,  some x integer."""

    def __init__(self, name: str = "model"):
        self.name = name
        self.variables: list[Variable] = []
        self.objective: dict[int, float] = {}
        self.objective_constant = 0.0
        self.constraints: list[Constraint] = []
        self._index: dict[str, int] = {}

    # -- building -------------------------------------------------------
    def add_variable(self, name: str, lb: float = 0.0, ub: float = math.inf,
                     integer: bool = False, cost: float = 0.0) -> int:
        if name in self._index:
            raise ModelError(f"duplicate variable name {name!r}")
        lb, ub, cost = float(lb), float(ub), float(cost)
        if math.isnan(lb) or math.isnan(ub) or lb > ub or lb == math.inf or ub == -math.inf:
            raise ModelError(f"bad bounds for {name!r}: [{lb}, {ub}]")
        if not math.isfinite(cost):
            raise ModelError(f"non-finite cost for {name!r}")
        j = len(self.variables)
        self.variables.append(Variable(name, lb, ub, bool(integer)))
        self._index[name] = j
        if cost:
            self.objective[j] = cost
        return j

    def add_constraint(self, coeffs: Mapping[int | str, float] | Iterable[tuple[int | str, float]],
                       sense: str, rhs: float, name: str = "") -> int:
        if sense not in _SENSE_ALIASES:
            raise ModelError(f"unknown constraint sense {sense!r}")
        items = coeffs.items() if isinstance(coeffs, Mapping) else coeffs
        merged: dict[int, float] = {}
        for key, a in items:
            j = self.index(key) if isinstance(key, str) else int(key)
            if not 0 <= j < len(self.variables):
                raise ModelError(f"constraint {name!r} references unknown variable {key!r}")
            a = float(a)
            if not math.isfinite(a):
                raise ModelError(f"non-finite coefficient in constraint {name!r}")
            merged[j] = merged.get(j, 0.0) + a
        rhs = float(rhs)
        if math.isnan(rhs):
            raise ModelError(f"NaN rhs in constraint {name!r}")
        row = tuple(sorted((j, a) for j, a in merged.items() if a != 0.0))
        self.constraints.append(Constraint(row, _SENSE_ALIASES[sense], rhs,
                                           name or f"c{len(self.constraints)}"))
        return len(self.constraints) - 1

    def set_cost(self, var: int | str, cost: float) -> None:
        j = self.index(var) if isinstance(var, str) else var
        cost = float(cost)
        if not math.isfinite(cost):
            raise ModelError("non-finite cost")
        if cost:
            self.objective[j] = cost
        else:
            self.objective.pop(j, None)

    # -- queries --------------------------------------------------------
    def index(self, name: str | int) -> int:
        if isinstance(name, (int, np.integer)):
            return int(name)
        try:
            return self._index[name]
        except KeyError:
            raise ModelError(f"unknown variable {name!r}") from None

    @property
    def num_variables(self) -> int:
        return len(self.variables)

    @property
    def num_constraints(self) -> int:
        return len(self.constraints)

    @property
    def names(self) -> list[str]:
        return [v.name for v in self.variables]

    def cost_vector(self) -> np.ndarray:
        c = np.zeros(len(self.variables))
        for j, a in self.objective.items():
            c[j] = a
        return c

    def evaluate(self, x) -> float:
        return self.objective_constant + sum(a * x[j] for j, a in self.objective.items())

    def max_violation(self, x, check_integrality: bool = True) -> float:
        """Largest bound, row or integrality violation of the point ``x``."""
        worst = 0.0
        for j, v in enumerate(self.variables):
            worst = max(worst, v.lb - x[j], x[j] - v.ub)
            if check_integrality and v.integer:
                worst = max(worst, abs(x[j] - round(x[j])))
        for con in self.constraints:
            worst = max(worst, con.violation(x))
        return worst

    def validate(self) -> None:
        for v in self.variables:
            if math.isnan(v.lb) or math.isnan(v.ub) or v.lb > v.ub:
                raise ModelError(f"bad bounds for {v.name!r}")
        for j, a in self.objective.items():
            if not math.isfinite(a):
                raise ModelError("non-finite objective coefficient")
            if not 0 <= j < len(self.variables):
                raise ModelError("objective references unknown variable")
        for con in self.constraints:
            if math.isnan(con.rhs) or any(not math.isfinite(a) for _, a in con.coeffs):
                raise ModelError(f"bad constraint {con.name!r}")

    def copy(self) -> "LinearProgram":
        return copy.deepcopy(self)

    def with_bounds(self, j: int, lb: float, ub: float) -> None:
        self.variables[j] = replace(self.variables[j], lb=float(lb), ub=float(ub))

    def __repr__(self) -> str:
        n_int = sum(v.integer for v in self.variables)
        return (f"LinearProgram({self.name!r}, vars={self.num_variables} "
                f"(int={n_int}), rows={self.num_constraints})")


def fix_variables(lp: LinearProgram, assignment: Mapping[str | int, float],
                  tol: float = 1e-9) -> LinearProgram:
    """Copy of ``lp`` with each assigned variable pinned (lb = ub = value)."""
    fixed = lp.copy()
    for key, value in assignment.items():
        j = lp.index(key)
        v = lp.variables[j]
        value = float(value)
        if not (v.lb - tol <= value <= v.ub + tol):
            raise ValueError(f"value {value} for {v.name!r} outside bounds [{v.lb}, {v.ub}]")
        value = min(max(value, v.lb), v.ub)
        fixed.with_bounds(j, value, value)
    return fixed
