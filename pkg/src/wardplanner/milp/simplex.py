"""Dense bounded-variable simplex.

The engine works on the equality form ``A y = b, lo <= y <= hi`` where every
``lo`` is finite.  Nonbasic columns sit at one of their bounds; the tableau
``T = B^-1 A`` is kept explicitly and updated by rank-one pivots, with a
refactorisation every ``REFACTOR_EVERY`` pivots.

Pricing is Dantzig's rule, switching to Bland's smallest-index rule after a
run of degenerate pivots so that cycling cannot occur.  The dual iteration is
used to re-optimise after bound changes (branch-and-bound warm starts).
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .model import LinearProgram, ModelError, SolverError

OPTIMAL = "optimal"
INFEASIBLE = "infeasible"
UNBOUNDED = "unbounded"

PIVOT_TOL = 1e-9
FEAS_TOL = 1e-7
OPT_TOL = 1e-9
REFACTOR_EVERY = 60
DEGENERATE_RUN = 30


@dataclass
class StandardForm:
    """Equality-form image of a :class:`LinearProgram`.

    Columns ``0..n_struct-1`` are structural (one per original variable, or
    two for a free continuous variable), followed by one slack per inequality
    row and one artificial per row.  Artificials are fixed at zero except
    during phase one.
    """

    A: np.ndarray
    b: np.ndarray
    c: np.ndarray
    lo: np.ndarray
    hi: np.ndarray
    n_struct: int
    col_var: np.ndarray  # original variable of each structural column
    col_sign: np.ndarray  # +1 / -1
    int_cols: np.ndarray
    artificial: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=int))
    infeasible: bool = False

    def to_variables(self, y: np.ndarray, n_vars: int) -> np.ndarray:
        x = np.zeros(n_vars)
        np.add.at(x, self.col_var, self.col_sign * y[: self.n_struct])
        return x

    def var_bounds_to_cols(self, j: int, lb: float, ub: float) -> tuple[int, float, float]:
        """Column index and column bounds for a bound change on variable ``j``."""
        cols = np.flatnonzero(self.col_var == j)
        if len(cols) != 1:
            raise ModelError("cannot rebound a split free variable")
        k = int(cols[0])
        if self.col_sign[k] > 0:
            return k, lb, ub
        return k, -ub, -lb


def tighten_singletons(lp: LinearProgram, lb: np.ndarray, ub: np.ndarray):
    """Fold single-variable rows into bounds.

    Returns ``(lb, ub, kept_rows, infeasible)``.  Integer bounds are rounded
    inward.
    """
    lb = lb.astype(float).copy()
    ub = ub.astype(float).copy()
    kept = []
    infeasible = False
    for i, con in enumerate(lp.constraints):
        if len(con.coeffs) == 0:
            viol = {"<=": 0.0 - con.rhs, ">=": con.rhs, "==": abs(con.rhs)}[con.sense]
            if viol > FEAS_TOL:
                infeasible = True
            continue
        if len(con.coeffs) > 1:
            kept.append(i)
            continue
        (j, a), = con.coeffs
        v = con.rhs / a
        sense = con.sense
        if a < 0 and sense != "==":
            sense = "<=" if sense == ">=" else ">="
        if sense in ("<=", "=="):
            ub[j] = min(ub[j], v)
        if sense in (">=", "=="):
            lb[j] = max(lb[j], v)
    for j, var in enumerate(lp.variables):
        if var.integer:
            if math.isfinite(lb[j]):
                lb[j] = math.ceil(lb[j] - 1e-9)
            if math.isfinite(ub[j]):
                ub[j] = math.floor(ub[j] + 1e-9)
        if lb[j] > ub[j] + FEAS_TOL:
            infeasible = True
        elif lb[j] > ub[j]:
            ub[j] = lb[j]
    return lb, ub, kept, infeasible


def standard_form(lp: LinearProgram, lb=None, ub=None) -> StandardForm:
    lp.validate()
    n = lp.num_variables
    lb0 = np.array([v.lb for v in lp.variables]) if lb is None else np.asarray(lb, float)
    ub0 = np.array([v.ub for v in lp.variables]) if ub is None else np.asarray(ub, float)
    lb1, ub1, rows, infeasible = tighten_singletons(lp, lb0, ub0)
    c_var = lp.cost_vector()

    col_var, col_sign, lo, hi = [], [], [], []
    for j in range(n):
        if math.isfinite(lb1[j]):
            col_var.append(j); col_sign.append(1); lo.append(lb1[j]); hi.append(ub1[j])
        elif math.isfinite(ub1[j]):
            col_var.append(j); col_sign.append(-1); lo.append(-ub1[j]); hi.append(math.inf)
        else:
            if lp.variables[j].integer:
                raise ModelError(f"integer variable {lp.variables[j].name!r} has no finite bound")
            col_var += [j, j]; col_sign += [1, -1]; lo += [0.0, 0.0]; hi += [math.inf, math.inf]
    col_var = np.array(col_var, dtype=int)
    col_sign = np.array(col_sign, dtype=float)
    n_struct = len(col_var)
    pos = {}
    for k, j in enumerate(col_var):
        pos.setdefault(int(j), []).append(k)

    m = len(rows)
    n_slack = sum(lp.constraints[i].sense != "==" for i in rows)
    A = np.zeros((m, n_struct + n_slack))
    b = np.zeros(m)
    s = n_struct
    for r, i in enumerate(rows):
        con = lp.constraints[i]
        for j, a in con.coeffs:
            for k in pos[j]:
                A[r, k] = a * col_sign[k]
        b[r] = con.rhs
        if con.sense == "<=":
            A[r, s] = 1.0; s += 1
        elif con.sense == ">=":
            A[r, s] = -1.0; s += 1
    c = np.zeros(A.shape[1])
    c[:n_struct] = c_var[col_var] * col_sign
    lo = np.concatenate([np.array(lo, float), np.zeros(n_slack)])
    hi = np.concatenate([np.array(hi, float), np.full(n_slack, math.inf)])
    int_cols = np.array([k for k in range(n_struct) if lp.variables[col_var[k]].integer], dtype=int)
    n0 = A.shape[1]
    A = np.hstack([A, np.eye(m)])
    c = np.concatenate([c, np.zeros(m)])
    lo = np.concatenate([lo, np.zeros(m)])
    hi = np.concatenate([hi, np.zeros(m)])
    return StandardForm(A, b, c, lo, hi, n_struct, col_var, col_sign, int_cols,
                        artificial=np.arange(n0, n0 + m), infeasible=infeasible)


class Simplex:
    """Tableau simplex over a fixed column set with mutable bounds."""

    def __init__(self, A, b, c, lo, hi, basic, at_upper, max_iter=None):
        self.A = A
        self.b = b
        self.c = c
        self.lo = np.asarray(lo, float).copy()
        self.hi = np.asarray(hi, float).copy()
        self.m, self.n = A.shape
        self.basic = np.asarray(basic, dtype=int).copy()
        self.at_upper = np.asarray(at_upper, dtype=bool).copy()
        self.iterations = 0
        self.max_iter = max_iter or 50 * (self.m + self.n) + 1000
        self._factor()

    # -- linear algebra -------------------------------------------------
    def _factor(self):
        self.is_basic = np.zeros(self.n, dtype=bool)
        self.is_basic[self.basic] = True
        self.at_upper[self.is_basic] = False
        self.at_upper &= np.isfinite(self.hi)
        if self.m == 0:
            self.T = np.zeros((0, self.n))
            self.beta = np.zeros(0)
            self._since_factor = 0
            return
        B = self.A[:, self.basic]
        try:
            self.T = np.linalg.solve(B, self.A)
            self.beta = np.linalg.solve(B, self.b)
        except np.linalg.LinAlgError as exc:
            raise SolverError("singular basis") from exc
        self._since_factor = 0

    def _pivot(self, r: int, q: int):
        T = self.T
        piv = T[r, q]
        T[r] /= piv
        self.beta[r] /= piv
        col = T[:, q].copy()
        col[r] = 0.0
        T -= np.outer(col, T[r])
        self.beta -= col * self.beta[r]
        leaving = self.basic[r]
        self.is_basic[leaving] = False
        self.is_basic[q] = True
        self.basic[r] = q
        self.at_upper[q] = False
        self.iterations += 1
        self._since_factor += 1
        if self._since_factor >= REFACTOR_EVERY:
            self._factor()
        if self.iterations > self.max_iter:
            raise SolverError("simplex iteration limit reached")
        return leaving

    # -- state ----------------------------------------------------------
    def values(self) -> np.ndarray:
        x = np.where(self.at_upper, self.hi, self.lo)
        x[self.is_basic] = 0.0
        if self.m:
            x[self.basic] = self.beta - self.T @ x
        return x

    def reduced_costs(self) -> np.ndarray:
        if self.m == 0:
            return self.c.copy()
        return self.c - self.c[self.basic] @ self.T

    def objective(self) -> float:
        return float(self.c @ self.values())

    # -- primal ---------------------------------------------------------
    def primal(self) -> str:
        """Primal simplex from a primal-feasible basis."""
        degenerate = 0
        while True:
            x = self.values()
            d = self.reduced_costs()
            movable = ~self.is_basic & (self.hi > self.lo)
            inc = movable & ~self.at_upper & (d < -OPT_TOL)
            dec = movable & self.at_upper & (d > OPT_TOL)
            cand = np.flatnonzero(inc | dec)
            if len(cand) == 0:
                return OPTIMAL
            bland = degenerate >= DEGENERATE_RUN
            q = int(cand[0]) if bland else int(cand[np.argmax(np.abs(d[cand]))])
            direction = 1.0 if inc[q] else -1.0
            col = self.T[:, q] * direction if self.m else np.zeros(0)
            xb = x[self.basic] if self.m else np.zeros(0)
            lob, hib = self.lo[self.basic], self.hi[self.basic]
            ratios = np.full(self.m, math.inf)
            down = col > PIVOT_TOL
            up = col < -PIVOT_TOL
            ratios[down] = np.maximum(xb[down] - lob[down], 0.0) / col[down]
            fin_up = up & np.isfinite(hib)
            ratios[fin_up] = np.maximum(hib[fin_up] - xb[fin_up], 0.0) / -col[fin_up]
            t_row = ratios.min() if self.m else math.inf
            t_flip = self.hi[q] - self.lo[q]
            if not math.isfinite(t_row) and not math.isfinite(t_flip):
                return UNBOUNDED
            step = min(t_row, t_flip)
            degenerate = degenerate + 1 if step <= 1e-12 else 0
            if t_flip <= t_row:
                self.at_upper[q] = not self.at_upper[q]
                continue
            ties = np.flatnonzero(ratios <= t_row + 1e-12)
            if bland:
                r = int(ties[np.argmin(self.basic[ties])])
            else:
                r = int(ties[np.argmax(np.abs(col[ties]))])
            to_upper = col[r] < 0
            leaving = self._pivot(r, q)
            self.at_upper[leaving] = to_upper

    # -- dual -----------------------------------------------------------
    def dual(self) -> str:
        """Dual simplex from a dual-feasible basis; returns OPTIMAL or INFEASIBLE."""
        while True:
            x = self.values()
            if self.m == 0:
                return OPTIMAL
            xb = x[self.basic]
            lob, hib = self.lo[self.basic], self.hi[self.basic]
            below = lob - xb
            above = xb - hib
            viol = np.maximum(below, above)
            r = int(np.argmax(viol))
            if viol[r] <= FEAS_TOL:
                return OPTIMAL
            increase = below[r] > above[r]
            row = self.T[r]
            d = self.reduced_costs()
            free = ~self.is_basic & (self.hi > self.lo)
            at_lo = free & ~self.at_upper
            at_hi = free & self.at_upper
            if increase:
                elig = (at_lo & (row < -PIVOT_TOL)) | (at_hi & (row > PIVOT_TOL))
            else:
                elig = (at_lo & (row > PIVOT_TOL)) | (at_hi & (row < -PIVOT_TOL))
            cand = np.flatnonzero(elig)
            if len(cand) == 0:
                return INFEASIBLE
            ratios = np.abs(d[cand]) / np.abs(row[cand])
            best = ratios.min()
            ties = cand[ratios <= best + 1e-12]
            q = int(ties[np.argmax(np.abs(row[ties]))])
            leaving = self._pivot(r, q)
            self.at_upper[leaving] = not increase


@dataclass
class LPSolution:
    status: str
    objective: float = math.nan
    y: np.ndarray | None = None
    basic: np.ndarray | None = None
    at_upper: np.ndarray | None = None
    iterations: int = 0


def solve_standard(sf: StandardForm, lo=None, hi=None) -> LPSolution:
    """Two-phase solve from a slack/artificial crash basis.

    Rows whose starting residual is negative are negated in place; this leaves
    the feasible set and any stored basis valid.
    """
    lo = sf.lo.copy() if lo is None else np.asarray(lo, float).copy()
    hi = sf.hi.copy() if hi is None else np.asarray(hi, float).copy()
    if sf.infeasible or np.any(lo > hi + FEAS_TOL):
        return LPSolution(INFEASIBLE)
    A, b = sf.A, sf.b
    m, n = A.shape
    arts = sf.artificial
    x0 = lo.copy()
    x0[arts] = 0.0
    resid = b - A @ x0
    neg = resid < 0
    A[neg] *= -1.0
    b[neg] *= -1.0
    resid[neg] *= -1.0
    A[np.flatnonzero(neg), arts[neg]] = 1.0

    basic = arts.copy()
    slack_lo = sf.n_struct
    for k in range(slack_lo, arts[0] if m else n):
        r = int(np.flatnonzero(A[:, k])[0])
        if basic[r] == arts[r] and A[r, k] > 0 and lo[k] == 0.0:
            basic[r] = k
    used = basic == arts
    at_upper = np.zeros(n, dtype=bool)
    total_iter = 0
    if used.any():
        hi1 = hi.copy()
        hi1[arts[used]] = math.inf
        c1 = np.zeros(n)
        c1[arts[used]] = 1.0
        spx = Simplex(A, b, c1, lo, hi1, basic, at_upper)
        status = spx.primal()
        total_iter += spx.iterations
        if status != OPTIMAL or spx.objective() > FEAS_TOL * max(1.0, np.abs(b).max()):
            return LPSolution(INFEASIBLE, iterations=total_iter)
        basic, at_upper = spx.basic, spx.at_upper
    spx = Simplex(A, b, sf.c, lo, hi, basic, at_upper)
    status = spx.primal()
    total_iter += spx.iterations
    if status != OPTIMAL:
        return LPSolution(status, iterations=total_iter)
    y = spx.values()
    return LPSolution(OPTIMAL, float(sf.c @ y), y, spx.basic.copy(), spx.at_upper.copy(),
                      total_iter)


def warm_solve(sf: StandardForm, lo, hi, basic, at_upper) -> LPSolution:
    """Re-optimise after bound changes starting from an optimal basis."""
    hi = np.asarray(hi, float)
    at_upper = np.asarray(at_upper, bool) & np.isfinite(hi)
    spx = Simplex(sf.A, sf.b, sf.c, lo, hi, basic, at_upper)
    status = spx.dual()
    if status == INFEASIBLE:
        return LPSolution(INFEASIBLE, iterations=spx.iterations)
    status = spx.primal()
    if status != OPTIMAL:
        return LPSolution(status, iterations=spx.iterations)
    y = spx.values()
    return LPSolution(OPTIMAL, float(sf.c @ y), y, spx.basic.copy(), spx.at_upper.copy(),
                      spx.iterations)
