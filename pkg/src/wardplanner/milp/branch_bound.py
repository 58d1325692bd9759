"""LP and MILP entry points: simplex relaxation + best-first branch-and-bound."""
from __future__ import annotations

import heapq
import logging
import math
import time
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from .blocks import components, sub_model
from .highs import solve_highs
from .model import LinearProgram, NodeLimitReached, SolverError
from .simplex import (INFEASIBLE, OPTIMAL, UNBOUNDED, LPSolution, StandardForm,
                      solve_standard, standard_form, warm_solve)

log = logging.getLogger(__name__)

FEASIBILITY_TOL = 1e-6
INTEGRALITY_TOL = 1e-6


@dataclass
class SolveResult:
    status: str
    objective: float = math.nan
    values: dict[str, float] = field(default_factory=dict)
    x: np.ndarray | None = None
    nodes: int = 0
    iterations: int = 0
    wall_time: float = 0.0
    backend: str = "bnb"
    blocks: int = 1
    log: list[str] = field(default_factory=list)

    @property
    def optimal(self) -> bool:
        return self.status == OPTIMAL

    def __getitem__(self, name: str) -> float:
        return self.values[name]


def _finish(lp: LinearProgram, status: str, x, nodes, iters, t0, integral: bool) -> SolveResult:
    if status != OPTIMAL:
        return SolveResult(status, nodes=nodes, iterations=iters, wall_time=time.perf_counter() - t0)
    x = np.array(x, dtype=float)
    if integral:
        for j, v in enumerate(lp.variables):
            if v.integer:
                x[j] = float(round(x[j]))
    viol = lp.max_violation(x, check_integrality=integral)
    if viol > FEASIBILITY_TOL:
        raise SolverError(f"solution fails verification (max violation {viol:.3g})")
    obj = float(lp.evaluate(x))
    values = {v.name: float(x[j]) for j, v in enumerate(lp.variables)}
    return SolveResult(OPTIMAL, obj, values, x, nodes, iters, time.perf_counter() - t0)


def solve_lp(lp: LinearProgram) -> SolveResult:
    """Solve the continuous relaxation of ``lp`` (integrality ignored)."""
    t0 = time.perf_counter()
    sf = standard_form(lp)
    sol = solve_standard(sf)
    x = sf.to_variables(sol.y, lp.num_variables) if sol.status == OPTIMAL else None
    return _finish(lp, sol.status, x, 0, sol.iterations, t0, integral=False)


def objective_granularity(lp: LinearProgram):
    """``(step, offset)`` such that every integer-feasible objective lies in
    ``offset + step * Z``; ``None`` when no such lattice is detectable."""
    g = None
    offset = lp.objective_constant
    for j, a in lp.objective.items():
        var = lp.variables[j]
        if not var.integer:
            if var.lb == var.ub:
                offset += a * var.lb
                continue
            return None
        f = Fraction(a).limit_denominator(10**6)
        if abs(float(f) - a) > 1e-12 * max(1.0, abs(a)):
            return None
        f = abs(f)
        if g is None:
            g = f
        else:
            num = math.gcd(g.numerator * f.denominator, f.numerator * g.denominator)
            g = Fraction(num, g.denominator * f.denominator)
    if g is None or g == 0:
        return None
    return float(g), offset


@dataclass(order=True)
class _Node:
    bound: float
    seq: int
    changes: tuple = field(compare=False)  # ((col, lo, hi), ...) from the root
    basic: np.ndarray = field(compare=False, default=None)
    at_upper: np.ndarray = field(compare=False, default=None)
    y: np.ndarray = field(compare=False, default=None)


class BranchAndBound:
    """Exact best-first branch-and-bound.

    Branching is on the most fractional integer column (ties: lowest index);
    open nodes are ordered by LP bound with FIFO tie-breaking.  Child LPs are
    re-optimised by the dual simplex from the parent basis.
    """

    def __init__(self, lp: LinearProgram, node_limit: int = 2_000_000):
        self.lp = lp
        self.node_limit = node_limit
        self.sf: StandardForm = standard_form(lp)
        self.grain = objective_granularity(lp)
        lb = np.array([v.lb for v in lp.variables])
        ub = np.array([v.ub for v in lp.variables])
        self._lb, self._ub = lb, ub
        self.incumbent = math.inf
        self.best_y = None
        self.nodes = 0
        self.iterations = 0
        self._seq = 0
        self.log: list[str] = []

    # -- helpers --------------------------------------------------------
    def _bounds(self, changes):
        lo = self.sf.lo.copy()
        hi = self.sf.hi.copy()
        for k, a, b in changes:
            lo[k] = a
            hi[k] = b
        return lo, hi

    def _prunable(self, bound: float) -> bool:
        if not math.isfinite(self.incumbent):
            return False
        tol = 1e-9 * max(1.0, abs(self.incumbent))
        if self.grain is not None:
            step, offset = self.grain
            attainable = offset + step * math.ceil((bound - offset) / step - 1e-7)
            return attainable >= self.incumbent - tol
        return bound >= self.incumbent - tol

    def _fractional(self, y):
        ic = self.sf.int_cols
        if len(ic) == 0:
            return None
        frac = y[ic] - np.floor(y[ic])
        dist = np.minimum(frac, 1.0 - frac)
        if dist.max() <= INTEGRALITY_TOL:
            return None
        # most fractional; argmax returns the lowest index among ties
        score = np.where(dist > INTEGRALITY_TOL, -np.abs(frac - 0.5), -np.inf)
        return int(ic[np.argmax(score)])

    def _try_incumbent(self, y):
        """Rounding heuristic: nearest, then up, then down on integer columns."""
        ic = self.sf.int_cols
        n = self.lp.num_variables
        for rounder in (np.round, np.ceil, np.floor):
            cand = y.copy()
            cand[ic] = rounder(cand[ic] - (1e-9 if rounder is np.ceil else 0.0))
            x = self.sf.to_variables(cand, n)
            if np.any(x < self._lb - FEASIBILITY_TOL) or np.any(x > self._ub + FEASIBILITY_TOL):
                continue
            if self.lp.max_violation(x) > FEASIBILITY_TOL:
                continue
            obj = float(self.lp.evaluate(x))
            if obj < self.incumbent - 1e-9 * max(1.0, abs(obj)):
                self.incumbent = obj
                self.best_y = cand
                self._note(f"node={self.nodes} incumbent={obj:.6f} source=rounding")
                return

    def _accept(self, y, obj):
        if obj < self.incumbent - 1e-9 * max(1.0, abs(obj)):
            y = y.copy()
            ic = self.sf.int_cols
            y[ic] = np.round(y[ic])
            self.incumbent = obj
            self.best_y = y
            self._note(f"node={self.nodes} incumbent={obj:.6f} source=lp")

    def _solve_node(self, changes, parent: _Node | None) -> LPSolution:
        lo, hi = self._bounds(changes)
        if np.any(lo > hi + 1e-9):
            return LPSolution(INFEASIBLE)
        self.nodes += 1
        if parent is not None and parent.basic is not None:
            try:
                sol = warm_solve(self.sf, lo, hi, parent.basic, parent.at_upper)
            except SolverError:
                sol = solve_standard(self.sf, lo, hi)
        else:
            sol = solve_standard(self.sf, lo, hi)
        self.iterations += sol.iterations
        return sol

    def _note(self, line: str):
        self.log.append(line)
        log.debug(line)

    # -- main loop ------------------------------------------------------
    def run(self) -> str:
        root = self._solve_node((), None)
        if root.status != OPTIMAL:
            return root.status
        heap: list[_Node] = []
        self._push(heap, (), root)
        while heap:
            node = heapq.heappop(heap)
            if self._prunable(node.bound):
                continue
            k = self._fractional(node.y)
            if k is None:
                self._accept(node.y, node.bound)
                continue
            if self.nodes >= self.node_limit:
                raise NodeLimitReached(f"branch-and-bound node limit reached ({self.node_limit})")
            v = node.y[k]
            lo, hi = self._bounds(node.changes)
            down = node.changes + ((k, lo[k], math.floor(v)),)
            up = node.changes + ((k, math.ceil(v), hi[k]),)
            for changes in (down, up):
                sol = self._solve_node(changes, node)
                if sol.status == OPTIMAL:
                    self._push(heap, changes, sol)
            if self.nodes % 500 == 0:
                self._note(f"node={self.nodes} open={len(heap)} bound={node.bound:.6f} "
                           f"incumbent={self.incumbent:.6f}")
        self._note(f"done nodes={self.nodes} incumbent={self.incumbent:.6f}")
        return OPTIMAL if self.best_y is not None else INFEASIBLE

    def _push(self, heap, changes, sol: LPSolution):
        obj = sol.objective + self.lp.objective_constant
        if self._prunable(obj):
            return
        if self._fractional(sol.y) is None:
            self._accept(sol.y, obj)
            return
        self._try_incumbent(sol.y)
        if self._prunable(obj):
            return
        self._seq += 1
        heapq.heappush(heap, _Node(obj, self._seq, changes, sol.basic, sol.at_upper, sol.y))


BACKENDS = ("bnb", "highs", "auto")
AUTO_NODE_BUDGET = 500


def _solve_block(lp: LinearProgram, backend: str, node_limit: int, time_limit):
    """``(status, x, nodes, iterations, log lines, backend used)`` for one block."""
    if backend == "auto":
        try:
            return _solve_block(lp, "bnb", min(node_limit, AUTO_NODE_BUDGET), time_limit)
        except NodeLimitReached:
            out = _solve_block(lp, "highs", node_limit, time_limit)
            return out[:4] + ([f"bnb budget {AUTO_NODE_BUDGET} exhausted"] + out[4],) + out[5:]
    if backend == "highs":
        status, x, nodes = solve_highs(lp, time_limit=time_limit)
        return status, x, nodes, 0, [f"highs nodes={nodes} status={status}"], "highs"
    if not any(v.integer for v in lp.variables):
        sf = standard_form(lp)
        sol = solve_standard(sf)
        x = sf.to_variables(sol.y, lp.num_variables) if sol.status == OPTIMAL else None
        return (sol.status, x, 0, sol.iterations,
                [f"lp iterations={sol.iterations} status={sol.status}"], "bnb")
    bb = BranchAndBound(lp, node_limit=node_limit)
    status = bb.run()
    x = bb.sf.to_variables(bb.best_y, lp.num_variables) if status == OPTIMAL else None
    return status, x, bb.nodes, bb.iterations, bb.log, "bnb"


def solve_milp(lp: LinearProgram, node_limit: int = 2_000_000, backend: str = "bnb",
               decompose: bool = True, time_limit: float | None = None) -> SolveResult:
    """Proven-optimal solution of ``lp`` honouring integrality.

    ``backend`` is ``"bnb"`` (built-in simplex + branch-and-bound),
    ``"highs"`` (scipy's HiGHS) or ``"auto"`` (branch-and-bound with a node
    budget per block, HiGHS for blocks that exhaust it).  With ``decompose`` the model is first split
    into independent blocks which are solved one by one.
    """
    if backend not in BACKENDS:
        raise ValueError(f"backend must be one of {BACKENDS}")
    t0 = time.perf_counter()
    lp.validate()
    parts = components(lp) if decompose else [(list(range(lp.num_variables)),
                                                list(range(lp.num_constraints)))]
    x = np.zeros(lp.num_variables)
    nodes = iters = 0
    lines: list[str] = []
    status = OPTIMAL
    used = []
    for b, (cols, rows) in enumerate(parts):
        sub = lp if len(parts) == 1 else sub_model(lp, cols, rows, f"{lp.name}.{b}")
        st, xb, nd, it, log_b, how = _solve_block(sub, backend, max(1, node_limit - nodes),
                                                  time_limit)
        used.append(how)
        nodes += nd
        iters += it
        lines += [f"block {b} vars={len(cols)} rows={len(rows)} {how}: {ln}" for ln in log_b]
        if st == INFEASIBLE:
            status = INFEASIBLE
            break
        if st == UNBOUNDED:
            status = UNBOUNDED
            continue
        x[cols] = xb
    res = _finish(lp, status, x if status == OPTIMAL else None, nodes, iters, t0,
                  integral=True)
    res.backend = used[0] if len(set(used)) == 1 else "mixed"
    res.blocks = len(parts)
    res.log = lines
    return res
