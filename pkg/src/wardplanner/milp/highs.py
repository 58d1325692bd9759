"""HiGHS backend through ``scipy.optimize.milp``.

Used where the plain branch-and-bound tree gets too large (the staffing
ceilings leave a wide LP gap).  Results come back through the same
verification pass as the built-in solver.
"""
from __future__ import annotations

import numpy as np

from .model import LinearProgram, SolverError
from .simplex import INFEASIBLE, OPTIMAL, UNBOUNDED


def solve_highs(lp: LinearProgram, time_limit: float | None = None):
    """``(status, x or None, node count)`` for ``lp`` solved to zero gap."""
    try:
        from scipy.optimize import Bounds, LinearConstraint, milp
        from scipy.sparse import csr_array
    except ImportError as exc:  # pragma: no cover - scipy is a declared dependency
        raise SolverError("the highs backend needs scipy") from exc
    lp.validate()
    n = lp.num_variables
    rows, cols, vals, lo, hi = [], [], [], [], []
    for i, con in enumerate(lp.constraints):
        for j, a in con.coeffs:
            rows.append(i); cols.append(j); vals.append(a)
        lo.append(-np.inf if con.sense == "<=" else con.rhs)
        hi.append(np.inf if con.sense == ">=" else con.rhs)
    kwargs = {}
    if lp.constraints:
        A = csr_array((vals, (rows, cols)), shape=(len(lp.constraints), n))
        kwargs["constraints"] = LinearConstraint(A, lo, hi)
    options = {"mip_rel_gap": 0.0, "presolve": True}
    if time_limit is not None:
        options["time_limit"] = float(time_limit)
    res = milp(lp.cost_vector(),
               integrality=np.array([1 if v.integer else 0 for v in lp.variables]),
               bounds=Bounds([v.lb for v in lp.variables], [v.ub for v in lp.variables]),
               options=options, **kwargs)
    nodes = int(getattr(res, "mip_node_count", 0) or 0)
    if res.status == 0:
        return OPTIMAL, np.asarray(res.x, dtype=float), nodes
    if res.status == 2:
        return INFEASIBLE, None, nodes
    if res.status == 3:
        return UNBOUNDED, None, nodes
    raise SolverError(f"highs stopped without a proof: {res.message}")
