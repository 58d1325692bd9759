"""Split a model into independent blocks (connected components of the
variable/row incidence graph) so each can be searched on its own.

Branch-and-bound trees multiply across independent blocks when solved as
one model; solved separately their sizes add.  The split is exact.
"""
from __future__ import annotations

from .model import LinearProgram


def components(lp: LinearProgram) -> list[tuple[list[int], list[int]]]:
    """``[(variable indices, row indices), ...]`` ordered by first variable."""
    n = lp.num_variables
    parent = list(range(n))

    def find(a):
        while parent[a] != a:
            parent[a] = parent[parent[a]]
            a = parent[a]
        return a

    for con in lp.constraints:
        if len(con.coeffs) < 2:
            continue
        root = find(con.coeffs[0][0])
        for j, _ in con.coeffs[1:]:
            other = find(j)
            if other != root:
                parent[max(other, root)] = min(other, root)
                root = min(other, root)
    groups: dict[int, list[int]] = {}
    for j in range(n):
        groups.setdefault(find(j), []).append(j)
    rows: dict[int, list[int]] = {r: [] for r in groups}
    loose = []
    for i, con in enumerate(lp.constraints):
        if con.coeffs:
            rows[find(con.coeffs[0][0])].append(i)
        else:
            loose.append(i)
    out = [(groups[r], rows[r]) for r in sorted(groups)]
    if loose and out:
        out[0][1].extend(loose)
        out[0][1].sort()
    return out


def sub_model(lp: LinearProgram, var_idx: list[int], row_idx: list[int],
              name: str | None = None) -> LinearProgram:
    """The block over ``var_idx``/``row_idx`` with variables renumbered in order."""
    sub = LinearProgram(name or lp.name)
    remap = {}
    for j in var_idx:
        v = lp.variables[j]
        remap[j] = sub.add_variable(v.name, v.lb, v.ub, v.integer, lp.objective.get(j, 0.0))
    for i in row_idx:
        con = lp.constraints[i]
        sub.add_constraint([(remap[j], a) for j, a in con.coeffs], con.sense, con.rhs, con.name)
    return sub
