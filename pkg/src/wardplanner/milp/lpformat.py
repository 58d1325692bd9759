"""CPLEX LP text format: writer for cross-checking with external solvers,
plus a small reader covering what the writer emits."""
from __future__ import annotations

import io
import math
import re
from dataclasses import replace
from typing import TextIO

from .model import LinearProgram, ModelError

_BAD = re.compile(r"[^A-Za-z0-9_!\"#$%&()/,.;?@`'{}|~]")


def lp_names(lp: LinearProgram) -> list[str]:
    """LP-format-safe, unique variable names."""
    out, seen = [], set()
    for j, v in enumerate(lp.variables):
        name = _BAD.sub("_", v.name)
        if not name or name[0].isdigit() or name[0] in ".eE":
            name = "v_" + name
        if name in seen:
            name = f"{name}_{j}"
        seen.add(name)
        out.append(name)
    return out


def _fmt(a: float) -> str:
    return repr(float(a)) if a != int(a) else str(int(a))


def _terms(pairs, names) -> str:
    if not pairs:
        return "0 " + names[0] if names else "0"
    parts = []
    for j, a in pairs:
        sign = "-" if a < 0 else "+"
        parts.append(f"{sign} {_fmt(abs(a))} {names[j]}")
    text = " ".join(parts)
    return text[2:] if text.startswith("+ ") else text


def write_lp(lp: LinearProgram, out: TextIO | None = None) -> str:
    names = lp_names(lp)
    lines = [f"\\ {lp.name}", "Minimize"]
    obj = sorted(lp.objective.items())
    text = _terms(obj, names) if obj else f"0 {names[0]}" if names else "0"
    if lp.objective_constant:
        text += f" + {_fmt(lp.objective_constant)}" if lp.objective_constant > 0 \
            else f" - {_fmt(-lp.objective_constant)}"
    lines.append(f" obj: {text}")
    lines.append("Subject To")
    for i, con in enumerate(lp.constraints):
        cname = _BAD.sub("_", con.name) or f"c{i}"
        op = {"<=": "<=", ">=": ">=", "==": "="}[con.sense]
        lines.append(f" {cname}: {_terms(con.coeffs, names)} {op} {_fmt(con.rhs)}")
    lines.append("Bounds")
    for name, v in zip(names, lp.variables):
        if v.lb == v.ub:
            lines.append(f" {name} = {_fmt(v.lb)}")
        elif v.lb == -math.inf and v.ub == math.inf:
            lines.append(f" {name} free")
        else:
            lo = "-inf" if v.lb == -math.inf else _fmt(v.lb)
            hi = "+inf" if v.ub == math.inf else _fmt(v.ub)
            lines.append(f" {lo} <= {name} <= {hi}")
    ints = [n for n, v in zip(names, lp.variables) if v.integer]
    if ints:
        lines.append("Generals")
        for k in range(0, len(ints), 8):
            lines.append(" " + " ".join(ints[k:k + 8]))
    lines.append("End")
    text = "\n".join(lines) + "\n"
    if out is not None:
        out.write(text)
    return text


def _parse_expr(text: str):
    """Whitespace-separated ``[sign] [coef] name`` terms, as the writer emits them."""
    terms, const = [], 0.0
    sign, coef = 1.0, None
    for tok in text.split():
        if tok in ("+", "-"):
            sign = sign if tok == "+" else -sign
            continue
        try:
            coef = float(tok)
            continue
        except ValueError:
            pass
        terms.append((tok, sign * (1.0 if coef is None else coef)))
        sign, coef = 1.0, None
    if coef is not None:
        const += sign * coef
    return terms, const


def read_lp(source: TextIO | str) -> LinearProgram:
    """Parse the subset of CPLEX LP produced by :func:`write_lp`."""
    text = source if isinstance(source, str) else source.read()
    lines = [ln.strip() for ln in io.StringIO(text) if ln.strip()]
    name = "model"
    if lines and lines[0].startswith("\\"):
        name = lines[0][1:].strip() or name
    section = None
    obj_text, rows, bounds, generals = "", [], [], []
    for ln in lines:
        low = ln.lower()
        if ln.startswith("\\"):
            continue
        if low in ("minimize", "subject to", "bounds", "generals", "end"):
            section = low
            continue
        if section == "minimize":
            obj_text += " " + ln.split(":", 1)[-1]
        elif section == "subject to":
            rows.append(ln)
        elif section == "bounds":
            bounds.append(ln)
        elif section == "generals":
            generals.extend(ln.split())
        elif section is None:
            raise ModelError(f"unexpected line {ln!r}")
    lp = LinearProgram(name)
    order: list[str] = []

    def var(n):
        if n not in lp._index:
            lp.add_variable(n)
            order.append(n)
        return lp.index(n)

    terms, const = _parse_expr(obj_text)
    lp.objective_constant = const
    for n, a in terms:
        lp.set_cost(var(n), lp.objective.get(var(n), 0.0) + a)
    for ln in rows:
        cname, body = ln.split(":", 1) if ":" in ln else ("", ln)
        m = re.match(r"(.*?)(<=|>=|=)\s*(\S+)$", body.strip())
        if not m:
            raise ModelError(f"bad constraint line {ln!r}")
        terms, _ = _parse_expr(m.group(1))
        lp.add_constraint([(var(n), a) for n, a in terms], m.group(2), float(m.group(3)),
                          cname.strip())
    for ln in bounds:
        parts = ln.split()
        if len(parts) == 2 and parts[1].lower() == "free":
            j = var(parts[0]); lp.with_bounds(j, -math.inf, math.inf)
        elif len(parts) == 3 and parts[1] == "=":
            j = var(parts[0]); lp.with_bounds(j, float(parts[2]), float(parts[2]))
        elif len(parts) == 5:
            j = var(parts[2]); lp.with_bounds(j, float(parts[0]), float(parts[4]))
        else:
            raise ModelError(f"bad bounds line {ln!r}")
    for n in generals:
        j = var(n)
        lp.variables[j] = replace(lp.variables[j], integer=True)
    return lp
