"""EV, RP, EEV and VSS for one instance and one scenario set.

EV solves the deterministic model on the probability-weighted mean demand,
RP the two-stage model, and EEV the two-stage model with the EV first-stage
plan pinned.  VSS = EEV - RP.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

from .capacity import (COMBINED_MAX, FIRST_STAGE, CapacityInstance, CapacityModel, PlanSolution,
                       build_deterministic, build_stochastic, extract_solution, heatmap,
                       staff_heatmap)
from .demand import DemandMatrix, mean_matrix
from .milp import OPTIMAL, fix_variables, solve_milp

RP_TOL = 1e-6


@dataclass
class Outcome:
    name: str
    status: str
    value: float
    plan: PlanSolution | None = None
    nodes: int = 0
    backend: str = ""

    @property
    def optimal(self) -> bool:
        return self.status == OPTIMAL

    def to_dict(self) -> dict:
        d = {"name": self.name, "status": self.status, "value": _num(self.value),
             "nodes": self.nodes, "backend": self.backend}
        if self.plan is not None:
            d["plan"] = self.plan.to_dict()
            d["heatmap_first_stage"] = heatmap(self.plan, FIRST_STAGE).tolist()
            d["heatmap_combined_max"] = heatmap(self.plan, COMBINED_MAX).tolist()
            d["staff_first_stage"] = staff_heatmap(self.plan, FIRST_STAGE).sum(axis=2).tolist()
            d["staff_combined_max"] = staff_heatmap(self.plan, COMBINED_MAX).sum(axis=2).tolist()
        return d


def _num(v):
    if v is None:
        return None
    if isinstance(v, float) and math.isinf(v):
        return "inf" if v > 0 else "-inf"
    if isinstance(v, float) and math.isnan(v):
        return None
    return float(v)


def _solve(name: str, model: CapacityModel, lp, backend: str) -> Outcome:
    res = solve_milp(lp, backend=backend)
    if res.status != OPTIMAL:
        value = math.inf if res.status == "infeasible" else -math.inf
        return Outcome(name, res.status, value, None, res.nodes, res.backend)
    plan = extract_solution(res, model)
    return Outcome(name, OPTIMAL, res.objective, plan, res.nodes, res.backend)


def solve_ev(instance: CapacityInstance, demand: DemandMatrix, backend: str = "auto") -> Outcome:
    """Deterministic model on the probability-weighted mean demand."""
    model = build_deterministic(instance, mean_matrix(demand))
    return _solve("EV", model, model.lp, backend)


def solve_rp(instance: CapacityInstance, demand: DemandMatrix, backend: str = "auto") -> Outcome:
    model = build_stochastic(instance, demand)
    return _solve("RP", model, model.lp, backend)


def first_stage_assignment(model: CapacityModel, plan: PlanSolution) -> dict[int, float]:
    fixed = {}
    for idx, val in ((model.x_bed, plan.x_bed), (model.x_staff, plan.x_staff)):
        for j, v in zip(idx.ravel(), val.ravel()):
            fixed[int(j)] = float(v)
    return fixed


def solve_eev(instance: CapacityInstance, demand: DemandMatrix, ev_plan: PlanSolution | None,
              backend: str = "auto") -> Outcome:
    """Two-stage model with every first-stage variable pinned to ``ev_plan``.

    An infeasible pinned model is a finding: the value is +inf.
    """
    if ev_plan is None:
        return Outcome("EEV", "no-ev-plan", math.inf)
    model = build_stochastic(instance, demand)
    try:
        lp = fix_variables(model.lp, first_stage_assignment(model, ev_plan))
    except ValueError:
        # the EV plan breaks a first-stage bound of the two-stage model
        return Outcome("EEV", "infeasible", math.inf)
    out = _solve("EEV", model, lp, backend)
    return out


def vss(eev: float, rp: float):
    """``(eev - rp, (eev - rp) / eev)``; the fraction is ``None`` when undefined."""
    if math.isnan(eev) or math.isnan(rp):
        raise ValueError("vss needs numeric EEV and RP")
    if math.isinf(eev):
        return (math.inf if not math.isinf(rp) else math.nan), None
    diff = eev - rp
    frac = diff / eev if eev != 0 else None
    return diff, frac


@dataclass
class EvaluationReport:
    ev: Outcome
    rp: Outcome
    eev: Outcome
    vss: float
    vss_fraction_eev: float | None
    vss_fraction_rp: float | None
    reference: dict = field(default_factory=dict)
    notes: list[str] = field(default_factory=list)
    meta: dict = field(default_factory=dict)

    def check(self) -> list[str]:
        """Invariant violations (empty when all hold)."""
        bad = []
        if self.rp.optimal and self.eev.optimal:
            if self.rp.value > self.eev.value + RP_TOL * max(1.0, abs(self.eev.value)):
                bad.append(f"RP {self.rp.value} exceeds EEV {self.eev.value}")
            if abs(self.vss - (self.eev.value - self.rp.value)) > 1e-9 * max(1.0, abs(self.vss)):
                bad.append("VSS != EEV - RP")
            if self.vss < -RP_TOL * max(1.0, abs(self.eev.value)):
                bad.append(f"negative VSS {self.vss}")
        for o in (self.ev, self.rp, self.eev):
            if o.plan is not None:
                p = o.plan
                if abs(p.objective - p.stage1_cost - p.expected_stage2_cost) > 1e-6 * max(1.0, abs(p.objective)):
                    bad.append(f"{o.name}: objective != stage costs")
        return bad

    def to_dict(self) -> dict:
        return {"meta": self.meta, "ev": self.ev.to_dict(), "rp": self.rp.to_dict(),
                "eev": self.eev.to_dict(), "vss": _num(self.vss),
                "vss_fraction_of_eev": _num(self.vss_fraction_eev),
                "vss_fraction_of_rp": _num(self.vss_fraction_rp),
                "reference": self.reference, "notes": self.notes,
                "ev_le_rp": bool(self.ev.value <= self.rp.value + RP_TOL * max(1.0, abs(self.rp.value)))
                if self.ev.optimal and self.rp.optimal else None}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    def render_table(self) -> str:
        return render_table(self.to_dict())


def render_table(report: dict) -> str:
    """Plain-text summary of a report dict: one row per model with its
    first-stage beds and staff, plus a recourse row for two-stage models."""
    lines = []
    head = (f"{'Model':<6} {'Status':<11} {'Objective':>12}  "
            "beds (specialty x hospital) | staff (specialty x band)")
    meta = report.get("meta") or {}
    for key in sorted(meta):
        lines.append(f"# {key}: {meta[key]}")
    lines.append(head)
    lines.append("-" * len(head))
    for key in ("ev", "rp", "eev"):
        o = report[key]
        lead = f"{o['name']:<6} {o['status']:<11} {_fmt(_val(o['value'])):>12}"
        if "plan" not in o:
            lines.append(lead)
            continue
        lines.append(f"{lead}  {o['heatmap_first_stage']} | {o['staff_first_stage']}")
        if o["plan"]["scenarios"]:
            lines.append(f"{'':<6} {'+ max recourse':<24}  {o['heatmap_combined_max']} | "
                         f"{o['staff_combined_max']}")
    lines.append("")
    lines.append(f"VSS = EEV - RP = {_fmt(_val(report['vss']))}"
                 f"  ({_pct(report['vss_fraction_of_eev'])} of EEV,"
                 f" {_pct(report['vss_fraction_of_rp'])} of RP)")
    ref = report.get("reference") or {}
    for key in ("ev", "rp", "eev", "vss"):
        if key in ref:
            lines.append(f"reference {key.upper()}: {ref[key]}")
    for note in report.get("notes") or []:
        lines.append(f"note: {note}")
    return "\n".join(lines) + "\n"


def _val(v) -> float:
    return math.nan if v is None else float(v)


def _fmt(v) -> str:
    if v is None or (isinstance(v, float) and math.isnan(v)):
        return "n/a"
    if math.isinf(v):
        return "inf" if v > 0 else "-inf"
    return f"{v:,.2f}"


def _pct(v) -> str:
    return "n/a" if v is None or (isinstance(v, float) and not math.isfinite(v)) else f"{100 * v:.2f}%"


def evaluate(instance: CapacityInstance, demand: DemandMatrix, backend: str = "auto",
             reference: dict | None = None, notes=(), meta: dict | None = None) -> EvaluationReport:
    ev = solve_ev(instance, demand, backend)
    rp = solve_rp(instance, demand, backend)
    eev = solve_eev(instance, demand, ev.plan, backend)
    if rp.optimal and (eev.optimal or math.isinf(eev.value)):
        diff, frac_eev = vss(eev.value, rp.value)
        frac_rp = diff / rp.value if rp.value not in (0.0,) and math.isfinite(diff) else None
    else:
        diff, frac_eev, frac_rp = math.nan, None, None
    report = EvaluationReport(ev, rp, eev, diff, frac_eev, frac_rp, dict(reference or {}),
                              list(notes), dict(meta or {}))
    if ev.optimal and rp.optimal and ev.value > rp.value + RP_TOL * max(1.0, abs(rp.value)):
        report.notes.append(f"EV {ev.value:.6g} exceeds RP {rp.value:.6g} "
                            "(integrality can break the EV <= RP ordering)")
    if math.isinf(eev.value) and eev.status != OPTIMAL:
        report.notes.append("EV first-stage plan cannot be completed in some scenario: EEV = +inf")
    for problem in report.check():
        report.notes.append(f"invariant violated: {problem}")
    return report
