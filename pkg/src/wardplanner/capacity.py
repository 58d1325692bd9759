"""Bed and nurse-staffing allocation models.

Two model builders share one variable layout:

* deterministic: first-stage beds ``x_bed[s,h]`` and staff ``x_staff[s,b,h]``
  sized against a single demand vector;
* two-stage stochastic (deterministic equivalent): the same first stage plus
  per-scenario recourse ``u_bed[s,h,k]`` / ``u_staff[s,b,h,k]`` whose cost is
  weighted by the scenario probability.

Bands are ordered junior to senior; the cumulative staffing rule lets senior
staff cover junior ratios.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .demand import DemandMatrix
from .milp import LinearProgram, ModelError, SolveResult

PER_BAND = "per-band"
CUMULATIVE = "cumulative"
STAFFING_RULES = (PER_BAND, CUMULATIVE)


def _arr(value, shape, name, default=None):
    if value is None:
        if default is None:
            raise ModelError(f"missing parameter {name!r}")
        value = default
    a = np.array(value, dtype=float)
    if a.shape != shape:
        raise ModelError(f"{name} has shape {a.shape}, expected {shape}")
    if np.isnan(a).any() or (a < 0).any():
        raise ModelError(f"{name} must be nonnegative")
    return a


@dataclass
class CapacityInstance:
    """Sets and parameters of one planning problem.

    Matrices are indexed in the order of the label lists: costs and capacity
    are specialty x hospital, ``ratio`` is specialty x band.  Bed/staff
    bounds default to non-binding values (``sum_s capacity`` for beds,
    unlimited staff).
    """

    specialties: list[str]
    hospitals: list[str]
    regions: list[str]
    bands: list[str]
    hospital_region: dict[str, str]
    bed_cost_stage1: np.ndarray
    bed_cost_stage2: np.ndarray
    staff_cost_stage1: np.ndarray
    staff_cost_stage2: np.ndarray
    ratio: np.ndarray
    capacity: np.ndarray
    ub_bed_stage1: np.ndarray | None = None
    ub_bed_stage2: np.ndarray | None = None
    ub_staff_stage1: np.ndarray | None = None
    ub_staff_stage2: np.ndarray | None = None
    staffing_rule: str = PER_BAND
    name: str = "instance"

    def __post_init__(self):
        self.specialties = [str(s) for s in self.specialties]
        self.hospitals = [str(h) for h in self.hospitals]
        self.regions = [str(r) for r in self.regions]
        self.bands = [str(b) for b in self.bands]
        S, H, B = len(self.specialties), len(self.hospitals), len(self.bands)
        for labels, what in ((self.specialties, "specialties"), (self.hospitals, "hospitals"),
                             (self.regions, "regions"), (self.bands, "bands")):
            if len(set(labels)) != len(labels) or not labels:
                raise ModelError(f"{what} must be a nonempty list of unique labels")
        for h in self.hospitals:
            r = self.hospital_region.get(h)
            if r not in self.regions:
                raise ModelError(f"hospital {h!r} is not mapped to a known region")
        self.bed_cost_stage1 = _arr(self.bed_cost_stage1, (S, H), "bed_cost_stage1")
        self.bed_cost_stage2 = _arr(self.bed_cost_stage2, (S, H), "bed_cost_stage2")
        self.staff_cost_stage1 = _arr(self.staff_cost_stage1, (B,), "staff_cost_stage1")
        self.staff_cost_stage2 = _arr(self.staff_cost_stage2, (B,), "staff_cost_stage2")
        self.ratio = _arr(self.ratio, (S, B), "ratio")
        self.capacity = _arr(self.capacity, (S, H), "capacity")
        beds = self.capacity.sum(axis=0)
        self.ub_bed_stage1 = _arr(self.ub_bed_stage1, (H,), "ub_bed_stage1", beds)
        self.ub_bed_stage2 = _arr(self.ub_bed_stage2, (H,), "ub_bed_stage2", beds)
        self.ub_staff_stage1 = _arr(self.ub_staff_stage1, (B,), "ub_staff_stage1",
                                    np.full(B, math.inf))
        self.ub_staff_stage2 = _arr(self.ub_staff_stage2, (B,), "ub_staff_stage2",
                                    np.full(B, math.inf))
        if self.staffing_rule not in STAFFING_RULES:
            raise ModelError(f"staffing_rule must be one of {STAFFING_RULES}")

    @property
    def shape(self) -> tuple[int, int, int]:
        return len(self.specialties), len(self.bands), len(self.hospitals)

    def hospitals_in(self, region: str) -> list[int]:
        return [i for i, h in enumerate(self.hospitals) if self.hospital_region[h] == region]

    def with_rule(self, rule: str) -> "CapacityInstance":
        d = self.__dict__.copy()
        d["staffing_rule"] = rule
        return CapacityInstance(**d)

    # -- JSON ------------------------------------------------------------
    def to_dict(self) -> dict:
        def lst(a):
            return [None if not math.isfinite(v) else v for v in np.asarray(a).ravel().tolist()] \
                if np.asarray(a).ndim == 1 else np.asarray(a).tolist()
        return {
            "name": self.name,
            "specialties": self.specialties, "hospitals": self.hospitals,
            "regions": self.regions, "bands": self.bands,
            "hospital_region": self.hospital_region,
            "bed_cost_stage1": self.bed_cost_stage1.tolist(),
            "bed_cost_stage2": self.bed_cost_stage2.tolist(),
            "staff_cost_stage1": self.staff_cost_stage1.tolist(),
            "staff_cost_stage2": self.staff_cost_stage2.tolist(),
            "ratio": self.ratio.tolist(), "capacity": self.capacity.tolist(),
            "ub_bed_stage1": lst(self.ub_bed_stage1), "ub_bed_stage2": lst(self.ub_bed_stage2),
            "ub_staff_stage1": lst(self.ub_staff_stage1),
            "ub_staff_stage2": lst(self.ub_staff_stage2),
            "staffing_rule": self.staffing_rule,
        }

    @classmethod
    def from_dict(cls, d: Mapping) -> "CapacityInstance":
        d = dict(d)
        for key in ("ub_bed_stage1", "ub_bed_stage2", "ub_staff_stage1", "ub_staff_stage2"):
            if d.get(key) is not None:
                d[key] = [math.inf if v is None else v for v in d[key]]
        known = set(cls.__dataclass_fields__)
        extra = set(d) - known
        if extra:
            raise ModelError(f"unknown instance fields: {sorted(extra)}")
        return cls(**d)

    def to_json(self, path=None) -> str:
        text = json.dumps(self.to_dict(), indent=2)
        if path is not None:
            Path(path).write_text(text + "\n")
        return text

    @classmethod
    def from_json(cls, path) -> "CapacityInstance":
        return cls.from_dict(json.loads(Path(path).read_text()))


@dataclass
class CapacityModel:
    """A built LP together with the index arrays of its variable families."""

    lp: LinearProgram
    instance: CapacityInstance
    demand: DemandMatrix
    x_bed: np.ndarray  # (S, H) variable indices
    x_staff: np.ndarray  # (S, B, H)
    u_bed: np.ndarray | None = None  # (S, H, K)
    u_staff: np.ndarray | None = None  # (S, B, H, K)

    @property
    def stochastic(self) -> bool:
        return self.u_bed is not None

    def first_stage_names(self) -> list[str]:
        names = self.lp.names
        return [names[j] for j in np.concatenate([self.x_bed.ravel(), self.x_staff.ravel()])]


def _demand_array(instance: CapacityInstance, demand: DemandMatrix) -> np.ndarray:
    """Demand reindexed to the instance's specialty/region order, shape (S, R, K)."""
    try:
        si = [demand.specialties.index(s) for s in instance.specialties]
        ri = [demand.regions.index(r) for r in instance.regions]
    except ValueError as exc:
        raise ModelError(f"demand labels do not match instance: {exc}") from None
    if len(demand.specialties) != len(si) or len(demand.regions) != len(ri):
        raise ModelError("demand has specialties/regions the instance does not know")
    return demand.values[np.ix_(si, ri, range(demand.K))]


def _staff_cap(instance: CapacityInstance, s: int, h: int, stage_ub: float) -> float:
    # minimum-cost staffing never needs more than ceil(max ratio * capacity) in any band
    cap = math.ceil(instance.ratio[s].max() * instance.capacity[s, h] - 1e-9)
    return float(min(stage_ub, cap))


def _add_staffing(lp, instance, bed, staff, s, h, rule, tag):
    B = len(instance.bands)
    for b in range(B):
        covering = [staff[s, bb, h] for bb in (range(b, B) if rule == CUMULATIVE else (b,))]
        coeffs = {j: 1.0 for j in covering}
        coeffs[bed[s, h]] = -instance.ratio[s, b]
        lp.add_constraint(coeffs, ">=", 0.0,
                          f"staff{tag}_{instance.specialties[s]}_{instance.bands[b]}_{instance.hospitals[h]}")


def _first_stage(lp: LinearProgram, inst: CapacityInstance, bed_cost, staff_cost):
    S, B, H = inst.shape
    x_bed = np.zeros((S, H), dtype=int)
    x_staff = np.zeros((S, B, H), dtype=int)
    for s, sn in enumerate(inst.specialties):
        for h, hn in enumerate(inst.hospitals):
            x_bed[s, h] = lp.add_variable(f"x_bed[{sn},{hn}]", 0, inst.capacity[s, h], True,
                                          bed_cost[s, h])
    for s, sn in enumerate(inst.specialties):
        for b, bn in enumerate(inst.bands):
            for h, hn in enumerate(inst.hospitals):
                x_staff[s, b, h] = lp.add_variable(
                    f"x_staff[{sn},{bn},{hn}]", 0,
                    _staff_cap(inst, s, h, inst.ub_staff_stage1[b]), True, staff_cost[b])
    for s in range(S):
        for h in range(H):
            _add_staffing(lp, inst, x_bed, x_staff, s, h, inst.staffing_rule, "1")
    _add_caps(lp, inst, x_bed, x_staff, inst.ub_bed_stage1, inst.ub_staff_stage1, "1")
    return x_bed, x_staff


def _add_caps(lp, inst, bed, staff, ub_bed, ub_staff, tag):
    """Hospital bed and band staff caps.  A cap the variable bounds already
    imply is left out, so it cannot tie otherwise independent specialties."""
    S, B, H = inst.shape
    for h, hn in enumerate(inst.hospitals):
        cols = [bed[s, h] for s in range(S)]
        if sum(lp.variables[j].ub for j in cols) > ub_bed[h] + 1e-9:
            lp.add_constraint({j: 1.0 for j in cols}, "<=", ub_bed[h], f"beds{tag}_{hn}")
    for b, bn in enumerate(inst.bands):
        cols = [staff[s, b, h] for s in range(S) for h in range(H)]
        if sum(lp.variables[j].ub for j in cols) > ub_staff[b] + 1e-9:
            lp.add_constraint({j: 1.0 for j in cols}, "<=", ub_staff[b], f"staffcap{tag}_{bn}")


def build_deterministic(instance: CapacityInstance, demand: DemandMatrix | Mapping) -> CapacityModel:
    """Single-stage model sized against one demand vector."""
    if not isinstance(demand, DemandMatrix):
        demand = DemandMatrix.from_base(demand)
    if demand.K != 1:
        raise ModelError("deterministic model needs a single-scenario demand")
    D = _demand_array(instance, demand)[:, :, 0]
    lp = LinearProgram("deterministic")
    x_bed, x_staff = _first_stage(lp, instance, instance.bed_cost_stage1,
                                  instance.staff_cost_stage1)
    for s, sn in enumerate(instance.specialties):
        for r, rn in enumerate(instance.regions):
            hs = instance.hospitals_in(rn)
            lp.add_constraint({x_bed[s, h]: 1.0 for h in hs}, ">=", D[s, r], f"cover_{sn}_{rn}")
    return CapacityModel(lp, instance, demand, x_bed, x_staff)


def build_stochastic(instance: CapacityInstance, demand: DemandMatrix) -> CapacityModel:
    """Deterministic equivalent of the two-stage model over ``demand``'s scenarios."""
    D = _demand_array(instance, demand)
    S, B, H = instance.shape
    K = demand.K
    p = demand.probabilities
    lp = LinearProgram("stochastic")
    x_bed, x_staff = _first_stage(lp, instance, instance.bed_cost_stage1,
                                  instance.staff_cost_stage1)
    u_bed = np.zeros((S, H, K), dtype=int)
    u_staff = np.zeros((S, B, H, K), dtype=int)
    for k, kn in enumerate(demand.scenarios):
        for s, sn in enumerate(instance.specialties):
            for h, hn in enumerate(instance.hospitals):
                u_bed[s, h, k] = lp.add_variable(f"u_bed[{sn},{hn},{kn}]", 0,
                                                 instance.capacity[s, h], True,
                                                 p[k] * instance.bed_cost_stage2[s, h])
        for s, sn in enumerate(instance.specialties):
            for b, bn in enumerate(instance.bands):
                for h, hn in enumerate(instance.hospitals):
                    u_staff[s, b, h, k] = lp.add_variable(
                        f"u_staff[{sn},{bn},{hn},{kn}]", 0,
                        _staff_cap(instance, s, h, instance.ub_staff_stage2[b]), True,
                        p[k] * instance.staff_cost_stage2[b])
    for k, kn in enumerate(demand.scenarios):
        for s, sn in enumerate(instance.specialties):
            for r, rn in enumerate(instance.regions):
                coeffs = {}
                for h in instance.hospitals_in(rn):
                    coeffs[x_bed[s, h]] = 1.0
                    coeffs[u_bed[s, h, k]] = 1.0
                lp.add_constraint(coeffs, ">=", D[s, r, k], f"cover_{sn}_{rn}_{kn}")
        ub = u_bed[:, :, k]
        us = u_staff[:, :, :, k]
        for s in range(S):
            for h in range(H):
                _add_staffing(lp, instance, ub, us, s, h, instance.staffing_rule, f"2_{kn}")
        _add_caps(lp, instance, ub, us, instance.ub_bed_stage2, instance.ub_staff_stage2,
                  f"2_{kn}")
    return CapacityModel(lp, instance, demand, x_bed, x_staff, u_bed, u_staff)


@dataclass
class PlanSolution:
    """Integer bed/staff plan with its cost split.

    Second-stage arrays have a trailing scenario axis and are empty (size 0
    along it) for deterministic solves.
    """

    specialties: list[str]
    hospitals: list[str]
    bands: list[str]
    scenarios: list[str]
    x_bed: np.ndarray
    x_staff: np.ndarray
    u_bed: np.ndarray
    u_staff: np.ndarray
    stage1_cost: float
    expected_stage2_cost: float
    objective: float
    status: str = "optimal"

    @property
    def total_beds(self) -> int:
        return int(self.x_bed.sum())

    @property
    def total_staff(self) -> int:
        return int(self.x_staff.sum())

    def to_dict(self) -> dict:
        return {
            "status": self.status,
            "objective": self.objective,
            "stage1_cost": self.stage1_cost,
            "expected_stage2_cost": self.expected_stage2_cost,
            "specialties": self.specialties, "hospitals": self.hospitals,
            "bands": self.bands, "scenarios": self.scenarios,
            "x_bed": self.x_bed.astype(int).tolist(),
            "x_staff": self.x_staff.astype(int).tolist(),
            "u_bed": self.u_bed.astype(int).tolist(),
            "u_staff": self.u_staff.astype(int).tolist(),
        }


class ExtractionError(RuntimeError):
    pass


def extract_solution(result: SolveResult, model: CapacityModel, tol: float = 1e-6) -> PlanSolution:
    """Reshape a solver result into a :class:`PlanSolution` and re-check it."""
    if result.status != "optimal":
        raise ExtractionError(f"cannot extract a plan from a {result.status} solve")
    inst, dem = model.instance, model.demand
    x = np.rint(result.x).astype(int)
    S, B, H = inst.shape
    x_bed = x[model.x_bed]
    x_staff = x[model.x_staff]
    if model.stochastic:
        u_bed, u_staff = x[model.u_bed], x[model.u_staff]
        p = dem.probabilities
        scen = list(dem.scenarios)
    else:
        u_bed = np.zeros((S, H, 0), dtype=int)
        u_staff = np.zeros((S, B, H, 0), dtype=int)
        p = np.zeros(0)
        scen = []
    stage1 = float((inst.bed_cost_stage1 * x_bed).sum()
                   + (inst.staff_cost_stage1[None, :, None] * x_staff).sum())
    stage2 = float(sum(p[k] * ((inst.bed_cost_stage2 * u_bed[:, :, k]).sum()
                               + (inst.staff_cost_stage2[None, :, None] * u_staff[:, :, :, k]).sum())
                       for k in range(len(p))))
    plan = PlanSolution(list(inst.specialties), list(inst.hospitals), list(inst.bands), scen,
                        x_bed, x_staff, u_bed, u_staff, stage1, stage2, stage1 + stage2)
    if abs(plan.objective - result.objective) > tol * max(1.0, abs(result.objective)):
        raise ExtractionError("objective does not match stage cost decomposition")
    check_plan(plan, inst, dem, tol)
    return plan


def check_plan(plan: PlanSolution, instance: CapacityInstance, demand: DemandMatrix,
               tol: float = 1e-6) -> None:
    """Raise :class:`ExtractionError` unless nonnegativity, coverage and
    staffing hold for every scenario of ``demand``."""
    arrays = (plan.x_bed, plan.x_staff, plan.u_bed, plan.u_staff)
    if any((a < 0).any() for a in arrays):
        raise ExtractionError("negative entries in plan")
    if abs(plan.objective - plan.stage1_cost - plan.expected_stage2_cost) > tol * max(1, abs(plan.objective)):
        raise ExtractionError("objective != stage1 + expected stage2")
    D = _demand_array(instance, demand)
    K = D.shape[2]
    stochastic = plan.u_bed.shape[2] > 0
    for k in range(K):
        beds = plan.x_bed + (plan.u_bed[:, :, k] if stochastic else 0)
        for r, rn in enumerate(instance.regions):
            hs = instance.hospitals_in(rn)
            cover = beds[:, hs].sum(axis=1)
            if stochastic or K == 1:
                if (cover < D[:, r, k] - tol).any():
                    raise ExtractionError(f"coverage violated in region {rn}, scenario {k}")
    stages = [(plan.x_bed, plan.x_staff)]
    if stochastic:
        stages += [(plan.u_bed[:, :, k], plan.u_staff[:, :, :, k]) for k in range(K)]
    B = len(instance.bands)
    for bed, staff in stages:
        for b in range(B):
            if instance.staffing_rule == CUMULATIVE:
                have = staff[:, b:, :].sum(axis=1)
            else:
                have = staff[:, b, :]
            need = instance.ratio[:, b][:, None] * bed
            if (have < need - tol).any():
                raise ExtractionError("staffing ratio violated")


FIRST_STAGE = "first-stage"
COMBINED_MAX = "combined-max"


def heatmap(plan: PlanSolution, mode: str = FIRST_STAGE) -> np.ndarray:
    """Specialty x hospital bed matrix for display."""
    if mode == FIRST_STAGE:
        return plan.x_bed.copy()
    if mode == COMBINED_MAX:
        if plan.u_bed.shape[2] == 0:
            return plan.x_bed.copy()
        return plan.x_bed + plan.u_bed.max(axis=2)
    raise ValueError(f"unknown heatmap mode {mode!r}")


def staff_heatmap(plan: PlanSolution, mode: str = FIRST_STAGE) -> np.ndarray:
    """Specialty x band x hospital staff counts, same display convention as :func:`heatmap`."""
    if mode == FIRST_STAGE or plan.u_staff.shape[3] == 0:
        return plan.x_staff.copy()
    if mode == COMBINED_MAX:
        return plan.x_staff + plan.u_staff.max(axis=3)
    raise ValueError(f"unknown heatmap mode {mode!r}")


def model_size(instance: CapacityInstance, K: int) -> dict[str, int]:
    S, B, H = instance.shape
    first = S * H + S * B * H
    return {"first_stage": first, "second_stage": K * first}
