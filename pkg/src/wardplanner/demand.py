"""Daily bed demand per specialty and region, and scenario sets over it.

A base (single-period) demand is a plain mapping ``{(specialty, region):
beds_per_day}``.  Scenario sets are :class:`DemandMatrix` objects carrying
the ``(S, R, K)`` array plus scenario probabilities.
"""
from __future__ import annotations

import csv
import io
import json
import math
from collections import defaultdict
from dataclasses import dataclass, field
from datetime import date
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

PROB_TOL = 1e-9

BaseDemand = Mapping[tuple[str, str], float]


class ConfigurationError(ValueError):
    """Inconsistent sets or mappings (e.g. a hospital without a region)."""


@dataclass
class DemandMatrix:
    specialties: list[str]
    regions: list[str]
    scenarios: list[str]
    values: np.ndarray  # (S, R, K) beds per day
    probabilities: np.ndarray  # (K,)

    def __post_init__(self):
        self.specialties = [str(s) for s in self.specialties]
        self.regions = [str(r) for r in self.regions]
        self.scenarios = [str(k) for k in self.scenarios]
        self.values = np.asarray(self.values, dtype=float)
        self.probabilities = np.asarray(self.probabilities, dtype=float)
        shape = (len(self.specialties), len(self.regions), len(self.scenarios))
        if self.values.shape != shape:
            raise ValueError(f"values shape {self.values.shape} != {shape}")
        if self.probabilities.shape != (shape[2],):
            raise ValueError("one probability per scenario required")
        for labels in (self.specialties, self.regions, self.scenarios):
            if len(set(labels)) != len(labels):
                raise ValueError(f"duplicate labels in {labels}")
        if not np.isfinite(self.values).all() or (self.values < 0).any():
            raise ValueError("demand must be finite and nonnegative")
        if (self.probabilities < 0).any() or abs(self.probabilities.sum() - 1.0) > PROB_TOL:
            raise ValueError(f"probabilities must be >= 0 and sum to 1 "
                             f"(got sum {self.probabilities.sum():.12g})")

    @property
    def K(self) -> int:
        return len(self.scenarios)

    @classmethod
    def from_base(cls, base: BaseDemand, specialties=None, regions=None,
                  scenario: str = "base") -> "DemandMatrix":
        specialties = specialties or sorted({s for s, _ in base})
        regions = regions or sorted({r for _, r in base})
        vals = np.array([[[base.get((s, r), 0.0)] for r in regions] for s in specialties],
                        dtype=float).reshape(len(specialties), len(regions), 1)
        return cls(specialties, regions, [scenario], vals, np.array([1.0]))

    def scenario(self, k: int) -> dict[tuple[str, str], float]:
        return {(s, r): float(self.values[i, j, k])
                for i, s in enumerate(self.specialties) for j, r in enumerate(self.regions)}

    def scaled(self, factor: float) -> "DemandMatrix":
        return DemandMatrix(self.specialties, self.regions, self.scenarios,
                            self.values * factor, self.probabilities)

    # -- files ----------------------------------------------------------
    def to_csv(self, header_comment: str | None = None) -> str:
        """Long format; values carry 12 significant digits so routes that differ
        only in float summation order write the same file."""
        buf = io.StringIO()
        if header_comment:
            buf.write(f"# {header_comment}\n")
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["specialty", "region", "scenario", "value"])
        for i, s in enumerate(self.specialties):
            for j, r in enumerate(self.regions):
                for k, kn in enumerate(self.scenarios):
                    w.writerow([s, r, kn, format(float(self.values[i, j, k]), ".12g")])
        return buf.getvalue()

    def sidecar(self, meta: Mapping | None = None) -> dict:
        d = {"specialties": self.specialties, "regions": self.regions,
             "scenarios": self.scenarios, "probabilities": self.probabilities.tolist()}
        if meta:
            d["meta"] = dict(meta)
        return d

    def save(self, csv_path, meta: Mapping | None = None) -> Path:
        csv_path = Path(csv_path)
        comment = None
        if meta:
            comment = " ".join(f"{k}={v}" for k, v in meta.items())
        csv_path.write_text(self.to_csv(comment))
        side = csv_path.with_suffix(".json")
        side.write_text(json.dumps(self.sidecar(meta), indent=2, sort_keys=True) + "\n")
        return side

    @classmethod
    def load(cls, csv_path, sidecar_path=None) -> "DemandMatrix":
        csv_path = Path(csv_path)
        side = json.loads(Path(sidecar_path or csv_path.with_suffix(".json")).read_text())
        S, R, K = side["specialties"], side["regions"], side["scenarios"]
        vals = np.full((len(S), len(R), len(K)), np.nan)
        lines = [ln for ln in csv_path.read_text().splitlines() if not ln.startswith("#")]
        for row in csv.DictReader(lines):
            vals[S.index(row["specialty"]), R.index(row["region"]),
                 K.index(row["scenario"])] = float(row["value"])
        if np.isnan(vals).any():
            raise ValueError(f"{csv_path}: demand file is missing cells")
        return cls(S, R, K, vals, np.array(side["probabilities"], dtype=float))


# -- historical averages -----------------------------------------------

@dataclass
class CellSummary:
    admissions: int = 0
    los_days: float = 0.0
    window_days: float = 1.0

    @property
    def alos(self) -> float:
        return self.los_days / self.admissions if self.admissions else 0.0

    @property
    def adna(self) -> float:
        return self.admissions / self.window_days

    @property
    def adbd(self) -> float:
        return adbd(self.alos, self.adna)


def adbd(alos: float, adna: float) -> float:
    """Average daily bed demand: average stay times admissions per day."""
    if alos < 0 or adna < 0:
        raise ValueError("ALOS and ADNA must be nonnegative")
    return alos * adna


def summarize(rows: Iterable, window_days: float) -> dict[tuple[str, str], CellSummary]:
    """Per ``(specialty, hospital)`` admissions and LOS totals over a window.

    ``rows`` need ``specialty``, ``hospital`` and ``los_days`` attributes.
    """
    if window_days <= 0:
        raise ValueError("window_days must be positive")
    out: dict[tuple[str, str], CellSummary] = defaultdict(lambda: CellSummary(window_days=window_days))
    for r in rows:
        c = out[(r.specialty, r.hospital)]
        c.admissions += 1
        c.los_days += r.los_days
    return dict(out)


def aggregate_region(adbd_by_hospital: Mapping[tuple[str, str], float],
                     hospital_region: Mapping[str, str]) -> dict[tuple[str, str], float]:
    """Sum hospital-level demand into regions."""
    out: dict[tuple[str, str], float] = defaultdict(float)
    regions = set(hospital_region.values())
    specialties = set()
    for (s, h), v in adbd_by_hospital.items():
        if h not in hospital_region:
            raise ConfigurationError(f"hospital {h!r} has no region")
        out[(s, hospital_region[h])] += v
        specialties.add(s)
    for s in specialties:
        for r in regions:
            out.setdefault((s, r), 0.0)
    return dict(out)


def average_demand(rows: Sequence, window_days: float,
                   hospital_region: Mapping[str, str]) -> dict[tuple[str, str], float]:
    """ALOS x ADNA per hospital cell, summed by region."""
    cells = summarize(rows, window_days)
    return aggregate_region({k: c.adbd for k, c in cells.items()}, hospital_region)


# -- tree-linked demand ------------------------------------------------

def specific_los(rows: Sequence, leaves: Sequence) -> dict[tuple, float]:
    """Mean LOS per ``(leaf, specialty, hospital)`` cell."""
    tot: dict[tuple, list] = defaultdict(lambda: [0, 0.0])
    for r, leaf in zip(rows, leaves):
        t = tot[(leaf, r.specialty, r.hospital)]
        t[0] += 1
        t[1] += r.los_days
    return {k: v[1] / v[0] for k, v in tot.items()}


def cart_demand(rows: Sequence, leaves: Sequence, window_days: float,
                hospital_region: Mapping[str, str],
                los_table: Mapping[tuple, float] | None = None,
                fallback_los: Mapping[tuple[str, str], float] | None = None,
                ) -> dict[tuple[str, str], float]:
    """Demand from patient counts per leaf cell times that cell's specific LOS.

    ``los_table`` maps ``(leaf, specialty, hospital)`` to the LOS to use; by
    default it is computed from ``rows`` themselves, in which case the
    result equals total LOS-days over the window.  Cells missing from a
    supplied table take ``fallback_los[(specialty, hospital)]`` or 0.
    """
    if window_days <= 0:
        raise ValueError("window_days must be positive")
    if len(rows) != len(leaves):
        raise ValueError("rows and leaves differ in length")
    if los_table is None:
        los_table = specific_los(rows, leaves)
    counts: dict[tuple, int] = defaultdict(int)
    for r, leaf in zip(rows, leaves):
        counts[(leaf, r.specialty, r.hospital)] += 1
    by_hospital: dict[tuple[str, str], float] = defaultdict(float)
    for (leaf, s, h), n in counts.items():
        los = los_table.get((leaf, s, h))
        if los is None:
            los = (fallback_los or {}).get((s, h), 0.0)
        by_hospital[(s, h)] += n * los / window_days
    return aggregate_region(by_hospital, hospital_region)


# -- scenario sets -----------------------------------------------------

def _check_probs(probs) -> np.ndarray:
    p = np.asarray(probs, dtype=float)
    if p.ndim != 1 or len(p) == 0:
        raise ValueError("need at least one probability")
    if (p < 0).any() or abs(p.sum() - 1.0) > PROB_TOL:
        raise ValueError(f"probabilities must be >= 0 and sum to 1 (got {p.sum():.12g})")
    return p


def _labels(base: BaseDemand, specialties, regions):
    return (list(specialties) if specialties else sorted({s for s, _ in base}),
            list(regions) if regions else sorted({r for _, r in base}))


def percentage_scenarios(base: BaseDemand, deltas: Sequence[float], probs: Sequence[float],
                         specialties=None, regions=None, names=None) -> DemandMatrix:
    """Scenario k scales every cell of ``base`` by ``deltas[k]``."""
    if len(deltas) != len(probs):
        raise ValueError("deltas and probs differ in length")
    p = _check_probs(probs)
    S, R = _labels(base, specialties, regions)
    b = np.array([[base.get((s, r), 0.0) for r in R] for s in S], dtype=float)
    vals = b[:, :, None] * np.asarray(deltas, dtype=float)[None, None, :]
    names = names or [f"k{i}" for i in range(len(deltas))]
    return DemandMatrix(S, R, names, vals, p)


def yearly_scenarios(per_year: Sequence[BaseDemand], admissions: Sequence[float],
                     names=None, specialties=None, regions=None) -> DemandMatrix:
    """One scenario per year, weighted by that year's admissions."""
    if len(per_year) != len(admissions) or not per_year:
        raise ValueError("need one admissions count per year")
    a = np.asarray(admissions, dtype=float)
    if (a < 0).any():
        raise ValueError("admissions must be nonnegative")
    if a.sum() <= 0:
        raise ValueError("total admissions must be positive")
    keys = set().union(*[set(d) for d in per_year])
    S, R = _labels({k: 0 for k in keys}, specialties, regions)
    vals = np.stack([np.array([[d.get((s, r), 0.0) for r in R] for s in S], dtype=float)
                     for d in per_year], axis=2)
    names = names or [f"year{i + 1}" for i in range(len(per_year))]
    return DemandMatrix(S, R, names, vals, a / a.sum())


def explicit_scenarios(values, probs, specialties, regions, names=None) -> DemandMatrix:
    p = _check_probs(probs)
    names = names or [f"k{i}" for i in range(len(p))]
    return DemandMatrix(specialties, regions, names, np.asarray(values, dtype=float), p)


def mean_demand(matrix: DemandMatrix) -> dict[tuple[str, str], float]:
    """Probability-weighted average over scenarios, per cell."""
    avg = matrix.values @ matrix.probabilities
    return {(s, r): float(avg[i, j]) for i, s in enumerate(matrix.specialties)
            for j, r in enumerate(matrix.regions)}


def mean_matrix(matrix: DemandMatrix) -> DemandMatrix:
    return DemandMatrix.from_base(mean_demand(matrix), matrix.specialties, matrix.regions,
                                  scenario="mean")


def pooled_los(rows: Sequence) -> dict[tuple[str, str], float]:
    """Mean LOS per ``(specialty, hospital)`` over all rows."""
    return {k: c.alos for k, c in summarize(rows, 1.0).items()}


def yearly_demand(rows: Sequence, hospital_region: Mapping[str, str], leaves: Sequence | None = None,
                  specialties=None, regions=None) -> DemandMatrix:
    """One scenario per admission year, weighted by that year's admissions.

    Counts come from each year; LOS comes from all years pooled, per
    ``(leaf, specialty, hospital)`` when ``leaves`` is given and per
    ``(specialty, hospital)`` otherwise.  The window is the calendar year.
    """
    if not rows:
        raise ValueError("no rows to derive demand from")
    if leaves is None:
        leaves = [0] * len(rows)
    if len(leaves) != len(rows):
        raise ValueError("rows and leaves differ in length")
    table = specific_los(rows, leaves)
    fallback = pooled_los(rows)
    years = sorted({r.admission_date.year for r in rows})
    per_year, admissions = [], []
    for y in years:
        idx = [i for i, r in enumerate(rows) if r.admission_date.year == y]
        days = (date(y + 1, 1, 1) - date(y, 1, 1)).days
        per_year.append(cart_demand([rows[i] for i in idx], [leaves[i] for i in idx], days,
                                    hospital_region, table, fallback))
        admissions.append(len(idx))
    if specialties is None:
        specialties = sorted({r.specialty for r in rows})
    if regions is None:
        regions = sorted(set(hospital_region.values()))
    return yearly_scenarios(per_year, admissions, [str(y) for y in years], specialties, regions)
