"""Seeded synthetic data: a patient corpus and random capacity instances.

The corpus stands in for private episode data.  LOS depends on specialty,
age, frailty, admission method and source so a tree has structure to find.
"""
from __future__ import annotations

from datetime import date, time, timedelta

import numpy as np

from .capacity import CapacityInstance
from .demand import DemandMatrix, explicit_scenarios
from .patients import PatientRecord, ScanEvent

SPECIALTIES = ("COTE", "T&O", "GenMed", "Cardiology", "Respiratory", "Stroke")
HOSPITALS = ("H1", "H2", "H3", "H4")
HOSPITAL_REGION = {"H1": "R1", "H2": "R1", "H3": "R2", "H4": "R2"}
YEARS = (2019, 2020, 2021)
YEAR_WEIGHTS = (0.30, 0.33, 0.37)  # admissions grow year on year

# mean LOS (days) for a 65-69 year old, frailty 3, elective, from home
_BASE_LOS = {"COTE": 6.0, "T&O": 5.0, "GenMed": 3.5, "Cardiology": 3.0,
             "Respiratory": 4.0, "Stroke": 7.0}
_SPECIALTY_WEIGHTS = (0.26, 0.18, 0.22, 0.12, 0.12, 0.10)
_HOSPITAL_WEIGHTS = (0.30, 0.20, 0.28, 0.22)
_HOSPITAL_FACTOR = {"H1": 1.0, "H2": 0.85, "H3": 1.1, "H4": 0.95}
_DIAGNOSES = {"COTE": ("R54", "R29", "N39"), "T&O": ("S72", "S32", "M16"),
              "GenMed": ("J18", "N17", "E86"), "Cardiology": ("I50", "I48", "I21"),
              "Respiratory": ("J44", "J18", "J96"), "Stroke": ("I63", "I61", "G45")}
_SOURCES = ("Own Home", "Transferred", "Care Home")
_EXAMS = ("CT", "MRI", "XR", "US")


def corpus(n: int = 6000, seed: int = 2024) -> list[PatientRecord]:
    """``n`` episode records spread over three years, four hospitals, two regions."""
    rng = np.random.default_rng(seed)
    year_idx = rng.choice(len(YEARS), size=n, p=YEAR_WEIGHTS)
    spec_idx = rng.choice(len(SPECIALTIES), size=n, p=_SPECIALTY_WEIGHTS)
    hosp_idx = rng.choice(len(HOSPITALS), size=n, p=_HOSPITAL_WEIGHTS)
    records = []
    for i in range(n):
        year = YEARS[year_idx[i]]
        days_in_year = 366 if year % 4 == 0 else 365
        adm = date(year, 1, 1) + timedelta(days=int(rng.integers(days_in_year)))
        spec = SPECIALTIES[spec_idx[i]]
        hosp = HOSPITALS[hosp_idx[i]]
        age = int(min(104, 65 + rng.gamma(2.2, 7.0)))
        frailty = int(np.clip(round(2 + (age - 65) / 9 + rng.normal(0, 1.3)), 1, 9))
        emergency = rng.random() < (0.75 if spec in ("COTE", "Stroke", "GenMed") else 0.55)
        source = _SOURCES[rng.choice(3, p=(0.72, 0.18, 0.10))]
        mean_los = (_BASE_LOS[spec] * _HOSPITAL_FACTOR[hosp] * (1 + 0.05 * (age - 65) / 5)
                    * (1 + 0.12 * (frailty - 3)) * (1.4 if emergency else 0.8)
                    * (1.3 if source == "Transferred" else 1.0))
        same_day_p = 0.03 if emergency else 0.25
        if rng.random() < same_day_p:
            los = 0
        else:
            # gamma-Poisson mixture: overdispersed, at least one night
            los = 1 + int(rng.poisson(rng.gamma(2.0, max(mean_los - 1, 0.1) / 2.0)))
        dis = adm + timedelta(days=los)
        born = adm - timedelta(days=int(age * 365.25 + rng.integers(1, 300)))
        n_scans = int(rng.poisson(0.4 + 0.15 * frailty + 0.05 * los))
        scans = []
        for _ in range(n_scans):
            req = adm + timedelta(days=int(rng.integers(0, los + 1)))
            att = req + timedelta(days=int(rng.integers(0, 2)))
            scans.append(ScanEvent(str(rng.choice(_EXAMS)), req, att))
        adm_t = time(int(rng.integers(0, 24)), int(rng.integers(0, 60)))
        dis_t = time(int(rng.integers(8, 21)), int(rng.integers(0, 60)))
        if los == 0 and dis_t < adm_t:
            adm_t, dis_t = dis_t, adm_t
        records.append(PatientRecord(
            patient_id=f"S{i + 1:06d}", admission_date=adm, discharge_date=dis,
            admission_method="Emergency" if emergency else "Elective",
            admission_source=source, hospital=hosp, specialty=spec, date_of_birth=born,
            frailty_score=frailty, admission_time=adm_t, discharge_time=dis_t,
            diagnosis=str(rng.choice(_DIAGNOSES[spec])), region=HOSPITAL_REGION[hosp],
            scan_events=tuple(sorted(scans, key=lambda e: e.requested_date))))
    return records


def corpus_instance(specialties=SPECIALTIES, hospitals=HOSPITALS, seed: int = 7,
                    name: str = "synthetic") -> CapacityInstance:
    """Costs and capacities for the synthetic network, sized to the corpus demand."""
    rng = np.random.default_rng(seed)
    S, H = len(specialties), len(hospitals)
    bed1 = rng.integers(20, 41, (S, H)).astype(float)
    return CapacityInstance(
        specialties=list(specialties), hospitals=list(hospitals), regions=["R1", "R2"],
        bands=["band5", "band6"], hospital_region=dict(HOSPITAL_REGION),
        bed_cost_stage1=bed1, bed_cost_stage2=np.ceil(bed1 * 1.1),
        staff_cost_stage1=[50.0, 60.0], staff_cost_stage2=[55.0, 66.0],
        ratio=np.round(rng.uniform(0.1, 0.3, (S, 2)), 2),
        capacity=rng.integers(8, 16, (S, H)).astype(float), name=name)


# Documented ranges for random instances:
#   bands B = 2; regions 1 or 2, hospitals assigned round-robin
#   bed_cost_stage1 integer in [20, 40]; bed_cost_stage2 = ceil(stage1 * U[1.05, 1.5])
#   staff_cost_stage1 integer in [40, 70]; staff_cost_stage2 = ceil(stage1 * U[1.05, 1.3])
#   ratio U[0.10, 0.30] rounded to 2 d.p.; capacity integer in [5, 15]
#   base demand per (s, r) = U[0.2, 0.7] * total capacity of s in r
#   scenario multipliers: first 1.0, others U[0.8, 1.2], 2 d.p.
#   probabilities: Dirichlet(2, ..., 2) rounded to 3 d.p., last one absorbs rounding
#   stage bounds left at their non-binding defaults
RANDOM_RANGES = {
    "bands": 2, "bed_cost_stage1": (20, 40), "bed_cost_stage2_markup": (1.05, 1.5),
    "staff_cost_stage1": (40, 70), "staff_cost_stage2_markup": (1.05, 1.3),
    "ratio": (0.10, 0.30), "capacity": (5, 15), "demand_fraction": (0.2, 0.7),
    "delta": (0.8, 1.2),
}


def random_instance(rng: np.random.Generator, S: int, H: int, K: int,
                    R: int | None = None) -> tuple[CapacityInstance, DemandMatrix]:
    """One random instance and scenario set drawn from ``RANDOM_RANGES``."""
    if R is None:
        R = 1 if H < 3 else int(rng.integers(1, 3))
    specialties = [f"S{i}" for i in range(S)]
    hospitals = [f"H{j}" for j in range(H)]
    regions = [f"R{r}" for r in range(R)]
    hr = {h: regions[j % R] for j, h in enumerate(hospitals)}
    bed1 = rng.integers(20, 41, (S, H)).astype(float)
    staff1 = rng.integers(40, 71, 2).astype(float)
    inst = CapacityInstance(
        specialties=specialties, hospitals=hospitals, regions=regions,
        bands=["b5", "b6"], hospital_region=hr,
        bed_cost_stage1=bed1, bed_cost_stage2=np.ceil(bed1 * rng.uniform(1.05, 1.5, (S, H))),
        staff_cost_stage1=staff1, staff_cost_stage2=np.ceil(staff1 * rng.uniform(1.05, 1.3, 2)),
        ratio=np.round(rng.uniform(0.1, 0.3, (S, 2)), 2),
        capacity=rng.integers(5, 16, (S, H)).astype(float), name="random")
    total = np.array([[sum(inst.capacity[s, j] for j, h in enumerate(hospitals) if hr[h] == r)
                       for r in regions] for s in range(S)])
    base = np.round(total * rng.uniform(0.2, 0.7, (S, R)), 2)
    deltas = np.concatenate([[1.0], np.round(rng.uniform(0.8, 1.2, K - 1), 2)])
    p = np.round(rng.dirichlet([2.0] * K), 3)
    p[-1] = round(1.0 - p[:-1].sum(), 3)
    if p[-1] < 0:
        p = np.full(K, 1.0 / K)
    values = base[:, :, None] * deltas[None, None, :]
    # keep every scenario coverable within capacity
    values = np.minimum(values, total[:, :, None])
    demand = explicit_scenarios(values, p, specialties, regions,
                                [f"k{k}" for k in range(K)])
    return inst, demand

