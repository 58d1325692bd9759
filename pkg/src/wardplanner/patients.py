"""Patient episode records: CSV ingestion, feature derivation, train/test split.

Scan events are stored in one CSV cell as ``code|requested|attended`` items
joined by ``;`` (empty cell = no scans).
"""
from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import asdict, dataclass, field, replace
from datetime import date, datetime, time
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

COLUMNS = (
    "patient_id", "admission_date", "admission_time", "discharge_date", "discharge_time",
    "admission_method", "admission_source", "hospital", "specialty", "diagnosis", "region",
    "date_of_birth", "frailty_score", "scan_events",
)
MANDATORY = ("admission_date", "discharge_date", "admission_method", "admission_source",
             "hospital", "specialty", "date_of_birth", "frailty_score")

# reject reason codes
MISSING_VALUE = "missing_value"
BAD_DATE = "bad_date"
BAD_TIME = "bad_time"
BAD_FRAILTY = "bad_frailty"
BAD_SCANS = "bad_scan_events"
DISCHARGE_BEFORE_ADMISSION = "discharge_before_admission"
REGION_CONFLICT = "region_conflict"
BELOW_MIN_AGE = "below_min_age"

_DAYS = ("Mon", "Tue", "Wed", "Thu", "Fri", "Sat", "Sun")
_MONTHS = ("Jan", "Feb", "Mar", "Apr", "May", "Jun", "Jul", "Aug", "Sep", "Oct", "Nov", "Dec")


class SchemaError(ValueError):
    """The CSV header lacks a mandatory column."""


@dataclass(frozen=True)
class ScanEvent:
    exam_code: str
    requested_date: date
    attendance_date: date | None = None


@dataclass(frozen=True)
class PatientRecord:
    patient_id: str
    admission_date: date
    discharge_date: date
    admission_method: str
    admission_source: str
    hospital: str
    specialty: str
    date_of_birth: date
    frailty_score: int
    admission_time: time | None = None
    discharge_time: time | None = None
    diagnosis: str = ""
    region: str = ""
    scan_events: tuple[ScanEvent, ...] = ()


@dataclass(frozen=True)
class Reject:
    line: int  # 1-based line number in the file (header is line 1)
    reason: str
    detail: str
    raw: dict


@dataclass
class ParseResult:
    records: list[PatientRecord]
    rejects: list[Reject]


@dataclass
class FeatureConfig:
    date_format: str = "%Y-%m-%d"
    time_format: str = "%H:%M"
    min_age: int = 65
    age_bin_start: int = 65
    age_bin_width: int = 5
    age_open_from: int = 100  # last band is "100+"
    los_convention: str = "calendar-days"
    frailty_thresholds: list[float] | None = None  # None: tertiles of the data

    def __post_init__(self):
        if self.age_bin_width <= 0:
            raise ValueError("age_bin_width must be positive")
        if self.age_open_from <= self.age_bin_start:
            raise ValueError("age_open_from must exceed age_bin_start")
        if self.los_convention != "calendar-days":
            raise ValueError("only the calendar-days LOS convention is supported")
        if self.frailty_thresholds is not None:
            t = [float(v) for v in self.frailty_thresholds]
            if t != sorted(t):
                raise ValueError("frailty thresholds must be ascending")
            self.frailty_thresholds = t

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2, sort_keys=True)

    @classmethod
    def from_dict(cls, d: Mapping) -> "FeatureConfig":
        known = set(cls.__dataclass_fields__)
        extra = set(d) - known
        if extra:
            raise ValueError(f"unknown feature config keys: {sorted(extra)}")
        return cls(**d)

    @classmethod
    def load(cls, path) -> "FeatureConfig":
        return cls.from_dict(json.loads(Path(path).read_text()))


@dataclass(frozen=True)
class FeatureRow:
    patient_id: str
    admission_method: str
    admission_source: str
    age_years: int
    age_band: str
    day_of_week: str
    month: str
    diagnosis: str
    frailty_continuous: float
    frailty_band: str
    hospital: str
    num_scans: int
    specialty: str
    los_days: float
    same_day: bool
    region: str = ""
    admission_date: date | None = None

    def get(self, name: str):
        return getattr(self, name)


# -- parsing -----------------------------------------------------------

def _open_text(source) -> str:
    if isinstance(source, (str, Path)) and not (isinstance(source, str) and "\n" in source):
        return Path(source).read_text(encoding="utf-8-sig")
    if isinstance(source, bytes):
        return source.decode("utf-8-sig")
    data = source.read()
    return data.decode("utf-8-sig") if isinstance(data, bytes) else data.lstrip("﻿")


class _RowError(Exception):
    def __init__(self, reason, detail):
        super().__init__(detail)
        self.reason = reason
        self.detail = detail


def _date(text: str, fmt: str, col: str) -> date:
    try:
        return datetime.strptime(text.strip(), fmt).date()
    except ValueError:
        raise _RowError(BAD_DATE, f"{col}={text!r}") from None


def _time(text: str, fmt: str, col: str) -> time | None:
    if not text.strip():
        return None
    try:
        return datetime.strptime(text.strip(), fmt).time()
    except ValueError:
        raise _RowError(BAD_TIME, f"{col}={text!r}") from None


def _scans(text: str, fmt: str) -> tuple[ScanEvent, ...]:
    out = []
    for item in filter(None, (s.strip() for s in text.split(";"))):
        parts = item.split("|")
        if len(parts) not in (2, 3) or not parts[0]:
            raise _RowError(BAD_SCANS, item)
        att = parts[2] if len(parts) == 3 else ""
        out.append(ScanEvent(parts[0], _date(parts[1], fmt, "scan requested"),
                             _date(att, fmt, "scan attended") if att.strip() else None))
    return tuple(out)


def _record(raw: Mapping[str, str], cfg: FeatureConfig, line: int) -> PatientRecord:
    val = {k: (raw.get(k) or "").strip() for k in COLUMNS}
    for k in MANDATORY:
        if not val[k]:
            raise _RowError(MISSING_VALUE, k)
    adm = _date(val["admission_date"], cfg.date_format, "admission_date")
    dis = _date(val["discharge_date"], cfg.date_format, "discharge_date")
    dob = _date(val["date_of_birth"], cfg.date_format, "date_of_birth")
    t_adm = _time(val["admission_time"], cfg.time_format, "admission_time")
    t_dis = _time(val["discharge_time"], cfg.time_format, "discharge_time")
    if dis < adm or (dis == adm and t_adm and t_dis and t_dis < t_adm):
        raise _RowError(DISCHARGE_BEFORE_ADMISSION, f"{dis} < {adm}")
    try:
        frailty = int(val["frailty_score"])
    except ValueError:
        raise _RowError(BAD_FRAILTY, val["frailty_score"]) from None
    if frailty < 0:
        raise _RowError(BAD_FRAILTY, val["frailty_score"])
    return PatientRecord(
        patient_id=val["patient_id"] or f"row{line}",
        admission_date=adm, discharge_date=dis,
        admission_method=val["admission_method"], admission_source=val["admission_source"],
        hospital=val["hospital"], specialty=val["specialty"], date_of_birth=dob,
        frailty_score=frailty, admission_time=t_adm, discharge_time=t_dis,
        diagnosis=val["diagnosis"], region=val["region"],
        scan_events=_scans(val["scan_events"], cfg.date_format))


def parse_patient_csv(source, schema: Mapping[str, str] | None = None,
                      config: FeatureConfig | None = None,
                      hospital_region: Mapping[str, str] | None = None) -> ParseResult:
    """Read episode rows; rows failing validation go to ``rejects`` with a reason code.

    ``schema`` maps field names to CSV header names where they differ.
    ``hospital_region`` pins the region of each hospital; without it the
    first region seen for a hospital wins and later disagreeing rows are
    rejected.
    """
    cfg = config or FeatureConfig()
    text = _open_text(source)
    reader = csv.DictReader(io.StringIO(text))
    header = reader.fieldnames
    if header is None:
        raise SchemaError("missing header row")
    inverse = {v: k for k, v in (schema or {}).items()}
    present = {inverse.get(h, h) for h in header}
    missing = [c for c in MANDATORY if c not in present]
    if missing:
        raise SchemaError(f"missing mandatory columns: {', '.join(missing)}")
    regions = dict(hospital_region or {})
    pinned = hospital_region is not None
    records, rejects = [], []
    for n, raw in enumerate(reader, start=2):
        row = {inverse.get(k, k): v for k, v in raw.items() if k is not None}
        try:
            rec = _record(row, cfg, n)
            known = regions.get(rec.hospital)
            if known is None and pinned:
                raise _RowError(REGION_CONFLICT, f"hospital {rec.hospital!r} has no region")
            if known is not None and rec.region and rec.region != known:
                raise _RowError(REGION_CONFLICT, f"{rec.hospital}: {rec.region} vs {known}")
            if known is None and rec.region:
                regions[rec.hospital] = rec.region
            if not rec.region and rec.hospital in regions:
                rec = replace(rec, region=regions[rec.hospital])
        except _RowError as exc:
            rejects.append(Reject(n, exc.reason, exc.detail, dict(row)))
            continue
        records.append(rec)
    return ParseResult(records, rejects)


def _fmt_date(d, fmt):
    return d.strftime(fmt) if d else ""


def write_patient_csv(records: Iterable[PatientRecord], out=None,
                      config: FeatureConfig | None = None) -> str:
    cfg = config or FeatureConfig()
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(COLUMNS)
    for r in records:
        scans = ";".join(f"{s.exam_code}|{_fmt_date(s.requested_date, cfg.date_format)}|"
                         f"{_fmt_date(s.attendance_date, cfg.date_format)}" for s in r.scan_events)
        w.writerow([r.patient_id, _fmt_date(r.admission_date, cfg.date_format),
                    r.admission_time.strftime(cfg.time_format) if r.admission_time else "",
                    _fmt_date(r.discharge_date, cfg.date_format),
                    r.discharge_time.strftime(cfg.time_format) if r.discharge_time else "",
                    r.admission_method, r.admission_source, r.hospital, r.specialty,
                    r.diagnosis, r.region, _fmt_date(r.date_of_birth, cfg.date_format),
                    r.frailty_score, scans])
    text = buf.getvalue()
    if out is not None:
        Path(out).write_text(text) if isinstance(out, (str, Path)) else out.write(text)
    return text


def write_rejects_csv(rejects: Sequence[Reject], out=None) -> str:
    """Rejected rows with their original columns plus ``line`` and ``reason``."""
    cols = list(COLUMNS)
    for r in rejects:
        cols += [k for k in r.raw if k not in cols]
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(cols + ["line", "reason", "reason_detail"])
    for r in rejects:
        w.writerow([r.raw.get(c, "") for c in cols] + [r.line, r.reason, r.detail])
    text = buf.getvalue()
    if out is not None:
        Path(out).write_text(text) if isinstance(out, (str, Path)) else out.write(text)
    return text


# -- features ----------------------------------------------------------

def age_at(dob: date, on: date) -> int:
    years = on.year - dob.year
    if (on.month, on.day) < (dob.month, dob.day):
        years -= 1
    return years


def age_band(age: int, cfg: FeatureConfig) -> str:
    if age >= cfg.age_open_from:
        return f"{cfg.age_open_from}+"
    if age < cfg.age_bin_start:
        return f"<{cfg.age_bin_start}"
    lo = cfg.age_bin_start + (age - cfg.age_bin_start) // cfg.age_bin_width * cfg.age_bin_width
    hi = min(lo + cfg.age_bin_width, cfg.age_open_from) - 1
    return f"{lo}–{hi}"


def los_days(rec: PatientRecord, cfg: FeatureConfig) -> int:
    return (rec.discharge_date - rec.admission_date).days


def frailty_tertiles(records: Sequence[PatientRecord]) -> list[float]:
    scores = np.array([r.frailty_score for r in records], dtype=float)
    if len(scores) == 0:
        return [0.0, 0.0]
    return [float(v) for v in np.quantile(scores, [1 / 3, 2 / 3])]


def frailty_band(score: float, thresholds: Sequence[float]) -> str:
    """``F1`` for scores at or below the first threshold, ``F2`` up to the second, ..."""
    k = sum(score > t for t in thresholds)
    return f"F{k + 1}"


def derive_row(rec: PatientRecord, cfg: FeatureConfig) -> FeatureRow:
    if cfg.frailty_thresholds is None:
        raise ValueError("resolve frailty thresholds before deriving single rows")
    age = age_at(rec.date_of_birth, rec.admission_date)
    los = los_days(rec, cfg)
    return FeatureRow(
        patient_id=rec.patient_id, admission_method=rec.admission_method,
        admission_source=rec.admission_source, age_years=age, age_band=age_band(age, cfg),
        day_of_week=_DAYS[rec.admission_date.weekday()],
        month=_MONTHS[rec.admission_date.month - 1], diagnosis=rec.diagnosis,
        frailty_continuous=float(rec.frailty_score),
        frailty_band=frailty_band(rec.frailty_score, cfg.frailty_thresholds),
        hospital=rec.hospital, num_scans=len(rec.scan_events), specialty=rec.specialty,
        los_days=float(los), same_day=los == 0, region=rec.region,
        admission_date=rec.admission_date)


def resolve_config(records: Sequence[PatientRecord], cfg: FeatureConfig) -> FeatureConfig:
    """Fill data-dependent settings (frailty tertiles) from ``records``."""
    if cfg.frailty_thresholds is not None:
        return cfg
    return replace(cfg, frailty_thresholds=frailty_tertiles(records))


def derive_features(records: Sequence[PatientRecord], config: FeatureConfig | None = None,
                    exclusions: list | None = None) -> list[FeatureRow]:
    """Feature rows for the cohort; under-age records are skipped and, when
    ``exclusions`` is given, appended to it as ``(patient_id, reason)``."""
    cfg = resolve_config(records, config or FeatureConfig())
    rows = []
    for rec in records:
        if age_at(rec.date_of_birth, rec.admission_date) < cfg.min_age:
            if exclusions is not None:
                exclusions.append((rec.patient_id, BELOW_MIN_AGE))
            continue
        rows.append(derive_row(rec, cfg))
    return rows


def train_test_split(rows: Sequence, test_fraction: float, seed: int):
    """Random partition with ``round(test_fraction * N)`` test rows (halves round up).

    Both parts keep the input order.
    """
    if not 0.0 < test_fraction < 1.0:
        raise ValueError("test_fraction must lie strictly between 0 and 1")
    n = len(rows)
    if n == 0:
        raise ValueError("cannot split an empty row set")
    n_test = int(math.floor(test_fraction * n + 0.5))
    perm = np.random.default_rng(seed).permutation(n)
    test_idx = set(perm[:n_test].tolist())
    train = [r for i, r in enumerate(rows) if i not in test_idx]
    test = [r for i, r in enumerate(rows) if i in test_idx]
    return train, test
