"""Command-line front end: fit-tree, derive-demand, plan, report.

Every command reads a JSON run config (``--config``), applies
``WARDPLANNER_*`` environment overrides and then command-line flags, checks
its inputs, and only then writes its outputs.  Each output embeds the
config hash and seed.
"""
from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import logging
import math
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__, cart
from .capacity import (COMBINED_MAX, FIRST_STAGE, STAFFING_RULES, CapacityInstance)
from .demand import (DemandMatrix, average_demand, cart_demand, explicit_scenarios,
                     percentage_scenarios, yearly_demand)
from .evaluate import evaluate, render_table
from .heatmaps import heatmap_csv, heatmap_svg
from .milp import BACKENDS, ModelError, SolverError
from .patients import (FeatureConfig, SchemaError, derive_features, parse_patient_csv,
                       train_test_split, write_rejects_csv)

log = logging.getLogger("wardplanner")

ENV_PREFIX = "WARDPLANNER_"
SCHEMES = ("percentage", "yearly", "matrix")
DEMAND_MODES = ("averages", "tree")
DEFAULT_FEATURES = ["admission_method", "admission_source", "age_band", "day_of_week", "month",
                    "diagnosis", "frailty_band", "hospital", "num_scans", "specialty"]

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_INPUT = 3
EXIT_SOLVER = 4


class ConfigError(Exception):
    pass


class InputError(Exception):
    pass


# -- configuration -------------------------------------------------------------

class RunConfig:
    """Effective run settings: file values, then env overrides, then flags."""

    def __init__(self, raw: dict, base_dir: Path):
        self.raw = raw
        self.base_dir = base_dir
        try:
            self.seed = int(raw.get("seed", 0))
        except (TypeError, ValueError):
            raise ConfigError(f"seed must be an integer, got {raw.get('seed')!r}") from None
        self.staffing_rule = raw.get("staffing_rule", "per-band")
        if self.staffing_rule not in STAFFING_RULES:
            raise ConfigError(f"staffing_rule must be one of {STAFFING_RULES}")
        self.solver = raw.get("solver", "auto")
        if self.solver not in BACKENDS:
            raise ConfigError(f"solver must be one of {BACKENDS}")
        self.tree = dict(raw.get("tree") or {})
        self.demand = dict(raw.get("demand") or {})
        self.scheme = self.demand.get("scheme", "percentage")
        if self.scheme not in SCHEMES:
            raise ConfigError(f"scheme must be one of {SCHEMES}")
        self.mode = self.demand.get("mode", "averages")
        if self.mode not in DEMAND_MODES:
            raise ConfigError(f"demand mode must be one of {DEMAND_MODES}")
        try:
            self.features = FeatureConfig.from_dict(raw.get("features") or {})
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"bad feature config: {exc}") from None
        self.out = self.path(raw.get("out", "out"))
        self.hash = config_hash(raw)

    def path(self, value) -> Path | None:
        if value is None:
            return None
        p = Path(value)
        return p if p.is_absolute() else self.base_dir / p

    def input(self, key: str, default=None, section: dict | None = None) -> Path:
        """Resolved path of a required input; missing files are an input error."""
        value = (section if section is not None else self.raw).get(key, default)
        if value is None:
            raise ConfigError(f"config needs {key!r}")
        p = self.path(value)
        if not p.is_file():
            raise InputError(f"{key}: no such file {p}")
        return p

    def meta(self, command: str) -> dict:
        return {"config_hash": self.hash, "seed": self.seed, "command": command,
                "version": __version__}


def config_hash(raw: dict) -> str:
    """Short digest of the effective settings; the output directory is not part of it."""
    body = {k: v for k, v in raw.items() if k != "out"}
    text = json.dumps(body, sort_keys=True, separators=(",", ":"), default=str)
    return hashlib.sha256(text.encode()).hexdigest()[:16]


def _env_value(text: str):
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def load_config(args, environ=None) -> RunConfig:
    environ = os.environ if environ is None else environ
    path = args.config or environ.get(ENV_PREFIX + "CONFIG")
    raw: dict = {}
    base = Path.cwd()
    if path:
        p = Path(path)
        if not p.is_file():
            raise InputError(f"config: no such file {p}")
        try:
            raw = json.loads(p.read_text())
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{p}: {exc}") from None
        if not isinstance(raw, dict):
            raise ConfigError(f"{p}: top level must be an object")
        base = p.resolve().parent
    # environment overrides; nested keys use a double underscore, e.g.
    # WARDPLANNER_DEMAND__WINDOW_DAYS=1.5
    for key, text in sorted(environ.items()):
        if not key.startswith(ENV_PREFIX) or key == ENV_PREFIX + "CONFIG":
            continue
        parts = key[len(ENV_PREFIX):].lower().split("__")
        if parts == ["scheme"]:
            parts = ["demand", "scheme"]
        target = raw
        for part in parts[:-1]:
            target = target.setdefault(part, {})
            if not isinstance(target, dict):
                raise ConfigError(f"{key} does not name a config section")
        target[parts[-1]] = _env_value(text)
    if args.seed is not None:
        raw["seed"] = args.seed
    if args.out is not None:
        raw["out"] = str(Path(args.out).resolve())
    if args.staffing_rule is not None:
        raw["staffing_rule"] = args.staffing_rule
    if args.scheme is not None:
        raw.setdefault("demand", {})["scheme"] = args.scheme
    return RunConfig(raw, base)


# -- helpers ---------------------------------------------------------------------

def _dump(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True, allow_nan=False, default=_json_default) + "\n"


def _json_default(v):
    if isinstance(v, (np.integer,)):
        return int(v)
    if isinstance(v, (np.floating,)):
        return float(v)
    if isinstance(v, np.ndarray):
        return v.tolist()
    if isinstance(v, Path):
        return str(v)
    raise TypeError(f"not serializable: {type(v).__name__}")


def _clean(x):
    """NaN and infinities as strings so JSON stays strict."""
    if isinstance(x, float) and not math.isfinite(x):
        return "nan" if math.isnan(x) else ("inf" if x > 0 else "-inf")
    return x


def _comment(meta: dict) -> str:
    return "".join(f"# {k}: {meta[k]}\n" for k in sorted(meta))


def _emit(out: Path, files: dict[str, str]) -> list[Path]:
    out.mkdir(parents=True, exist_ok=True)
    written = []
    for name in sorted(files):
        p = out / name
        p.write_text(files[name])
        written.append(p)
    return written


def _load_patients(cfg: RunConfig):
    path = cfg.input("patients")
    hr = cfg.raw.get("hospital_region")
    try:
        parsed = parse_patient_csv(path, cfg.raw.get("schema"), cfg.features, hr)
    except SchemaError as exc:
        raise InputError(f"{path}: {exc}") from None
    excluded: list = []
    rows = derive_features(parsed.records, cfg.features, excluded)
    return parsed, rows, excluded


def _hospital_region(cfg: RunConfig, parsed=None, instance=None) -> dict:
    if cfg.raw.get("hospital_region"):
        return dict(cfg.raw["hospital_region"])
    if instance is not None:
        return dict(instance.hospital_region)
    out = {}
    for rec in parsed.records if parsed else ():
        if rec.region:
            out.setdefault(rec.hospital, rec.region)
    if not out:
        raise ConfigError("no hospital-to-region mapping (set hospital_region or instance)")
    return out


def _instance(cfg: RunConfig, required: bool) -> CapacityInstance | None:
    if not required and cfg.raw.get("instance") is None:
        return None
    path = cfg.input("instance")
    try:
        return CapacityInstance.from_json(path).with_rule(cfg.staffing_rule)
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"{path}: bad instance: {exc}") from None


# -- fit-tree ----------------------------------------------------------------------

def cmd_fit_tree(cfg: RunConfig) -> dict[str, str]:
    parsed, rows, excluded = _load_patients(cfg)
    criterion = cfg.tree.get("criterion", cart.MSE)
    if criterion not in cart.CRITERIA:
        raise ConfigError(f"tree criterion must be one of {cart.CRITERIA}")
    target = cfg.tree.get("target", "los_days" if criterion == cart.MSE else "same_day")
    names = list(cfg.tree.get("features", DEFAULT_FEATURES))
    test_fraction = float(cfg.tree.get("test_fraction", 0.2))
    grid = cfg.tree.get("grid", {})
    try:
        base = cart.StoppingCriteria(**cfg.tree.get("stopping", {}))
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"bad stopping criteria: {exc}") from None
    if not rows:
        raise InputError("empty training set: no records survived parsing and the cohort filter")
    if test_fraction == 0:
        train, test = list(rows), []
    else:
        try:
            train, test = train_test_split(rows, test_fraction, cfg.seed)
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
    if not train:
        raise InputError("empty training set after the split")
    try:
        X_tr = cart.feature_matrix(train, names)
        X_te = cart.feature_matrix(test, names)
    except AttributeError as exc:
        raise ConfigError(f"unknown feature: {exc}") from None
    y_tr = [getattr(r, target) for r in train]
    y_te = [getattr(r, target) for r in test]
    try:
        result = cart.grid_search(X_tr, y_tr, X_te, y_te, criterion,
                                  grid.get("max_leaf_nodes", [2, 4, 8, 16, 30]),
                                  grid.get("min_samples_leaf", [1, 5, 20]), base, names)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    meta = cfg.meta("fit-tree")
    metric = result.metric
    buf = io.StringIO()
    buf.write(_comment(meta))
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["max_leaf_nodes", "min_samples_leaf", "n_leaves", f"train_{metric}",
                f"test_{metric}", "best"])
    for i, pt in enumerate(result.points):
        w.writerow([pt.max_leaf_nodes, pt.min_samples_leaf, pt.n_leaves,
                    f"{pt.train_score:.6f}", "" if math.isnan(pt.test_score) else f"{pt.test_score:.6f}",
                    int(i == result.best_index)])
    best = result.points[result.best_index]
    tree_doc = {"meta": meta, "target": target, "tree": result.best_tree.to_dict()}
    summary = {
        "meta": meta, "criterion": criterion, "target": target, "features": names,
        "metric": metric, "n_records": len(parsed.records), "n_rejects": len(parsed.rejects),
        "n_excluded": len(excluded), "n_train": len(train), "n_test": len(test),
        "best": {"max_leaf_nodes": best.max_leaf_nodes, "min_samples_leaf": best.min_samples_leaf,
                 "n_leaves": best.n_leaves, "train_score": _clean(best.train_score),
                 "test_score": _clean(best.test_score)},
        "grid": [{"max_leaf_nodes": p.max_leaf_nodes, "min_samples_leaf": p.min_samples_leaf,
                  "n_leaves": p.n_leaves, "train_score": _clean(p.train_score),
                  "test_score": _clean(p.test_score)} for p in result.points],
        "frailty_thresholds": cfg.features.frailty_thresholds,
    }
    files = {"tree.json": _dump(tree_doc), "grid_metrics.csv": buf.getvalue(),
             "fit_tree.json": _dump(summary),
             "tree.txt": _comment(meta) + cart.render_text(result.best_tree) + "\n"}
    if parsed.rejects:
        files["rejects.csv"] = _comment(meta) + write_rejects_csv(parsed.rejects)
    return files


# -- derive-demand -------------------------------------------------------------------

def _base_from_config(spec) -> dict[tuple[str, str], float]:
    """``{"COTE|R1": 16.67}`` or ``[["COTE", "R1", 16.67], ...]``."""
    out = {}
    items = spec.items() if isinstance(spec, dict) else ((f"{s}|{r}", v) for s, r, v in spec)
    for key, v in items:
        s, sep, r = key.partition("|")
        if not sep:
            raise ConfigError(f"demand base key {key!r} must be 'specialty|region'")
        out[(s, r)] = float(v)
    return out


def _tree_leaves(cfg: RunConfig, rows) -> list[int]:
    path = cfg.input("tree_file", str(cfg.out / "tree.json"), cfg.demand)
    try:
        doc = json.loads(path.read_text())
        tree = cart.DecisionTree.from_dict(doc.get("tree", doc))
    except (json.JSONDecodeError, KeyError, TypeError) as exc:
        raise InputError(f"{path}: not a tree file ({exc})") from None
    if tree.missing == "error":
        tree.missing = "majority"
    return cart.leaf_assignments(tree, cart.feature_matrix(rows, [f.name for f in tree.features]))


def cmd_derive_demand(cfg: RunConfig) -> dict[str, str]:
    d = cfg.demand
    inst = _instance(cfg, required=False)
    specialties = list(inst.specialties) if inst else None
    regions = list(inst.regions) if inst else None
    info: dict = {"scheme": cfg.scheme, "mode": cfg.mode}
    if cfg.scheme == "matrix":
        m = d.get("matrix")
        if m is None:
            raise ConfigError("matrix scheme needs demand.matrix")
        if isinstance(m, str):
            p = cfg.input("matrix", section=d)
            try:
                matrix = DemandMatrix.load(p)
            except (OSError, KeyError, ValueError) as exc:
                raise InputError(f"{p}: {exc}") from None
        else:
            try:
                matrix = explicit_scenarios(m["values"], m["probabilities"], m["specialties"],
                                            m["regions"], m.get("scenarios"))
            except (KeyError, ValueError) as exc:
                raise ConfigError(f"bad demand.matrix: {exc}") from None
    elif cfg.scheme == "percentage":
        deltas = d.get("deltas", [1.0])
        probs = d.get("probs", [1.0])
        if "base" in d:
            base = _base_from_config(d["base"])
            info["base_source"] = "config"
        else:
            window = float(d.get("window_days", 0))
            if not window > 0:
                raise ConfigError("demand.window_days must be positive")
            parsed, rows, _ = _load_patients(cfg)
            hr = _hospital_region(cfg, parsed, inst)
            if cfg.mode == "tree":
                base = cart_demand(rows, _tree_leaves(cfg, rows), window, hr)
            else:
                base = average_demand(rows, window, hr)
            info["base_source"] = "patients"
            info["window_days"] = window
        if specialties is None:
            specialties = sorted({s for s, _ in base})
            regions = sorted({r for _, r in base})
        try:
            matrix = percentage_scenarios(base, deltas, probs, specialties, regions,
                                          d.get("scenario_names"))
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
    else:
        parsed, rows, _ = _load_patients(cfg)
        if not rows:
            raise InputError("no patient rows to derive demand from")
        hr = _hospital_region(cfg, parsed, inst)
        leaves = _tree_leaves(cfg, rows) if cfg.mode == "tree" else None
        matrix = yearly_demand(rows, hr, leaves, specialties, regions)
    meta = cfg.meta("derive-demand")
    side = matrix.sidecar(meta)
    side["derivation"] = info
    return {"demand.csv": _comment(meta) + matrix.to_csv(), "demand.json": _dump(side)}


# -- plan / report ---------------------------------------------------------------------

def _heatmap_files(report: dict, meta: dict) -> dict[str, str]:
    files = {}
    for key in ("ev", "rp", "eev"):
        o = report[key]
        if "plan" not in o:
            continue
        plan = o["plan"]
        for mode, field in ((FIRST_STAGE, "heatmap_first_stage"), (COMBINED_MAX, "heatmap_combined_max")):
            stem = f"heatmap_{key}_{mode.replace('-', '_')}"
            title = f"{key.upper()} beds ({mode})"
            files[stem + ".csv"] = heatmap_csv(o[field], plan["specialties"], plan["hospitals"], meta)
            files[stem + ".svg"] = heatmap_svg(o[field], plan["specialties"], plan["hospitals"],
                                               title, meta)
    return files


def cmd_plan(cfg: RunConfig) -> dict[str, str]:
    inst = _instance(cfg, required=True)
    dpath = cfg.input("file", str(cfg.out / "demand.csv"), cfg.demand)
    side = cfg.path(cfg.demand.get("sidecar")) if cfg.demand.get("sidecar") else dpath.with_suffix(".json")
    if not side.is_file():
        raise InputError(f"demand sidecar: no such file {side}")
    try:
        demand = DemandMatrix.load(dpath, side)
    except (KeyError, ValueError) as exc:
        raise InputError(f"{dpath}: {exc}") from None
    meta = cfg.meta("plan")
    meta["instance"] = inst.name
    meta["staffing_rule"] = inst.staffing_rule
    meta["solver"] = cfg.solver
    try:
        report = evaluate(inst, demand, cfg.solver, cfg.raw.get("reference"),
                          cfg.raw.get("notes", ()), meta)
    except ModelError as exc:
        raise ConfigError(f"instance and demand do not fit together: {exc}") from None
    doc = report.to_dict()
    files = {"report.json": _dump(doc), "report.txt": render_table(doc)}
    files.update(_heatmap_files(doc, meta))
    return files


def cmd_report(cfg: RunConfig, source: Path | None = None) -> dict[str, str]:
    path = source or cfg.out / "report.json"
    if not path.is_file():
        raise InputError(f"report: no such file {path}")
    try:
        doc = json.loads(path.read_text())
        text = render_table(doc)
    except (json.JSONDecodeError, KeyError, TypeError) as exc:
        raise InputError(f"{path}: not a report ({exc})") from None
    files = {"report.txt": text}
    files.update(_heatmap_files(doc, doc.get("meta", {})))
    return files


COMMANDS = {"fit-tree": cmd_fit_tree, "derive-demand": cmd_derive_demand, "plan": cmd_plan,
            "report": cmd_report}


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="wardplanner", description=__doc__.splitlines()[0])
    ap.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON run config")
    common.add_argument("--out", help="output directory")
    common.add_argument("--seed", type=int, help="random seed (train/test split)")
    common.add_argument("--staffing-rule", choices=STAFFING_RULES)
    common.add_argument("--scheme", choices=SCHEMES)
    common.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)
    sub.add_parser("fit-tree", parents=[common], help="grid-search a CART model")
    sub.add_parser("derive-demand", parents=[common], help="write a demand matrix")
    sub.add_parser("plan", parents=[common], help="solve EV, RP and EEV and report VSS")
    rp = sub.add_parser("report", parents=[common], help="re-render a plan report")
    rp.add_argument("--input", help="report JSON (default: <out>/report.json)")
    return ap


def main(argv=None, environ=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        cfg = load_config(args, environ)
        if args.command == "report":
            files = cmd_report(cfg, Path(args.input) if args.input else None)
        else:
            files = COMMANDS[args.command](cfg)
        written = _emit(cfg.out, files)
    except ConfigError as exc:
        print(f"wardplanner: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except InputError as exc:
        print(f"wardplanner: input error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except SolverError as exc:
        print(f"wardplanner: solver error: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    except OSError as exc:
        print(f"wardplanner: I/O error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    for p in written:
        print(p)
    return EXIT_OK


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
