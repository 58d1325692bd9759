import csv
import json

import pytest

from wardplanner import cart
from wardplanner.cli import EXIT_CONFIG, EXIT_INPUT, EXIT_OK, config_hash, main
from wardplanner.patients import derive_features, parse_patient_csv, train_test_split

from conftest import DATA


def run(*argv, env=None):
    return main(list(argv), env or {})


def write_config(tmp_path, doc, name="run.json"):
    p = tmp_path / name
    p.write_text(json.dumps(doc))
    return str(p)


def data_config(tmp_path, name, **changes):
    doc = json.loads((DATA / name).read_text())
    for key in ("patients", "instance"):
        if key in doc:
            doc[key] = str(DATA / doc[key])
    doc.update(changes)
    return write_config(tmp_path, doc)


def body(text):
    return [ln for ln in text.splitlines() if not ln.startswith("#")]


# -- fit-tree ---------------------------------------------------------------------------

def test_fit_tree_table4(tmp_path):
    out = tmp_path / "o"
    assert run("fit-tree", "--config", str(DATA / "table4_run.json"), "--out", str(out)) == EXIT_OK
    rows = list(csv.DictReader(body((out / "grid_metrics.csv").read_text())))
    assert len(rows) == 4
    assert sum(int(r["best"]) for r in rows) == 1
    # recompute the test R^2 of every grid point independently
    recs = parse_patient_csv(DATA / "table4_patients.csv").records
    feats = derive_features(recs)
    train, test = train_test_split(feats, 0.2, 7)
    names = json.loads((out / "fit_tree.json").read_text())["features"]
    for r in rows:
        st = cart.StoppingCriteria(min_samples_leaf=int(r["min_samples_leaf"]),
                                   max_leaf_nodes=int(r["max_leaf_nodes"]))
        tree = cart.fit_tree(cart.feature_matrix(train, names), [x.los_days for x in train],
                             cart.MSE, st, names, missing="majority")
        pred = cart.predict_many(tree, cart.feature_matrix(test, names))
        r2 = cart.r2_score(pred, [x.los_days for x in test])
        assert float(r["test_r2"]) == pytest.approx(r2, abs=1e-6)
    doc = json.loads((out / "tree.json").read_text())
    tree = cart.DecisionTree.from_dict(doc["tree"])
    assert tree.criterion == "mse"
    assert doc["meta"]["seed"] == 7


def test_fit_tree_classification_identical_labels(tmp_path):
    cfg = data_config(tmp_path, "table4_run.json",
                      tree={"criterion": "gini", "grid": {"max_leaf_nodes": [2],
                                                          "min_samples_leaf": [1]}})
    assert run("fit-tree", "--config", cfg, "--out", str(tmp_path / "o")) == EXIT_OK
    summary = json.loads((tmp_path / "o" / "fit_tree.json").read_text())
    assert summary["target"] == "same_day"
    assert summary["best"]["test_score"] == 1.0


def test_missing_input_leaves_no_outputs(tmp_path):
    cfg = write_config(tmp_path, {"patients": "nope.csv"})
    out = tmp_path / "o"
    assert run("fit-tree", "--config", cfg, "--out", str(out)) == EXIT_INPUT
    assert not out.exists()
    assert run("plan", "--config", str(tmp_path / "absent.json"), "--out", str(out)) == EXIT_INPUT


def test_empty_training_set(tmp_path):
    p = tmp_path / "p.csv"
    p.write_text((DATA / "table4_patients.csv").read_text().splitlines()[0] + "\n")
    cfg = write_config(tmp_path, {"patients": str(p), "hospital_region": {"H1": "R1"}})
    assert run("fit-tree", "--config", cfg, "--out", str(tmp_path / "o")) == EXIT_INPUT


def test_bad_config_values(tmp_path):
    for doc in ({"seed": "x"}, {"solver": "cplex"}, {"demand": {"scheme": "weekly"}},
                {"features": {"bogus": 1}}):
        cfg = write_config(tmp_path, doc)
        assert run("derive-demand", "--config", cfg, "--out", str(tmp_path / "o")) == EXIT_CONFIG


# -- derive-demand ------------------------------------------------------------------------

def test_averages_demand_table4(tmp_path):
    out = tmp_path / "o"
    assert run("derive-demand", "--config", str(DATA / "table4_run.json"), "--out", str(out)) == 0
    rows = list(csv.DictReader(body((out / "demand.csv").read_text())))
    base = {r["specialty"]: float(r["value"]) for r in rows if r["scenario"] == "k0"}
    assert round(base["COTE"], 2) == 16.67
    side = json.loads((out / "demand.json").read_text())
    assert side["probabilities"] == [0.4, 0.3, 0.3]
    assert side["meta"]["seed"] == 7


def test_single_leaf_tree_matches_averages(tmp_path):
    recs = parse_patient_csv(DATA / "table4_patients.csv").records
    feats = derive_features(recs)
    names = ["specialty", "hospital"]
    tree = cart.fit_tree(cart.feature_matrix(feats, names), [f.los_days for f in feats], cart.MSE,
                         cart.StoppingCriteria(min_samples_split=100), names)
    assert tree.n_leaves == 1
    (tmp_path / "tree.json").write_text(json.dumps({"tree": tree.to_dict()}))
    avg = data_config(tmp_path, "table4_run.json")
    assert run("derive-demand", "--config", avg, "--out", str(tmp_path / "a")) == 0
    doc = json.loads((DATA / "table4_run.json").read_text())
    doc["demand"].update(mode="tree", tree_file=str(tmp_path / "tree.json"))
    doc["patients"] = str(DATA / doc["patients"])
    doc["instance"] = str(DATA / doc["instance"])
    tr = write_config(tmp_path, doc, "tree_run.json")
    assert run("derive-demand", "--config", tr, "--out", str(tmp_path / "t")) == 0
    a = body((tmp_path / "a" / "demand.csv").read_text())
    t = body((tmp_path / "t" / "demand.csv").read_text())
    assert a == t


def test_matrix_scheme(tmp_path):
    m = {"specialties": ["COTE"], "regions": ["R1"], "scenarios": ["a", "b"],
         "values": [[[3.0, 5.0]]], "probabilities": [0.5, 0.5]}
    cfg = write_config(tmp_path, {"demand": {"scheme": "matrix", "matrix": m}})
    assert run("derive-demand", "--config", cfg, "--out", str(tmp_path / "o")) == 0
    rows = list(csv.DictReader(body((tmp_path / "o" / "demand.csv").read_text())))
    assert [float(r["value"]) for r in rows] == [3.0, 5.0]
    m["probabilities"] = [0.5, 0.6]
    cfg = write_config(tmp_path, {"demand": {"scheme": "matrix", "matrix": m}})
    assert run("derive-demand", "--config", cfg, "--out", str(tmp_path / "bad")) == EXIT_CONFIG
    assert not (tmp_path / "bad").exists()


def test_window_must_be_positive(tmp_path):
    cfg = data_config(tmp_path, "table4_run.json")
    env = {"WARDPLANNER_DEMAND__WINDOW_DAYS": "0"}
    assert run("derive-demand", "--config", cfg, "--out", str(tmp_path / "o"), env=env) == EXIT_CONFIG


# -- plan / report --------------------------------------------------------------------------

@pytest.fixture(scope="module")
def illustrative_run(tmp_path_factory):
    out = tmp_path_factory.mktemp("ill")
    cfg = str(DATA / "illustrative_run.json")
    assert main(["derive-demand", "--config", cfg, "--out", str(out)], {}) == 0
    assert main(["plan", "--config", cfg, "--out", str(out)], {}) == 0
    return cfg, out


def test_plan_illustrative(illustrative_run):
    _, out = illustrative_run
    doc = json.loads((out / "report.json").read_text())
    assert doc["ev"]["value"] == 2050
    assert 2050 <= doc["rp"]["value"] <= 2241
    assert doc["vss"] == doc["eev"]["value"] - doc["rp"]["value"] >= 0
    assert doc["reference"]["eev"] == 2241
    for key in ("ev", "rp", "eev"):
        for mode in ("first_stage", "combined_max"):
            assert (out / f"heatmap_{key}_{mode}.csv").is_file()
            assert (out / f"heatmap_{key}_{mode}.svg").is_file()


def test_outputs_embed_hash_and_seed(illustrative_run):
    cfg, out = illustrative_run
    h = config_hash({k: v for k, v in json.loads(open(cfg).read()).items()})
    for p in out.iterdir():
        text = p.read_text()
        assert "config_hash" in text and "seed" in text, p.name
    assert json.loads((out / "report.json").read_text())["meta"]["config_hash"] == h


def test_rerun_is_byte_identical(illustrative_run, tmp_path):
    cfg, out = illustrative_run
    assert run("derive-demand", "--config", cfg, "--out", str(tmp_path)) == 0
    assert run("plan", "--config", cfg, "--out", str(tmp_path)) == 0
    for name in ("report.json", "demand.json", "demand.csv", "report.txt"):
        assert (tmp_path / name).read_bytes() == (out / name).read_bytes()


def test_report_command(illustrative_run, tmp_path):
    _, out = illustrative_run
    assert run("report", "--input", str(out / "report.json"), "--out", str(tmp_path)) == 0
    assert (tmp_path / "report.txt").read_text() == (out / "report.txt").read_text()
    assert run("report", "--out", str(tmp_path / "none")) == EXIT_INPUT


def test_zero_demand_plan(tmp_path):
    cfg = write_config(tmp_path, {
        "instance": str(DATA / "illustrative_instance.json"),
        "demand": {"scheme": "percentage", "base": {"COTE|R1": 0, "T&O|R1": 0},
                   "deltas": [1.0, 1.2], "probs": [0.5, 0.5]}})
    assert run("derive-demand", "--config", cfg, "--out", str(tmp_path / "o")) == 0
    assert run("plan", "--config", cfg, "--out", str(tmp_path / "o")) == 0
    doc = json.loads((tmp_path / "o" / "report.json").read_text())
    assert [doc[k]["value"] for k in ("ev", "rp", "eev")] == [0, 0, 0]
    assert doc["ev"]["heatmap_first_stage"] == [[0, 0], [0, 0]]


def test_infeasible_plan_is_a_finding(tmp_path):
    cfg = write_config(tmp_path, {
        "instance": str(DATA / "illustrative_instance.json"),
        "demand": {"scheme": "percentage", "base": {"COTE|R1": 500, "T&O|R1": 1},
                   "deltas": [1.0], "probs": [1.0]}})
    assert run("derive-demand", "--config", cfg, "--out", str(tmp_path / "o")) == 0
    assert run("plan", "--config", cfg, "--out", str(tmp_path / "o")) == EXIT_OK
    doc = json.loads((tmp_path / "o" / "report.json").read_text())
    assert doc["ev"]["status"] == "infeasible"


def test_precedence_file_env_flag(tmp_path):
    cfg = data_config(tmp_path, "illustrative_run.json", seed=1)
    out = tmp_path / "o"
    env = {"WARDPLANNER_SEED": "2", "WARDPLANNER_STAFFING_RULE": "cumulative"}
    assert run("derive-demand", "--config", cfg, "--out", str(out), env=env) == 0
    assert json.loads((out / "demand.json").read_text())["meta"]["seed"] == 2
    assert run("derive-demand", "--config", cfg, "--out", str(out), "--seed", "3", env=env) == 0
    assert json.loads((out / "demand.json").read_text())["meta"]["seed"] == 3
    assert run("plan", "--config", cfg, "--out", str(out), "--staffing-rule", "per-band",
               env=env) == 0
    assert json.loads((out / "report.json").read_text())["meta"]["staffing_rule"] == "per-band"


def test_scheme_flag_overrides(tmp_path):
    cfg = data_config(tmp_path, "illustrative_run.json")
    assert run("derive-demand", "--config", cfg, "--out", str(tmp_path / "o"),
               "--scheme", "matrix") == EXIT_CONFIG
