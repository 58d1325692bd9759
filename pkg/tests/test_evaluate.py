import json
import math

import numpy as np
import pytest

from wardplanner.capacity import CapacityInstance
from wardplanner.demand import DemandMatrix, percentage_scenarios
from wardplanner.evaluate import (EvaluationReport, evaluate, render_table, solve_eev, solve_ev,
                                  solve_rp, vss)
from wardplanner.synthetic import random_instance

from conftest import ILLUSTRATIVE_BASE


@pytest.fixture(scope="module")
def illustrative_report():
    from conftest import DATA
    inst = CapacityInstance.from_json(DATA / "illustrative_instance.json")
    dem = percentage_scenarios(ILLUSTRATIVE_BASE, [1.0, 1.2, 0.8], [0.4, 0.3, 0.3],
                               ["COTE", "T&O"], ["R1"])
    return evaluate(inst, dem, reference={"ev": 2050, "rp": 2185, "eev": 2241})


def test_vss_examples():
    assert vss(2241, 2185) == (56, pytest.approx(56 / 2241))
    assert round(100 * vss(2241, 2185)[1], 1) == 2.5
    assert vss(10.0, 10.0) == (0.0, 0.0)
    d, f = vss(959267, 923828)
    assert d == 35439 and round(100 * f, 1) == 3.7
    assert vss(0.0, 0.0) == (0.0, None)
    assert vss(math.inf, 5.0) == (math.inf, None)
    with pytest.raises(ValueError):
        vss(math.nan, 1.0)


def test_illustrative_quartet(illustrative_report):
    r = illustrative_report
    assert r.ev.value == 2050
    assert 2050 <= r.rp.value <= 2241
    assert r.rp.value <= r.eev.value
    assert r.vss == r.eev.value - r.rp.value >= 0
    assert r.check() == []
    doc = r.to_dict()
    assert doc["reference"]["rp"] == 2185
    assert doc["ev_le_rp"] is True
    assert doc["ev"]["heatmap_first_stage"] == [[0, 17], [20, 0]]


def test_eev_keeps_ev_first_stage(illustrative_report):
    r = illustrative_report
    assert (r.eev.plan.x_bed == r.ev.plan.x_bed).all()
    assert (r.eev.plan.x_staff == r.ev.plan.x_staff).all()


def test_report_rendering(illustrative_report):
    text = illustrative_report.render_table()
    assert "EV" in text and "RP" in text and "EEV" in text
    assert "2,050.00" in text and "reference RP: 2185" in text
    assert "VSS = EEV - RP" in text
    doc = json.loads(illustrative_report.to_json())
    assert render_table(doc) == text


def test_zero_demand(illustrative):
    zero = percentage_scenarios({("COTE", "R1"): 0.0, ("T&O", "R1"): 0.0}, [1.0, 1.2],
                                [0.5, 0.5], ["COTE", "T&O"], ["R1"])
    r = evaluate(illustrative, zero)
    assert (r.ev.value, r.rp.value, r.eev.value, r.vss) == (0, 0, 0, 0)
    assert r.vss_fraction_eev is None


def test_single_scenario_ev_equals_eev():
    inst, dem = random_instance(np.random.default_rng(2), 2, 2, 1)
    ev = solve_ev(inst, dem)
    eev = solve_eev(inst, dem, ev.plan)
    assert eev.value == pytest.approx(ev.value)


def test_infeasible_eev_is_reported():
    # first-stage staff limits are loose, second-stage ones are zero: the EV plan
    # covers mean demand but cannot recourse to the high scenario
    inst = CapacityInstance(["A"], ["H1"], ["R1"], ["b5"], {"H1": "R1"}, [[10.0]], [[12.0]],
                            [5.0], [6.0], [[0.5]], [[10.0]], ub_staff_stage2=[0.0])
    dem = DemandMatrix(["A"], ["R1"], ["lo", "hi"], [[[2.0, 6.0]]], [0.5, 0.5])
    r = evaluate(inst, dem)
    assert r.ev.optimal and r.rp.optimal
    assert r.eev.value == math.inf and r.vss == math.inf
    assert any("EEV = +inf" in n for n in r.notes)
    doc = r.to_dict()
    assert doc["eev"]["value"] == "inf" and doc["vss"] == "inf"
    assert "inf" in render_table(doc)


def test_infeasible_instance_reports_status():
    inst = CapacityInstance(["A"], ["H1"], ["R1"], ["b5"], {"H1": "R1"}, [[10.0]], [[12.0]],
                            [5.0], [6.0], [[0.5]], [[1.0]])
    dem = DemandMatrix(["A"], ["R1"], ["k"], [[[5.0]]], [1.0])
    r = evaluate(inst, dem)
    assert r.ev.status == "infeasible" and r.eev.status == "no-ev-plan"
    assert "n/a" in r.render_table()


def test_random_invariants_small():
    rng = np.random.default_rng(77)
    for _ in range(10):
        inst, dem = random_instance(rng, 2, 2, int(rng.integers(2, 4)))
        r = evaluate(inst, dem)
        assert r.check() == []
        assert r.rp.value <= r.eev.value + 1e-6


def test_duplicate_scenarios_do_not_change_rp(illustrative):
    one = percentage_scenarios(ILLUSTRATIVE_BASE, [1.2, 0.8], [0.5, 0.5], ["COTE", "T&O"], ["R1"])
    dup = percentage_scenarios(ILLUSTRATIVE_BASE, [1.2, 1.2, 0.8], [0.25, 0.25, 0.5],
                               ["COTE", "T&O"], ["R1"])
    assert solve_rp(illustrative, one).value == pytest.approx(solve_rp(illustrative, dup).value)
