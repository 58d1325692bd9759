"""Property tests over generated inputs."""
import io
import math
from collections import Counter
from datetime import date, timedelta

import numpy as np
from hypothesis import given, settings
from hypothesis import strategies as st

from wardplanner.capacity import build_deterministic, build_stochastic, extract_solution
from wardplanner.cart import GINI, MSE, StoppingCriteria, fit_tree, gini, leaf_assignments, node_mse, predict
from wardplanner.demand import DemandMatrix, mean_demand, percentage_scenarios
from wardplanner.evaluate import evaluate
from wardplanner.heatmaps import color_step
from wardplanner.milp import LinearProgram, fix_variables, solve_lp, solve_milp
from wardplanner.patients import (PatientRecord, ScanEvent, parse_patient_csv, train_test_split,
                                  write_patient_csv)
from wardplanner.synthetic import random_instance

from oracles import enumerate_milp, random_integer_lp, random_dataset

seeds = st.integers(0, 2**32 - 1)
text = st.text(st.characters(whitelist_categories=("Lu", "Ll", "Nd"), whitelist_characters=" &-'"),
               min_size=1, max_size=8).map(str.strip).filter(bool)


@st.composite
def records(draw):
    adm = draw(st.dates(date(2000, 1, 1), date(2030, 1, 1)))
    dis = adm + timedelta(days=draw(st.integers(0, 60)))
    dob = adm - timedelta(days=draw(st.integers(0, 40000)))
    scans = tuple(ScanEvent(draw(text), adm, draw(st.one_of(st.none(), st.just(dis))))
                  for _ in range(draw(st.integers(0, 3))))
    return PatientRecord(draw(text), adm, dis, draw(text), draw(text), draw(text), draw(text), dob,
                         draw(st.integers(0, 9)), diagnosis=draw(st.one_of(st.just(""), text)),
                         scan_events=scans)


@given(st.lists(records(), max_size=6))
def test_patient_csv_round_trip(recs):
    recs = [r.__class__(**{**r.__dict__, "patient_id": f"P{i}", "hospital": f"H{i}"})
            for i, r in enumerate(recs)]
    back = parse_patient_csv(io.StringIO(write_patient_csv(recs)))
    assert back.rejects == [] and back.records == recs


@given(st.integers(1, 300), st.floats(0.01, 0.99), seeds)
def test_split_is_partition(n, frac, seed):
    rows = list(range(n))
    train, test = train_test_split(rows, frac, seed)
    assert sorted(train + test) == rows and not set(train) & set(test)
    assert len(test) == math.floor(frac * n + 0.5)


@given(st.lists(st.floats(-1e3, 1e3), min_size=1, max_size=30))
def test_node_mse_nonnegative(ys):
    assert node_mse(ys) >= 0


@given(st.lists(st.integers(0, 4), min_size=1, max_size=30))
def test_gini_bounds(labels):
    c = len(set(labels))
    assert 0 <= gini(labels) <= 1 - 1 / c + 1e-12


@given(seeds, st.sampled_from([MSE, GINI]), st.integers(1, 3), st.one_of(st.none(), st.integers(2, 6)))
@settings(max_examples=40)
def test_tree_structure(seed, crit, msl, mln):
    X, y = random_dataset(np.random.default_rng(seed), crit)
    tree = fit_tree(X, y, crit, StoppingCriteria(min_samples_leaf=msl, max_leaf_nodes=mln))
    for nd in tree.nodes():
        if not nd.is_leaf:
            kids = (nd.left.n * nd.left.impurity + nd.right.n * nd.right.impurity) / nd.n
            assert kids <= nd.impurity + 1e-12
            assert nd.split.impurity_decrease >= 0
            assert nd.left.n + nd.right.n == nd.n
    leaves = tree.leaves()
    assert all(lf.n >= msl for lf in leaves)
    assert mln is None or len(leaves) <= mln
    ids = leaf_assignments(tree, X)
    by_id = {lf.id: lf for lf in leaves}
    for row, lid in zip(X, ids):
        leaf = by_id[lid]
        if crit == MSE:
            assert predict(tree, row) == leaf.value
    assert sorted(Counter(ids).values()) == sorted(lf.n for lf in leaves)


@given(st.lists(st.floats(0, 100), min_size=1, max_size=4), st.floats(0.01, 0.5), st.floats(0, 1))
def test_mean_preserving_deltas(vals, d, w):
    base = {(f"S{i}", "R"): v for i, v in enumerate(vals)}
    # deltas 1-d and 1+d with equal weight, plus 1.0
    p = [w, (1 - w) / 2, (1 - w) / 2]
    p[-1] = 1 - p[0] - p[1]
    m = percentage_scenarios(base, [1.0, 1 - d, 1 + d], p)
    for k, v in mean_demand(m).items():
        assert abs(v - base[k]) <= 1e-9 * max(1, abs(v))


@given(seeds)
@settings(max_examples=25)
def test_milp_matches_enumeration(seed):
    lp = random_integer_lp(np.random.default_rng(seed), LinearProgram, n_max=4, ub_max=6)
    status, obj = enumerate_milp(lp)
    res = solve_milp(lp, backend="bnb")
    assert res.status == status
    if status == "optimal":
        assert res.objective == obj
        assert solve_lp(lp).objective <= obj + 1e-9


@given(seeds)
@settings(max_examples=25)
def test_fixing_never_improves(seed):
    rng = np.random.default_rng(seed)
    lp = random_integer_lp(rng, LinearProgram, n_max=4, ub_max=6)
    full = solve_milp(lp)
    if full.optimal:
        j = int(rng.integers(lp.num_variables))
        fixed = solve_milp(fix_variables(lp, {j: float(rng.integers(0, lp.variables[j].ub + 1))}))
        assert not fixed.optimal or fixed.objective >= full.objective


@given(seeds, st.floats(1.0, 1.5))
@settings(max_examples=15)
def test_demand_scaling_is_monotone(seed, lam):
    inst, dem = random_instance(np.random.default_rng(seed), 2, 2, 1)
    a = solve_milp(build_deterministic(inst, dem).lp)
    scaled = DemandMatrix(dem.specialties, dem.regions, dem.scenarios, dem.values * lam,
                          dem.probabilities)
    b = solve_milp(build_deterministic(inst, scaled).lp)
    if a.optimal and b.optimal:
        assert b.objective >= a.objective
    if not a.optimal:
        assert not b.optimal


@given(seeds)
@settings(max_examples=15)
def test_single_scenario_gap_needs_a_stage1_limit(seed):
    # with recourse no cheaper than planning, a single-scenario two-stage plan can
    # only beat the deterministic one by going past a first-stage-only limit
    rng = np.random.default_rng(seed)
    inst, dem = random_instance(rng, int(rng.integers(2, 4)), int(rng.integers(2, 4)), 1)
    det = build_deterministic(inst, dem)
    sto = build_stochastic(inst, dem)
    d, s = solve_milp(det.lp), solve_milp(sto.lp)
    assert d.optimal and s.optimal
    assert s.objective <= d.objective + 1e-9
    if s.objective < d.objective - 1e-9:
        plan = extract_solution(s, sto)
        bed = plan.x_bed + plan.u_bed[:, :, 0]
        staff = plan.x_staff + plan.u_staff[:, :, :, 0]
        assert ((bed > inst.capacity).any() or (bed.sum(axis=0) > inst.ub_bed_stage1).any()
                or (staff.sum(axis=(0, 2)) > inst.ub_staff_stage1).any())


@given(seeds)
@settings(max_examples=10)
def test_report_invariants(seed):
    rng = np.random.default_rng(seed)
    inst, dem = random_instance(rng, 2, 2, int(rng.integers(2, 4)))
    r = evaluate(inst, dem)
    assert r.check() == []
    if r.rp.optimal and r.eev.optimal:
        assert r.rp.value <= r.eev.value and r.vss >= 0


@given(st.floats(-10, 10), st.floats(-10, 10), st.floats(0, 5), st.floats(0.1, 5))
def test_color_step_monotone(a, b, lo, width):
    lo, hi = lo, lo + width
    if a <= b:
        assert color_step(a, lo, hi) <= color_step(b, lo, hi)
