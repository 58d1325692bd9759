import json
import math

import numpy as np
import pytest

from wardplanner.cart import (GINI, MSE, DecisionTree, StoppingCriteria, accuracy_score,
                              best_split, feature_matrix, fit_tree, gini, grid_search,
                              infer_specs, leaf_assignments, node_mse, predict, predict_many,
                              r2_score, render_text)

from conftest import TABLE4_LOS
from oracles import (best_first_tree, brute_best_split, category_orders, node_members,
                     random_dataset, training_impurity, variance)

TABLE4_FEATURES = ["admission_method", "admission_source", "age_years", "age_band",
                   "frailty_continuous", "hospital", "specialty"]


@pytest.fixture
def table4_xy(table4_rows):
    return feature_matrix(table4_rows, TABLE4_FEATURES), [r.los_days for r in table4_rows]


# -- impurity ---------------------------------------------------------------

def test_node_mse_examples():
    assert node_mse([3, 3, 3]) == 0
    assert node_mse([1, 3]) == 1.0
    with pytest.raises(ValueError):
        node_mse([])


def test_node_mse_table4():
    # the fixture LOS values sum to 44, so the mean is 44/15
    assert sum(TABLE4_LOS) == 44
    assert node_mse(TABLE4_LOS) == pytest.approx(float(variance(TABLE4_LOS)), abs=1e-12)
    assert node_mse(TABLE4_LOS) == pytest.approx(2.462222, abs=1e-6)


def test_gini_examples(table4_rows):
    assert gini(["a", "a"]) == 0
    assert gini([0, 1, 0, 1]) == 0.5
    assert gini([r.same_day for r in table4_rows]) == 0
    with pytest.raises(ValueError):
        gini([])


# -- stopping criteria ----------------------------------------------------------

@pytest.mark.parametrize("kw", [{"max_leaf_nodes": 1}, {"min_samples_split": 1},
                                {"min_samples_leaf": 0}, {"min_weight_fraction_leaf": 0.6},
                                {"max_depth": 0}, {"min_impurity_decrease": -1.0}])
def test_stopping_ranges(kw):
    with pytest.raises(ValueError):
        StoppingCriteria(**kw)


# -- splits -----------------------------------------------------------------------

def test_perfect_binary_feature():
    X = [[0], [0], [1], [1]]
    s = best_split(X, [0, 0, 10, 10])
    assert s.feature == 0 and s.threshold == 0.5 and s.impurity_decrease == 25.0
    tree = fit_tree(X, [0, 0, 10, 10])
    assert tree.depth == 1 and tree.n_leaves == 2
    assert all(leaf.impurity == 0 for leaf in tree.leaves())
    assert predict(tree, [0]) == 0 and predict(tree, [1]) == 10


def test_constant_target_has_no_split():
    assert best_split([[1], [2], [3]], [4, 4, 4]) is None


def test_mse_needs_numeric_target():
    with pytest.raises(ValueError):
        best_split([[1], [2]], ["a", "b"], MSE)


def test_min_impurity_decrease_blocks_split():
    assert best_split([[0], [1]], [0, 2], stopping=StoppingCriteria(min_impurity_decrease=1.5)) is None
    assert best_split([[0], [1]], [0, 2], stopping=StoppingCriteria(min_impurity_decrease=1.0))


def test_table4_best_split_matches_oracle(table4_xy):
    X, y = table4_xy
    s = best_split(X, y, MSE, feature_names=TABLE4_FEATURES)
    ref = brute_best_split(X, y, "mse")
    specs = infer_specs(X, TABLE4_FEATURES)
    assert s.feature == ref["feature"]
    assert s.key(specs[s.feature]) == ref["key"]
    assert s.impurity_decrease == pytest.approx(float(ref["gain"]), abs=1e-12)


def test_table4_best_first_matches_oracle(table4_xy):
    X, y = table4_xy
    tree = fit_tree(X, y, MSE, StoppingCriteria(max_leaf_nodes=4), TABLE4_FEATURES)
    parts = best_first_tree(X, y, "mse", 4)
    assert tree.n_leaves == 4
    assert tree.training_impurity() == pytest.approx(float(training_impurity(parts, y, "mse")),
                                                     abs=1e-12)


def test_categorical_subset_split():
    # categories a and c share a target, b differs: needs the non-contiguous subset {a, c}
    X = [["a"], ["b"], ["c"], ["a"], ["b"], ["c"]]
    y = ["x", "y", "x", "x", "y", "x"]
    s = best_split(X, y, GINI)
    assert s.left == frozenset({"a", "c"}) and s.impurity_decrease == pytest.approx(4 / 9)


def test_many_categories_regression_is_exact():
    rng = np.random.default_rng(4)
    cats = [f"k{i:02d}" for i in range(15)]
    X = [[c] for c in cats for _ in range(2)]
    y = [float(rng.integers(0, 20)) for _ in X]
    s = best_split(X, y, MSE)
    # mean-ordered contiguous cuts are optimal for MSE: check against all cut points of the ordering
    means = {c: np.mean([y[i] for i in range(len(X)) if X[i][0] == c]) for c in cats}
    order = sorted(cats, key=lambda c: means[c])
    best = 0.0
    parent = node_mse(y)
    for k in range(1, len(order)):
        left = set(order[:k])
        ly = [y[i] for i in range(len(X)) if X[i][0] in left]
        ry = [y[i] for i in range(len(X)) if X[i][0] not in left]
        best = max(best, parent - (len(ly) * node_mse(ly) + len(ry) * node_mse(ry)) / len(y))
    assert s.impurity_decrease == pytest.approx(best, abs=1e-9)


# -- fitting ----------------------------------------------------------------------

@pytest.mark.parametrize("criterion", [MSE, GINI])
def test_oracle_equivalence_small(criterion):
    rng = np.random.default_rng(21 if criterion == MSE else 22)
    for _ in range(8):
        X, y = random_dataset(rng, criterion, n_max=14, f_max=4)
        mln = int(rng.integers(2, 6))
        msl = int(rng.integers(1, 3))
        tree = fit_tree(X, y, criterion, StoppingCriteria(min_samples_leaf=msl, max_leaf_nodes=mln))
        parts = best_first_tree(X, y, criterion, mln, min_leaf=msl)
        assert tree.training_impurity() == pytest.approx(
            float(training_impurity(parts, y, criterion)), abs=1e-9)
        assert sorted(sorted(p) for p in parts) == sorted(
            sorted(i for i, a in enumerate(leaf_assignments(tree, X)) if a == leaf.id)
            for leaf in tree.leaves())


def test_every_node_split_is_argmax():
    rng = np.random.default_rng(5)
    X, y = random_dataset(rng, MSE, n_max=18, f_max=5)
    tree = fit_tree(X, y, MSE)
    cats = category_orders(X)
    for node, idx in node_members(tree, X):
        if node.is_leaf:
            continue
        ref = brute_best_split(X, y, "mse", idx=idx, cats_of=cats)
        left = [i for i in idx if tree._goes_left(node.split, X[i][node.split.feature])]
        assert sorted(left) == sorted(ref["left"])
        assert node.split.impurity_decrease == pytest.approx(float(ref["gain"]), abs=1e-9)


def test_depth_first_without_leaf_cap():
    X = [[i] for i in range(8)]
    y = [0, 0, 1, 1, 5, 5, 9, 9]
    tree = fit_tree(X, y, MSE, StoppingCriteria(max_depth=2))
    assert tree.depth == 2 and tree.n_leaves == 4
    ids = [nd.id for nd in tree.nodes()]
    assert ids == list(range(len(ids)))


def test_root_only_tree_predicts_mean(table4_xy):
    X, y = table4_xy
    tree = fit_tree(X, y, MSE, StoppingCriteria(max_depth=1, min_samples_split=100))
    assert tree.n_leaves == 1
    assert predict(tree, X[0]) == pytest.approx(44 / 15)
    assert set(leaf_assignments(tree, X)) == {0}


def test_leaf_constraints_and_consistency():
    rng = np.random.default_rng(9)
    for crit in (MSE, GINI):
        X, y = random_dataset(rng, crit, n_max=20, f_max=5)
        st = StoppingCriteria(min_samples_leaf=2, max_leaf_nodes=3)
        tree = fit_tree(X, y, crit, st)
        assert tree.n_leaves <= 3
        assert all(leaf.n >= 2 for leaf in tree.leaves())
        ids = leaf_assignments(tree, X)
        leaves = {leaf.id: leaf for leaf in tree.leaves()}
        for row, lid in zip(X, ids):
            assert tree.route(row) is leaves[lid]
        assert sum(leaf.n for leaf in tree.leaves()) == len(y)


def test_classification_majority_ties_go_to_lowest_class():
    tree = fit_tree([[0], [0]], ["b", "a"], GINI)
    assert predict(tree, [0]) == "a"


def test_unseen_category_and_missing_values():
    X = [["a"], ["a"], ["a"], ["b"]]
    tree = fit_tree(X, [1.0, 1.0, 1.0, 5.0], MSE)
    assert predict(tree, ["zzz"]) == 1.0  # majority side
    with pytest.raises(ValueError):
        predict(tree, [None])
    tree.missing = "majority"
    assert predict(tree, [None]) == 1.0


def test_json_round_trip(table4_xy):
    X, y = table4_xy
    tree = fit_tree(X, y, MSE, StoppingCriteria(max_leaf_nodes=5), TABLE4_FEATURES)
    back = DecisionTree.from_json(tree.to_json())
    assert predict_many(back, X) == predict_many(tree, X)
    assert json.loads(back.to_json()) == json.loads(tree.to_json())
    text = render_text(tree)
    assert text.count("leaf ") == tree.n_leaves


# -- scores -----------------------------------------------------------------------

def test_scores():
    a = [1.0, 2.0, 4.0]
    assert r2_score(a, a) == 1.0 and accuracy_score(a, a) == 1.0
    assert r2_score([np.mean(a)] * 3, a) == pytest.approx(0.0)
    assert accuracy_score([1, 0, 1], [1, 1, 1]) == pytest.approx(2 / 3)
    with pytest.raises(ValueError):
        r2_score([1, 2], [3, 3])
    with pytest.raises(ValueError):
        accuracy_score([], [])


def test_grid_search_picks_best_test_score():
    rng = np.random.default_rng(0)
    X = [[float(v)] for v in rng.uniform(0, 10, 80)]
    y = [math.floor(x[0]) + rng.normal(0, 0.1) for x in X]
    res = grid_search(X[:60], y[:60], X[60:], y[60:], MSE, (2, 4, 8), (1, 5))
    assert len(res.points) == 6
    best = res.points[res.best_index]
    assert best.test_score == max(p.test_score for p in res.points)
    assert res.best_tree.n_leaves == best.n_leaves


def test_thirty_leaf_classifier_on_corpus():
    from wardplanner.patients import derive_features
    from wardplanner.synthetic import corpus
    rows = derive_features(corpus(1500, seed=3))
    names = ["admission_method", "admission_source", "age_years", "frailty_continuous",
             "hospital", "specialty"]
    X = feature_matrix(rows, names)
    tree = fit_tree(X, [r.same_day for r in rows], GINI, StoppingCriteria(max_leaf_nodes=30), names)
    assert len(set(leaf_assignments(tree, X))) <= 30
