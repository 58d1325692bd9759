"""Binary CART trees for length-of-stay regression (MSE) and same-day
classification (Gini), with numeric-threshold and categorical-subset splits.

Trees grow best-first when ``max_leaf_nodes`` is set and depth-first
otherwise.  Tie-breaking among equal-gain splits is fixed: lowest feature
index, then lowest threshold or lexicographically smallest left category
set, where the left set is always the side holding the smallest category.
"""
from __future__ import annotations

import heapq
import itertools
import json
import math
from dataclasses import asdict, dataclass, field
from typing import Any, Mapping, Sequence

import numpy as np

MSE = "mse"
GINI = "gini"
CRITERIA = (MSE, GINI)
NUMERIC = "numeric"
CATEGORICAL = "categorical"
EXHAUSTIVE_MAX = 12  # categorical features up to this size try every subset
REL_TOL = 1e-9


def gain_tolerance(parent_impurity: float) -> float:
    """Gains closer than this count as ties."""
    return REL_TOL * max(1.0, abs(parent_impurity))


# -- impurity ------------------------------------------------------------

def node_mse(targets) -> float:
    """Mean squared deviation from the node mean (population variance)."""
    y = np.asarray(targets, dtype=float)
    if y.size == 0:
        raise ValueError("node_mse of an empty node")
    return float(np.mean((y - y.mean()) ** 2))


def gini(labels) -> float:
    labels = list(labels)
    if not labels:
        raise ValueError("gini of an empty node")
    _, counts = np.unique(np.asarray(labels, dtype=object).astype(str), return_counts=True)
    p = counts / counts.sum()
    return float(1.0 - np.sum(p * p))


# -- configuration -------------------------------------------------------

@dataclass(frozen=True)
class StoppingCriteria:
    max_depth: int | None = None
    min_samples_split: int = 2
    min_samples_leaf: int = 1
    min_weight_fraction_leaf: float = 0.0
    max_leaf_nodes: int | None = None
    min_impurity_decrease: float = 0.0

    def __post_init__(self):
        if self.max_depth is not None and (int(self.max_depth) != self.max_depth or self.max_depth < 1):
            raise ValueError("max_depth must be a positive integer or None")
        if int(self.min_samples_split) != self.min_samples_split or self.min_samples_split < 2:
            raise ValueError("min_samples_split must be an integer >= 2")
        if int(self.min_samples_leaf) != self.min_samples_leaf or self.min_samples_leaf < 1:
            raise ValueError("min_samples_leaf must be an integer >= 1")
        if not 0.0 <= self.min_weight_fraction_leaf <= 0.5:
            raise ValueError("min_weight_fraction_leaf must lie in [0, 0.5]")
        if self.max_leaf_nodes is not None and (
                int(self.max_leaf_nodes) != self.max_leaf_nodes or self.max_leaf_nodes < 2):
            raise ValueError("max_leaf_nodes must be an integer >= 2 or None")
        if not self.min_impurity_decrease >= 0.0:
            raise ValueError("min_impurity_decrease must be >= 0")

    def min_leaf(self, n_total: int) -> float:
        return max(self.min_samples_leaf, self.min_weight_fraction_leaf * n_total)


@dataclass(frozen=True)
class FeatureSpec:
    name: str
    kind: str
    categories: tuple[str, ...] = ()


@dataclass(frozen=True)
class Split:
    feature: int
    kind: str
    threshold: float | None = None
    left: frozenset | None = None  # category labels routed left
    impurity_decrease: float = 0.0
    majority_left: bool = True  # where unseen categories go

    def key(self, spec: FeatureSpec | None = None):
        if self.kind == NUMERIC:
            return (self.threshold,)
        cats = spec.categories if spec is not None else tuple(sorted(self.left))
        order = {c: i for i, c in enumerate(cats)}
        return tuple(sorted(order.get(c, len(order)) for c in self.left))


@dataclass
class Node:
    id: int
    depth: int
    n: int
    impurity: float
    value: Any  # mean target (mse) or class-probability vector (gini)
    split: Split | None = None
    left: "Node | None" = None
    right: "Node | None" = None

    @property
    def is_leaf(self) -> bool:
        return self.split is None


@dataclass
class DecisionTree:
    criterion: str
    features: list[FeatureSpec]
    root: Node
    stopping: StoppingCriteria
    classes: list = field(default_factory=list)
    n_train: int = 0
    missing: str = "error"

    # -- structure -------------------------------------------------------
    def nodes(self) -> list[Node]:
        out, stack = [], [self.root]
        while stack:
            nd = stack.pop()
            out.append(nd)
            if not nd.is_leaf:
                stack += [nd.right, nd.left]
        return out

    def leaves(self) -> list[Node]:
        return [nd for nd in self.nodes() if nd.is_leaf]

    @property
    def n_leaves(self) -> int:
        return len(self.leaves())

    @property
    def depth(self) -> int:
        return max(nd.depth for nd in self.nodes())

    def training_impurity(self) -> float:
        """Sample-weighted mean impurity of the leaves."""
        lv = self.leaves()
        return float(sum(nd.n * nd.impurity for nd in lv) / sum(nd.n for nd in lv))

    # -- routing ---------------------------------------------------------
    def _value_of(self, row, j: int):
        spec = self.features[j]
        if isinstance(row, Mapping):
            return row[spec.name]
        if hasattr(row, "get") and not isinstance(row, (list, tuple, np.ndarray)):
            return row.get(spec.name)
        return row[j]

    def _goes_left(self, split: Split, value) -> bool:
        spec = self.features[split.feature]
        if value is None or (isinstance(value, float) and math.isnan(value)):
            if self.missing == "majority":
                return split.majority_left
            raise ValueError(f"missing value for feature {spec.name!r}")
        if split.kind == NUMERIC:
            return float(value) <= split.threshold
        label = _label(value)
        if label in split.left:
            return True
        if label in spec.categories:
            return False
        return split.majority_left  # category never seen in training

    def route(self, row) -> Node:
        nd = self.root
        while not nd.is_leaf:
            nd = nd.left if self._goes_left(nd.split, self._value_of(row, nd.split.feature)) else nd.right
        return nd

    def to_dict(self) -> dict:
        def enc(nd: Node):
            d = {"id": nd.id, "depth": nd.depth, "n": nd.n, "impurity": nd.impurity,
                 "value": nd.value if self.criterion == MSE else list(nd.value)}
            if not nd.is_leaf:
                s = nd.split
                d["split"] = {"feature": s.feature, "feature_name": self.features[s.feature].name,
                              "kind": s.kind, "impurity_decrease": s.impurity_decrease,
                              "majority_left": s.majority_left}
                if s.kind == NUMERIC:
                    d["split"]["threshold"] = s.threshold
                else:
                    d["split"]["left"] = sorted(s.left)
                d["left"] = enc(nd.left)
                d["right"] = enc(nd.right)
            return d
        return {"criterion": self.criterion,
                "features": [{"name": f.name, "kind": f.kind, "categories": list(f.categories)}
                             for f in self.features],
                "classes": [_jsonable(c) for c in self.classes],
                "stopping": asdict(self.stopping), "n_train": self.n_train,
                "missing": self.missing, "root": enc(self.root)}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    @classmethod
    def from_dict(cls, d: Mapping) -> "DecisionTree":
        feats = [FeatureSpec(f["name"], f["kind"], tuple(f["categories"])) for f in d["features"]]

        def dec(e):
            value = e["value"] if d["criterion"] == MSE else np.asarray(e["value"], dtype=float)
            nd = Node(e["id"], e["depth"], e["n"], e["impurity"], value)
            if "split" in e:
                s = e["split"]
                nd.split = Split(s["feature"], s["kind"], s.get("threshold"),
                                 frozenset(s["left"]) if "left" in s else None,
                                 s["impurity_decrease"], s["majority_left"])
                nd.left, nd.right = dec(e["left"]), dec(e["right"])
            return nd
        return cls(d["criterion"], feats, dec(d["root"]), StoppingCriteria(**d["stopping"]),
                   list(d["classes"]), d["n_train"], d.get("missing", "error"))

    @classmethod
    def from_json(cls, text: str) -> "DecisionTree":
        return cls.from_dict(json.loads(text))


def _label(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return str(bool(v))
    if isinstance(v, (float, np.floating)) and float(v).is_integer():
        return str(int(v))
    return str(v)


def _jsonable(v):
    if isinstance(v, np.generic):
        return v.item()
    return v


# -- data encoding -------------------------------------------------------

def _is_number(v) -> bool:
    return isinstance(v, (int, float, np.integer, np.floating)) and not isinstance(v, (bool, np.bool_))


def feature_matrix(rows: Sequence, names: Sequence[str]) -> list[list]:
    """Plain row lists from objects exposing ``get(name)`` or mappings."""
    out = []
    for r in rows:
        get = r.__getitem__ if isinstance(r, Mapping) else r.get
        out.append([get(n) for n in names])
    return out


class _Encoded:
    """Column-wise numeric view of a feature matrix."""

    def __init__(self, X, specs: list[FeatureSpec]):
        n = len(X)
        self.specs = specs
        self.cols = []
        for j, spec in enumerate(specs):
            if spec.kind == NUMERIC:
                self.cols.append(np.array([float(r[j]) for r in X], dtype=float).reshape(n))
            else:
                index = {c: i for i, c in enumerate(spec.categories)}
                self.cols.append(np.array([index[_label(r[j])] for r in X], dtype=int).reshape(n))


def infer_specs(X, names=None, categorical=None) -> list[FeatureSpec]:
    n_feat = len(X[0]) if len(X) else len(names or [])
    names = list(names) if names is not None else [f"x{j}" for j in range(n_feat)]
    if len(names) != n_feat:
        raise ValueError("feature_names length does not match the data")
    if categorical is None:
        cat = [not all(_is_number(r[j]) for r in X) for j in range(n_feat)]
    elif all(isinstance(c, str) for c in categorical):
        cat = [n in set(categorical) for n in names]
    else:
        cat = [bool(c) for c in categorical]
    specs = []
    for j in range(n_feat):
        if cat[j]:
            cats = tuple(sorted({_label(r[j]) for r in X}))
            specs.append(FeatureSpec(names[j], CATEGORICAL, cats))
        else:
            if any(r[j] is None or (isinstance(r[j], float) and math.isnan(r[j])) for r in X):
                raise ValueError(f"missing values in numeric feature {names[j]!r}")
            specs.append(FeatureSpec(names[j], NUMERIC))
    return specs


# -- split search --------------------------------------------------------

class _Problem:
    def __init__(self, X, y, criterion, stopping, specs):
        if criterion not in CRITERIA:
            raise ValueError(f"criterion must be one of {CRITERIA}")
        self.criterion = criterion
        self.stopping = stopping
        self.specs = specs
        self.enc = _Encoded(X, specs)
        self.n_total = len(y)
        if criterion == MSE:
            try:
                self.y = np.asarray([float(v) for v in y], dtype=float)
            except (TypeError, ValueError):
                raise ValueError("mse criterion needs a numeric target") from None
            if not np.isfinite(self.y).all():
                raise ValueError("target must be finite")
            self.classes = []
        else:
            self.classes = _sorted_classes(y)
            index = {c: i for i, c in enumerate(self.classes)}
            self.y = np.array([index[v] for v in y], dtype=int)
            self.onehot = np.eye(len(self.classes))[self.y]

    # impurity and payload
    def impurity(self, idx) -> float:
        if self.criterion == MSE:
            yy = self.y[idx]
            return float(np.mean((yy - yy.mean()) ** 2))
        p = self.onehot[idx].mean(axis=0)
        return float(1.0 - np.sum(p * p))

    def payload(self, idx):
        if self.criterion == MSE:
            return float(self.y[idx].mean())
        return self.onehot[idx].mean(axis=0)

    # children impurity sums for many candidate left sets at once
    def _stats(self, idx):
        if self.criterion == MSE:
            yy = self.y[idx]
            yc = yy - yy.mean()
            return np.column_stack([np.ones(len(idx)), yc, yc * yc])
        return np.column_stack([np.ones(len(idx)), self.onehot[idx]])

    def _weighted_child(self, left, total):
        """Sum over both children of n_child * impurity_child, per candidate row."""
        right = total[None, :] - left
        if self.criterion == MSE:
            def sse(s):
                with np.errstate(invalid="ignore", divide="ignore"):
                    return np.where(s[:, 0] > 0, s[:, 2] - s[:, 1] ** 2 / s[:, 0], 0.0)
            return np.maximum(sse(left), 0.0) + np.maximum(sse(right), 0.0)

        def g(s):
            n = s[:, 0]
            with np.errstate(invalid="ignore", divide="ignore"):
                return np.where(n > 0, n - np.sum(s[:, 1:] ** 2, axis=1) / n, 0.0)
        return g(left) + g(right)

    def candidates(self, idx, j):
        """``(gains, keys, builders)`` for feature ``j`` at the node ``idx``."""
        n = len(idx)
        min_leaf = self.stopping.min_leaf(self.n_total)
        stats = self._stats(idx)
        total = stats.sum(axis=0)
        parent = self._weighted_child(np.zeros((1, len(total))), total)[0] / n
        spec = self.specs[j]
        col = self.enc.cols[j][idx]
        if spec.kind == NUMERIC:
            order = np.argsort(col, kind="stable")
            xs = col[order]
            cum = np.cumsum(stats[order], axis=0)[:-1]
            pos = np.flatnonzero(xs[1:] > xs[:-1])  # cut after position pos
            n_left = pos + 1
            ok = (n_left >= min_leaf) & (n - n_left >= min_leaf)
            pos = pos[ok]
            if len(pos) == 0:
                return np.zeros(0), [], []
            gains = parent - self._weighted_child(cum[pos], total) / n
            thr = (xs[pos] + xs[pos + 1]) / 2.0
            keys = [(float(t),) for t in thr]
            return gains, keys, [("num", float(t)) for t in thr]
        codes = np.unique(col)
        if len(codes) < 2:
            return np.zeros(0), [], []
        per = np.zeros((len(codes), stats.shape[1]))
        loc = np.searchsorted(codes, col)
        np.add.at(per, loc, stats)
        C = len(codes)
        if C <= EXHAUSTIVE_MAX:
            masks = np.array([(1,) + bits for bits in itertools.product((0, 1), repeat=C - 1)][:-1],
                             dtype=float)
        elif self.criterion == MSE:
            mean = per[:, 1] / per[:, 0]
            order = np.lexsort((codes, mean))
            masks = np.zeros((C - 1, C))
            for i in range(1, C):
                masks[i - 1, order[:i]] = 1.0
            flip = masks[:, 0] == 0
            masks[flip] = 1.0 - masks[flip]
        else:
            masks = np.eye(C)
            masks[1:] = 1.0 - masks[1:]  # canonical side holds the smallest code
        left = masks @ per
        n_left = left[:, 0]
        ok = (n_left >= min_leaf) & (n - n_left >= min_leaf)
        masks, left = masks[ok], left[ok]
        if len(masks) == 0:
            return np.zeros(0), [], []
        gains = parent - self._weighted_child(left, total) / n
        keys, builders = [], []
        for m in masks:
            sel = tuple(int(c) for c in codes[m > 0.5])
            keys.append(sel)
            builders.append(("cat", frozenset(spec.categories[c] for c in sel)))
        return gains, keys, builders

    def best_split(self, idx) -> Split | None:
        n = len(idx)
        parent = self.impurity(idx)
        per_feature = [self.candidates(idx, j) for j in range(len(self.specs))]
        best = max((float(g.max()) for g, _, _ in per_feature if len(g)), default=None)
        if best is None:
            return None
        tol = gain_tolerance(parent)
        if best <= tol or best < self.stopping.min_impurity_decrease:
            return None
        for j, (gains, keys, builders) in enumerate(per_feature):
            near = [i for i in range(len(gains)) if gains[i] >= best - tol]
            if not near:
                continue
            i = min(near, key=lambda i: keys[i])
            kind, arg = builders[i]
            gain = max(float(gains[i]), 0.0)
            if kind == "num":
                split = Split(j, NUMERIC, threshold=arg, impurity_decrease=gain)
                n_left = int(np.sum(self.enc.cols[j][idx] <= arg))
            else:
                split = Split(j, CATEGORICAL, left=arg, impurity_decrease=gain)
                left_codes = [self.specs[j].categories.index(c) for c in arg]
                n_left = int(np.isin(self.enc.cols[j][idx], left_codes).sum())
            return Split(split.feature, split.kind, split.threshold, split.left, gain,
                         majority_left=n_left >= n - n_left)
        return None

    def partition(self, idx, split: Split):
        col = self.enc.cols[split.feature][idx]
        if split.kind == NUMERIC:
            go = col <= split.threshold
        else:
            codes = [self.specs[split.feature].categories.index(c) for c in split.left]
            go = np.isin(col, codes)
        return idx[go], idx[~go]

    def splittable(self, idx, depth, impurity) -> bool:
        st = self.stopping
        n = len(idx)
        if n < st.min_samples_split or n < 2 * st.min_leaf(self.n_total):
            return False
        if st.max_depth is not None and depth >= st.max_depth:
            return False
        return impurity > 0.0


def _sorted_classes(y) -> list:
    values = set(y.tolist() if isinstance(y, np.ndarray) else y)
    try:
        return sorted(values)
    except TypeError:
        return sorted(values, key=str)


# -- public API ----------------------------------------------------------

def best_split(X, y, criterion: str = MSE, stopping: StoppingCriteria | None = None,
               feature_names=None, categorical=None) -> Split | None:
    """Best binary split of the whole sample ``(X, y)``, or ``None``."""
    stopping = stopping or StoppingCriteria()
    specs = infer_specs(X, feature_names, categorical)
    prob = _Problem(X, y, criterion, stopping, specs)
    idx = np.arange(len(y))
    if len(idx) == 0:
        raise ValueError("best_split needs at least one row")
    return prob.best_split(idx)


def fit_tree(X, y, criterion: str = MSE, stopping: StoppingCriteria | None = None,
             feature_names=None, categorical=None, missing: str = "error") -> DecisionTree:
    """Grow a tree on rows ``X`` (sequences of feature values) and target ``y``."""
    stopping = stopping or StoppingCriteria()
    if len(y) == 0 or len(X) != len(y):
        raise ValueError("need equally many rows and targets, at least one")
    if missing not in ("error", "majority"):
        raise ValueError("missing must be 'error' or 'majority'")
    specs = infer_specs(X, feature_names, categorical)
    prob = _Problem(X, y, criterion, stopping, specs)
    seq = itertools.count()

    def make(idx, depth):
        imp = prob.impurity(idx)
        return Node(next(seq), depth, len(idx), imp, prob.payload(idx))

    root_idx = np.arange(len(y))
    root = make(root_idx, 0)
    members = {root.id: root_idx}

    def candidate(node):
        idx = members[node.id]
        if not prob.splittable(idx, node.depth, node.impurity):
            return None
        return prob.best_split(idx)

    def expand(node, split):
        li, ri = prob.partition(members[node.id], split)
        node.split = split
        node.left, node.right = make(li, node.depth + 1), make(ri, node.depth + 1)
        members[node.left.id], members[node.right.id] = li, ri
        return node.left, node.right

    if stopping.max_leaf_nodes is None:
        stack = [root]
        while stack:
            node = stack.pop()
            split = candidate(node)
            if split is not None:
                left, right = expand(node, split)
                stack += [right, left]
    else:
        heap = []

        def push(node):
            split = candidate(node)
            if split is not None:
                heapq.heappush(heap, (-node.n * split.impurity_decrease, node.id, node, split))
        push(root)
        leaves = 1
        while heap and leaves < stopping.max_leaf_nodes:
            _, _, node, split = heapq.heappop(heap)
            for child in expand(node, split):
                push(child)
            leaves += 1
    tree = DecisionTree(criterion, specs, root, stopping, prob.classes, len(y), missing)
    _renumber(tree)
    return tree


def _renumber(tree: DecisionTree) -> None:
    for i, nd in enumerate(tree.nodes()):  # pre-order, left before right
        nd.id = i


def predict(tree: DecisionTree, row):
    leaf = tree.route(row)
    if tree.criterion == MSE:
        return leaf.value
    return tree.classes[int(np.argmax(leaf.value))]  # argmax: lowest class on ties


def predict_many(tree: DecisionTree, rows) -> list:
    return [predict(tree, r) for r in rows]


def leaf_assignments(tree: DecisionTree, rows) -> list[int]:
    """Leaf id for each row, in row order."""
    return [tree.route(r).id for r in rows]


def r2_score(pred, actual) -> float:
    p = np.asarray(pred, dtype=float)
    a = np.asarray(actual, dtype=float)
    if p.shape != a.shape or a.size == 0:
        raise ValueError("pred and actual must be nonempty and equally long")
    sst = float(np.sum((a - a.mean()) ** 2))
    if sst == 0.0:
        raise ValueError("R^2 is undefined when actual values have zero variance")
    return 1.0 - float(np.sum((a - p) ** 2)) / sst


def accuracy_score(pred, actual) -> float:
    pred, actual = list(pred), list(actual)
    if len(pred) != len(actual) or not actual:
        raise ValueError("pred and actual must be nonempty and equally long")
    return sum(p == a for p, a in zip(pred, actual)) / len(actual)


# -- parameter sweep -----------------------------------------------------

@dataclass
class GridPoint:
    max_leaf_nodes: int | None
    min_samples_leaf: int
    train_score: float
    test_score: float
    n_leaves: int


@dataclass
class GridResult:
    points: list[GridPoint]
    best_index: int
    best_tree: DecisionTree
    metric: str


def score(tree: DecisionTree, X, y) -> float:
    pred = predict_many(tree, X)
    if tree.criterion == MSE:
        try:
            return r2_score(pred, y)
        except ValueError:
            return math.nan
    return accuracy_score(pred, y)


def grid_search(X_train, y_train, X_test, y_test, criterion: str = MSE,
                max_leaf_nodes=(2, 4, 8, 16, 30), min_samples_leaf=(1, 5, 20),
                base: StoppingCriteria | None = None, feature_names=None,
                categorical=None) -> GridResult:
    """Step-wise sweep over leaf count and leaf size scored on the test part.

    Best = highest test score; ties keep the earlier grid point.
    """
    base = base or StoppingCriteria()
    if len(y_train) == 0:
        raise ValueError("empty training set")
    points, trees = [], []
    for mln in max_leaf_nodes:
        for msl in min_samples_leaf:
            st = StoppingCriteria(base.max_depth, base.min_samples_split, msl,
                                  base.min_weight_fraction_leaf, mln, base.min_impurity_decrease)
            tree = fit_tree(X_train, y_train, criterion, st, feature_names, categorical,
                            missing="majority")
            test = score(tree, X_test, y_test) if len(y_test) else math.nan
            points.append(GridPoint(mln, msl, score(tree, X_train, y_train), test, tree.n_leaves))
            trees.append(tree)
    key = [(-p.test_score if not math.isnan(p.test_score) else math.inf, i)
           for i, p in enumerate(points)]
    best = min(key)[1]
    return GridResult(points, best, trees[best], "r2" if criterion == MSE else "accuracy")


# -- rendering -----------------------------------------------------------

def render_text(tree: DecisionTree, digits: int = 3) -> str:
    """Indented if/else view of the tree, one line per branch and leaf."""
    lines = []

    def leaf_text(nd):
        if tree.criterion == MSE:
            v = f"{nd.value:.{digits}f}"
        else:
            k = int(np.argmax(nd.value))
            v = f"{tree.classes[k]} (p={nd.value[k]:.{digits}f})"
        return f"leaf {nd.id}: value {v}, n={nd.n}"

    def walk(nd, indent):
        pad = "|   " * indent
        if nd.is_leaf:
            lines.append(f"{pad}|--- {leaf_text(nd)}")
            return
        s = nd.split
        name = tree.features[s.feature].name
        if s.kind == NUMERIC:
            cond_l, cond_r = f"{name} <= {s.threshold:.{digits}f}", f"{name} >  {s.threshold:.{digits}f}"
        else:
            cats = ", ".join(sorted(s.left))
            cond_l, cond_r = f"{name} in {{{cats}}}", f"{name} not in {{{cats}}}"
        lines.append(f"{pad}|--- {cond_l}")
        walk(nd.left, indent + 1)
        lines.append(f"{pad}|--- {cond_r}")
        walk(nd.right, indent + 1)
    walk(tree.root, 0)
    return "\n".join(lines) + "\n"
