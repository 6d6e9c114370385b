"""Fixed-depth random forests of univariate CART trees.

Nodes use breadth-first ids (children of ``t`` are ``2t+1`` and ``2t+2``)
and a sample goes left at ``t`` when ``x[feature] <= threshold``.
"""

from __future__ import annotations

import io
from dataclasses import dataclass, field

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin
from sklearn.utils.multiclass import unique_labels
from sklearn.utils.validation import check_array, check_is_fitted, check_X_y

BRANCH = "branch"
LEAF = "leaf"
_IMPURITY_TOL = 1e-12


@dataclass(frozen=True)
class TreeNode:
    node_id: int
    kind: str
    split_feature: int | None = None
    split_threshold: float | None = None
    class_counts: tuple = (0, 0)  # (count of -1, count of +1)

    def __post_init__(self):
        if self.kind not in (BRANCH, LEAF):
            raise ValueError(f"unknown node kind {self.kind!r}")
        has_split = self.split_feature is not None and self.split_threshold is not None
        if self.kind == BRANCH and not has_split:
            raise ValueError(f"branch node {self.node_id} needs a feature and threshold")
        if self.kind == LEAF and (self.split_feature is not None or self.split_threshold is not None):
            raise ValueError(f"leaf node {self.node_id} must not carry a split")

    @property
    def n_samples(self):
        return self.class_counts[0] + self.class_counts[1]

    @property
    def majority(self):
        neg, pos = self.class_counts
        return 1 if pos > neg else -1


def node_level(t):
    return int(np.floor(np.log2(t + 1)))


@dataclass(frozen=True)
class Tree:
    depth: int
    nodes: dict = field(default_factory=dict)

    def __post_init__(self):
        if 0 not in self.nodes:
            raise ValueError("tree has no root")
        for t, node in self.nodes.items():
            if node.node_id != t:
                raise ValueError(f"node stored under {t} has id {node.node_id}")
            lvl = node_level(t)
            if lvl > self.depth:
                raise ValueError(f"node {t} lies below depth {self.depth}")
            if node.kind == BRANCH:
                if lvl == self.depth:
                    raise ValueError(f"branch node {t} at level D")
                kids = [self.nodes.get(2 * t + 1), self.nodes.get(2 * t + 2)]
                if any(k is None for k in kids):
                    raise ValueError(f"branch node {t} is missing a child")
                summed = tuple(a + b for a, b in zip(kids[0].class_counts, kids[1].class_counts))
                if summed != tuple(node.class_counts):
                    raise ValueError(f"class counts at node {t} do not match its children")
            if t > 0:
                parent = self.nodes.get((t - 1) // 2)
                if parent is None or parent.kind != BRANCH:
                    raise ValueError(f"node {t} has no branch parent")

    def branches(self):
        return sorted(t for t, n in self.nodes.items() if n.kind == BRANCH)

    def leaves(self):
        return sorted(t for t, n in self.nodes.items() if n.kind == LEAF)

    def apply(self, X):
        """Leaf id reached by every row of ``X``."""
        X = np.asarray(X, dtype=float)
        cur = np.zeros(X.shape[0], dtype=np.int64)
        for _ in range(self.depth + 1):
            moved = False
            for t in np.unique(cur):
                node = self.nodes[int(t)]
                if node.kind == LEAF:
                    continue
                rows = cur == t
                go_left = X[rows, node.split_feature] <= node.split_threshold
                cur[rows] = np.where(go_left, 2 * t + 1, 2 * t + 2)
                moved = True
            if not moved:
                break
        return cur

    def predict(self, X):
        leaf = self.apply(X)
        lookup = {t: self.nodes[t].majority for t in self.leaves()}
        return np.array([lookup[int(t)] for t in leaf], dtype=np.int64)


@dataclass(frozen=True)
class Forest:
    trees: tuple
    weights: np.ndarray
    depth: int
    bootstrap_seed: int = 0

    def __post_init__(self):
        trees = tuple(self.trees)
        w = np.asarray(self.weights, dtype=float)
        if len(trees) == 0:
            raise ValueError("a forest needs at least one tree")
        if w.shape != (len(trees),):
            raise ValueError("one weight per tree is required")
        if np.any(w < 0) or not np.all(np.isfinite(w)):
            raise ValueError("tree weights must be finite and non-negative")
        if any(tr.depth != self.depth for tr in trees):
            raise ValueError("all trees must share the forest depth")
        object.__setattr__(self, "trees", trees)
        object.__setattr__(self, "weights", w)

    @property
    def n_trees(self):
        return len(self.trees)

    def apply(self, X):
        """Leaf ids, shape (n_samples, n_trees)."""
        return np.column_stack([tr.apply(X) for tr in self.trees])

    def used_features(self):
        return sorted({n.split_feature for tr in self.trees for n in tr.nodes.values()
                       if n.kind == BRANCH})


# training ------------------------------------------------------------------

def _gini(neg, pos):
    n = neg + pos
    with np.errstate(invalid="ignore", divide="ignore"):
        p = np.where(n > 0, pos / np.where(n > 0, n, 1), 0.0)
    return 2.0 * p * (1.0 - p)


def _best_split(X, y, feats):
    """Return (weighted impurity, feature, threshold) or None."""
    n = y.size
    best = None
    pos_total = int((y > 0).sum())
    for j in feats:
        order = np.argsort(X[:, j], kind="stable")
        xs = X[order, j]
        cut = np.flatnonzero(xs[1:] != xs[:-1])
        if cut.size == 0:
            continue
        pos_left = np.cumsum(y[order] > 0)[cut]
        n_left = cut + 1
        neg_left = n_left - pos_left
        pos_right = pos_total - pos_left
        neg_right = (n - n_left) - pos_right
        imp = (n_left * _gini(neg_left, pos_left)
               + (n - n_left) * _gini(neg_right, pos_right)) / n
        k = int(np.argmin(imp))  # first minimum = smallest threshold
        if best is None or imp[k] < best[0] - _IMPURITY_TOL:
            thr = 0.5 * (xs[cut[k]] + xs[cut[k] + 1])
            best = (float(imp[k]), int(j), float(thr))
    return best


def fit_tree(X, y, depth, rng=None, max_features=None):
    """Greedy Gini CART tree of maximum depth ``depth`` on (X, y)."""
    X = np.asarray(X, dtype=float)
    y = np.asarray(y)
    n_feat = X.shape[1]
    nodes = {}
    stack = [(0, np.arange(y.size))]
    while stack:
        t, idx = stack.pop()
        yy = y[idx]
        neg, pos = int((yy < 0).sum()), int((yy > 0).sum())
        parent_imp = float(_gini(np.float64(neg), np.float64(pos)))
        split = None
        if node_level(t) < depth and neg > 0 and pos > 0:
            if max_features is None or max_features >= n_feat:
                feats = range(n_feat)
            else:
                feats = sorted(rng.choice(n_feat, size=max_features, replace=False))
            split = _best_split(X[idx], yy, feats)
            if split is not None and not split[0] < parent_imp - _IMPURITY_TOL:
                split = None
        if split is None:
            nodes[t] = TreeNode(t, LEAF, class_counts=(neg, pos))
            continue
        _, j, thr = split
        nodes[t] = TreeNode(t, BRANCH, j, thr, (neg, pos))
        left = X[idx, j] <= thr
        stack.append((2 * t + 2, idx[~left]))
        stack.append((2 * t + 1, idx[left]))
    return Tree(depth, nodes)


def tree_rng(seed, index):
    """Per-tree generator; depends only on the forest seed and the tree index."""
    return np.random.default_rng([int(seed), int(index)])


def train_forest(data, depth, n_trees, seed=0, max_features=None):
    """Bagged ensemble of ``n_trees`` depth-``depth`` trees with unit weights."""
    if data.n_samples == 0:
        raise ValueError("cannot train on an empty dataset")
    if depth < 1 or n_trees < 1:
        raise ValueError("depth and n_trees must be at least 1")
    X, y = data.features, data.labels
    n = y.size
    trees = []
    for e in range(n_trees):
        rng = tree_rng(seed, e)
        boot = rng.integers(0, n, size=n)
        trees.append(fit_tree(X[boot], y[boot], depth, rng, max_features))
    return Forest(tuple(trees), np.ones(n_trees), depth, seed)


# prediction ----------------------------------------------------------------

def predict_tree(tree, x):
    x = np.asarray(x, dtype=float)
    return int(tree.predict(x.reshape(1, -1))[0])


def forest_votes(forest, X):
    """Weighted vote sum per row; positive means +1."""
    preds = np.column_stack([tr.predict(X) for tr in forest.trees])
    return preds @ forest.weights


def predict_forest(forest, X):
    """Weighted majority vote; exact ties go to -1.

    Accepts one feature vector (returns an int) or a matrix (returns an array).
    """
    X = np.asarray(X, dtype=float)
    single = X.ndim == 1
    votes = forest_votes(forest, X.reshape(1, -1) if single else X)
    out = np.where(votes > 0, 1, -1).astype(np.int64)
    return int(out[0]) if single else out


@dataclass(frozen=True)
class ClassProbabilities:
    p_neg: np.ndarray
    p_pos: np.ndarray

    @property
    def p(self):
        return np.maximum(self.p_neg, self.p_pos)

    @property
    def labels(self):
        return np.where(self.p_pos > self.p_neg, 1, -1).astype(np.int64)


def class_probabilities(forest, data):
    """Average leaf class fractions over the trees."""
    X = data.features if hasattr(data, "features") else np.asarray(data, dtype=float)
    leaves = forest.apply(X)
    E = forest.n_trees
    p_pos = np.zeros(X.shape[0])
    p_neg = np.zeros(X.shape[0])
    for e, tr in enumerate(forest.trees):
        for t in np.unique(leaves[:, e]):
            node = tr.nodes[int(t)]
            if node.n_samples == 0:
                raise ValueError(f"tree {e}: sample routed to empty leaf {int(t)}")
            rows = leaves[:, e] == t
            p_neg[rows] += node.class_counts[0] / node.n_samples
            p_pos[rows] += node.class_counts[1] / node.n_samples
    return ClassProbabilities(p_neg / E, p_pos / E)


# serialisation -------------------------------------------------------------

FOREST_HEADER = "tree,node,kind,feature,threshold,count_neg,count_pos"


def dump_forest(forest, fh=None):
    """Text form: a ``#`` preamble with depth, seed and weights, then one CSV
    record per node in the column order of :data:`FOREST_HEADER`."""
    buf = io.StringIO() if fh is None else fh
    buf.write("# forestlens-forest 1\n")
    buf.write(f"# depth={forest.depth} trees={forest.n_trees} seed={forest.bootstrap_seed}\n")
    buf.write("# weights=" + " ".join(repr(float(w)) for w in forest.weights) + "\n")
    buf.write(FOREST_HEADER + "\n")
    for e, tr in enumerate(forest.trees):
        for t in sorted(tr.nodes):
            nd = tr.nodes[t]
            feat = "" if nd.split_feature is None else str(nd.split_feature)
            thr = "" if nd.split_threshold is None else repr(float(nd.split_threshold))
            buf.write(f"{e},{t},{nd.kind},{feat},{thr},{nd.class_counts[0]},{nd.class_counts[1]}\n")
    return buf.getvalue() if fh is None else None


def load_forest(fh):
    """Inverse of :func:`dump_forest`; accepts a path, file object or string."""
    if isinstance(fh, str) and "\n" in fh:
        lines = fh.splitlines()
    elif isinstance(fh, str) or hasattr(fh, "__fspath__"):
        with open(fh) as f:
            lines = f.read().splitlines()
    else:
        lines = fh.read().splitlines()
    meta = {}
    weights = None
    per_tree = {}
    seen_header = False
    for line in lines:
        if not line.strip():
            continue
        if line.startswith("#"):
            body = line[1:].strip()
            if body.startswith("weights="):
                weights = [float(v) for v in body[len("weights="):].split()]
            else:
                for tok in body.split():
                    if "=" in tok:
                        k, v = tok.split("=", 1)
                        meta[k] = int(v)
            continue
        if not seen_header:
            if line.strip() != FOREST_HEADER:
                raise ValueError(f"unexpected forest header {line!r}")
            seen_header = True
            continue
        e, t, kind, feat, thr, cn, cp = line.split(",")
        node = TreeNode(int(t), kind, int(feat) if feat else None,
                        float(thr) if thr else None, (int(cn), int(cp)))
        per_tree.setdefault(int(e), {})[int(t)] = node
    if "depth" not in meta:
        raise ValueError("forest text has no depth record")
    depth = meta["depth"]
    n = meta.get("trees", len(per_tree))
    trees = tuple(Tree(depth, per_tree[e]) for e in range(n))
    if weights is None:
        weights = [1.0] * n
    return Forest(trees, np.asarray(weights), depth, meta.get("seed", 0))


def from_sklearn(model, depth=None):
    """Convert a fitted sklearn tree ensemble (labels -1/+1 order) to a Forest.

    Leaf counts are recovered from ``n_node_samples`` and the class fraction
    in ``tree_.value``, so they are exact for unweighted bootstraps only.
    """
    estimators = getattr(model, "estimators_", [model])
    classes = list(model.classes_)
    if len(classes) != 2:
        raise ValueError("only binary classifiers can be converted")
    trees = []
    max_depth = depth if depth is not None else max(est.get_depth() for est in estimators)
    for est in estimators:
        tr = est.tree_
        nodes = {}
        stack = [(0, 0)]
        while stack:
            sk, t = stack.pop()
            n = int(tr.n_node_samples[sk])
            val = np.asarray(tr.value[sk][0], dtype=float)
            frac = val / val.sum() if val.sum() > 0 else val
            pos = int(round(frac[1] * n))
            counts = (n - pos, pos)
            left, right = tr.children_left[sk], tr.children_right[sk]
            if left == -1:
                nodes[t] = TreeNode(t, LEAF, class_counts=counts)
            else:
                nodes[t] = TreeNode(t, BRANCH, int(tr.feature[sk]), float(tr.threshold[sk]), counts)
                stack.append((left, 2 * t + 1))
                stack.append((right, 2 * t + 2))
        # rebuild counts bottom-up so parents equal the sum of children
        for t in sorted(nodes, reverse=True):
            nd = nodes[t]
            if nd.kind == BRANCH:
                a, b = nodes[2 * t + 1].class_counts, nodes[2 * t + 2].class_counts
                nodes[t] = TreeNode(t, BRANCH, nd.split_feature, nd.split_threshold,
                                    (a[0] + b[0], a[1] + b[1]))
        trees.append(Tree(max_depth, nodes))
    return Forest(tuple(trees), np.ones(len(trees)), max_depth, 0)


# estimator -----------------------------------------------------------------

class FixedDepthForest(ClassifierMixin, BaseEstimator):
    """Scikit-learn style wrapper around :func:`train_forest`.

    Works on any two-class labels; the smaller label (sorted order) plays
    the role of -1. Inputs are expected in [0, 1] already.
    """

    def __init__(self, depth=3, n_trees=100, seed=0, max_features=None):
        self.depth = depth
        self.n_trees = n_trees
        self.seed = seed
        self.max_features = max_features

    def fit(self, X, y):
        from .dataset import Dataset

        X, y = check_X_y(X, y, dtype=float)
        self.classes_ = unique_labels(y)
        if len(self.classes_) > 2:
            raise ValueError("FixedDepthForest handles binary problems only")
        yy = np.where(y == self.classes_[-1], 1, -1) if len(self.classes_) == 2 else -np.ones(len(y), int)
        data = Dataset(X, yy, tuple(f"x{j}" for j in range(X.shape[1])))
        self.forest_ = train_forest(data, self.depth, self.n_trees, self.seed, self.max_features)
        self.n_features_in_ = X.shape[1]
        return self

    def _signed(self, X):
        check_is_fitted(self, "forest_")
        X = check_array(X, dtype=float)
        if X.shape[1] != self.n_features_in_:
            raise ValueError(f"expected {self.n_features_in_} features, got {X.shape[1]}")
        return predict_forest(self.forest_, X)

    def predict(self, X):
        s = self._signed(X)
        if len(self.classes_) == 1:
            return np.full(s.shape, self.classes_[0])
        return np.where(s > 0, self.classes_[1], self.classes_[0])

    def predict_proba(self, X):
        check_is_fitted(self, "forest_")
        X = check_array(X, dtype=float)
        cp = class_probabilities(self.forest_, X)
        return np.column_stack([cp.p_neg, cp.p_pos])
