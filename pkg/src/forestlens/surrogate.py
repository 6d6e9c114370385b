"""Oblique surrogate trees decoded from a solved MIRET model."""

from __future__ import annotations

import io
import math
from dataclasses import dataclass

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin, clone
from sklearn.utils.multiclass import unique_labels
from sklearn.utils.validation import check_array, check_is_fitted, check_X_y

from .milp import FEAS_TOL
from .miret import a_name, b_name, build_topology, z_name

SNAP_TOL = 1e-8


@dataclass(frozen=True)
class SurrogateTree:
    """Complete depth-``depth`` tree with one hyperplane per branch node.

    ``coef[t]`` and ``intercept[t]`` hold ``a_t`` and ``b_t``; a sample goes
    left at ``t`` when ``coef[t] @ x + intercept[t] <= 0``. Leaf classes
    alternate -1, +1 from the left.
    """

    depth: int
    coef: np.ndarray
    intercept: np.ndarray
    epsilon: float = 1e-3

    def __post_init__(self):
        A = np.asarray(self.coef, dtype=float)
        b = np.asarray(self.intercept, dtype=float)
        nb = 2 ** self.depth - 1
        if A.ndim != 2 or A.shape[0] != nb or b.shape != (nb,):
            raise ValueError(f"depth {self.depth} needs {nb} hyperplanes")
        if np.any(np.abs(A) > 1 + FEAS_TOL) or np.any(np.abs(b) > 1 + FEAS_TOL):
            raise ValueError("hyperplane coefficients must lie in [-1, 1]")
        object.__setattr__(self, "coef", A)
        object.__setattr__(self, "intercept", b)

    @property
    def n_features(self):
        return self.coef.shape[1]

    @property
    def n_branches(self):
        return self.coef.shape[0]

    def leaf_class(self, leaf):
        return -1 if leaf % 2 == 1 else 1

    def snapped_coef(self):
        return np.where(np.abs(self.coef) < SNAP_TOL, 0.0, self.coef)

    def apply(self, X):
        """Leaf id for every row of ``X``."""
        X = np.atleast_2d(np.asarray(X, dtype=float))
        node = np.zeros(X.shape[0], dtype=np.int64)
        for _ in range(self.depth):
            val = np.einsum("ij,ij->i", X, self.coef[node]) + self.intercept[node]
            node = np.where(val <= 0.0, 2 * node + 1, 2 * node + 2)
        return node

    def paths(self, X):
        """Root-to-leaf node ids and turn signs (True = left), per row."""
        X = np.atleast_2d(np.asarray(X, dtype=float))
        nodes = np.zeros((X.shape[0], self.depth), dtype=np.int64)
        left = np.zeros((X.shape[0], self.depth), dtype=bool)
        cur = np.zeros(X.shape[0], dtype=np.int64)
        for d in range(self.depth):
            val = np.einsum("ij,ij->i", X, self.coef[cur]) + self.intercept[cur]
            nodes[:, d] = cur
            left[:, d] = val <= 0.0
            cur = np.where(left[:, d], 2 * cur + 1, 2 * cur + 2)
        return nodes, left

    def used_features(self):
        return sorted(set(np.flatnonzero(np.any(self.snapped_coef() != 0, axis=0)).tolist()))


def predict(tree, X):
    """Class of the reached leaf; a single vector gives an int."""
    X = np.asarray(X, dtype=float)
    leaf = tree.apply(X)
    out = np.where(leaf % 2 == 1, -1, 1).astype(np.int64)
    return int(out[0]) if X.ndim == 1 else out


def effective_depth(tree):
    """One plus the deepest level holding a non-zero hyperplane; 0 if none."""
    A = tree.snapped_coef()
    active = np.flatnonzero(np.any(A != 0, axis=1))
    if active.size == 0:
        return 0
    return int(np.floor(np.log2(active.max() + 1))) + 1


def _leaf_path(leaf, depth):
    """(node, goes_left) pairs from the root down to ``leaf``."""
    out = []
    t = leaf
    while t > 0:
        parent = (t - 1) // 2
        out.append((parent, t == 2 * parent + 1))
        t = parent
    return out[::-1]


def decode(model, x, tol=FEAS_TOL):
    """Build the surrogate tree from a MIRET solution and audit its routing.

    Every training sample's assigned leaf must be reachable by the
    hyperplanes: ``<= tol`` on left turns and ``>= eps - tol`` on right
    turns. Left-turn values in ``(0, tol]`` are absorbed by lowering the
    node's intercept so that the tree reproduces the assignment exactly.
    """
    if x is None:
        raise ValueError("no solution to decode")
    x = np.asarray(x, dtype=float)
    meta = model.meta
    D, n_feat, eps = meta["depth"], meta["n_features"], meta["epsilon"]
    topo = build_topology(D)
    X = meta["X"]
    A = np.array([[x[model.var(a_name(t, j))] for j in range(n_feat)] for t in topo.branches])
    b = np.array([x[model.var(b_name(t))] for t in topo.branches])
    Z = np.array([[x[model.var(z_name(i, l))] for l in topo.leaves] for i in range(X.shape[0])])
    leaf = np.asarray(topo.leaves)[np.argmax(Z, axis=1)]
    shift = np.zeros(len(topo.branches))
    for i, l in enumerate(leaf):
        for t, go_left in _leaf_path(int(l), D):
            v = X[i] @ A[t] + b[t]
            if go_left and v > tol:
                raise ValueError(f"sample {i} assigned to leaf {l} but goes right at node {t} ({v:.3g})")
            if not go_left and v < eps - tol:
                raise ValueError(f"sample {i} assigned to leaf {l} but fails the right margin at node {t} ({v:.3g})")
            if go_left and v > 0:
                shift[t] = max(shift[t], v)
    b = np.clip(b - shift, -1.0, 1.0)
    tree = SurrogateTree(D, A, b, eps)
    bad = np.flatnonzero(tree.apply(X) != leaf)
    if bad.size:
        raise ValueError(f"decoded tree misroutes training samples {bad[:5].tolist()}")
    return tree


# text format ---------------------------------------------------------------

def dump_surrogate(tree, fh=None):
    """One record per branch node: ``node,intercept,j:a_j;...`` (non-zeros only)."""
    buf = io.StringIO() if fh is None else fh
    buf.write("# forestlens-surrogate 1\n")
    buf.write(f"# depth={tree.depth} features={tree.n_features} epsilon={tree.epsilon!r}\n")
    buf.write("node,intercept,coefficients\n")
    for t in range(tree.n_branches):
        nz = np.flatnonzero(tree.coef[t])
        coefs = ";".join(f"{j}:{float(tree.coef[t, j])!r}" for j in nz)
        buf.write(f"{t},{float(tree.intercept[t])!r},{coefs}\n")
    return buf.getvalue() if fh is None else None


def load_surrogate(src):
    if isinstance(src, str) and "\n" in src:
        lines = src.splitlines()
    elif isinstance(src, str) or hasattr(src, "__fspath__"):
        with open(src) as f:
            lines = f.read().splitlines()
    else:
        lines = src.read().splitlines()
    meta = {}
    rows = []
    for line in lines:
        if not line.strip():
            continue
        if line.startswith("#"):
            for tok in line[1:].split():
                if "=" in tok:
                    k, v = tok.split("=", 1)
                    meta[k] = v
            continue
        if line.startswith("node,"):
            continue
        t, icpt, coefs = line.split(",", 2)
        rows.append((int(t), float(icpt), coefs))
    D, n_feat = int(meta["depth"]), int(meta["features"])
    A = np.zeros((2 ** D - 1, n_feat))
    b = np.zeros(2 ** D - 1)
    for t, icpt, coefs in rows:
        b[t] = icpt
        for item in filter(None, coefs.split(";")):
            j, v = item.split(":")
            A[t, int(j)] = float(v)
    return SurrogateTree(D, A, b, float(meta.get("epsilon", 1e-3)))


def hyperplane_text(coef, intercept, feature_names, digits=3):
    """Human-readable ``sum a_j x_j <= -b`` rule; dummy nodes get a note."""
    terms = []
    for j in np.flatnonzero(np.abs(coef) >= SNAP_TOL):
        v = coef[j]
        mag = abs(v)
        c = "" if math.isclose(mag, 1.0) else f"{mag:.{digits}g}"
        sign = "-" if v < 0 else "+"
        terms.append((sign, f"{c}{feature_names[j]}"))
    if not terms:
        return "all left" if intercept <= 0 else "all right"
    text = " ".join(f"{s} {t}" for s, t in terms)
    text = text[2:] if text.startswith("+ ") else "-" + text[2:]
    rhs = -intercept
    return f"{text} <= {rhs:.{digits}g}"


def render_surrogate(tree, feature_names, X=None, y=None, title=""):
    """SVG drawing of the tree; with data, nodes show ``[#neg, #pos]`` counts."""
    from .vite import _Svg

    D = tree.depth
    box_w, box_h = 200, 44
    slot = box_w + 20
    width = slot * 2 ** D
    level_h = 90
    top = 40 if title else 12
    svg = _Svg(width, top + level_h * (D + 1))
    if title:
        svg.text(width / 2, 24, title, size=14, anchor="middle", weight="bold")
    counts = {}
    if X is not None and y is not None:
        nodes, _ = tree.paths(X)
        leaf = tree.apply(X)
        y = np.asarray(y)
        every = np.column_stack([nodes, leaf])
        for t in range(2 ** (D + 1) - 1):
            hit = np.any(every == t, axis=1)
            counts[t] = (int((y[hit] < 0).sum()), int((y[hit] > 0).sum()))

    def center(t):
        d = int(np.floor(np.log2(t + 1)))
        k = t - (2 ** d - 1)
        span = width / 2 ** d
        return span * (k + 0.5), top + level_h * d

    for t in range(tree.n_branches):
        x, yy = center(t)
        for c in (2 * t + 1, 2 * t + 2):
            cx, cy = center(c)
            svg.line(x, yy + box_h, cx, cy)
    for t in range(2 ** (D + 1) - 1):
        x, yy = center(t)
        if t < tree.n_branches:
            svg.rect(x - box_w / 2, yy, box_w, box_h, "#f4f6fb", stroke="#333333")
            svg.text(x, yy + 17, hyperplane_text(tree.coef[t], tree.intercept[t], feature_names),
                     size=10, anchor="middle")
        else:
            cls = tree.leaf_class(t)
            svg.rect(x - box_w / 4, yy, box_w / 2, box_h, "#fde0dd" if cls < 0 else "#deebf7",
                     stroke="#333333")
            svg.text(x, yy + 17, f"class {cls:+d}", size=10, anchor="middle")
        if t in counts:
            svg.text(x, yy + 34, f"[{counts[t][0]}, {counts[t][1]}]", size=10, anchor="middle")
    return svg.render()


# estimator -----------------------------------------------------------------

class MiretSurrogate(ClassifierMixin, BaseEstimator):
    """Fit an oblique surrogate tree that mimics a fixed-depth forest.

    Parameters
    ----------
    ensemble : FixedDepthForest or None
        Forest to explain. An unfitted one is cloned and fitted on the same
        data; None builds a ``FixedDepthForest(depth=depth)``.
    depth : int
        Surrogate depth; must equal the forest depth.
    alpha : float
        Weight of the feature-usage penalty.
    percentile : float or "zero"
        Per-level frequency percentile used as the feature filter threshold;
        "zero" admits every feature the forest uses. Ignored when ``gamma``
        is given.
    gamma : float, sequence or None
        Explicit per-level frequency thresholds.
    m_bar : float or None
        Proximity level above which samples must share a leaf.
    epsilon, formulation, time_limit, seed
        Passed to the model builder and the solver.
    """

    def __init__(self, ensemble=None, depth=2, alpha=0.2, percentile="zero", gamma=None,
                 m_bar=1.0, epsilon=1e-3, formulation="strengthened", time_limit=60.0, seed=0):
        self.ensemble = ensemble
        self.depth = depth
        self.alpha = alpha
        self.percentile = percentile
        self.gamma = gamma
        self.m_bar = m_bar
        self.epsilon = epsilon
        self.formulation = formulation
        self.time_limit = time_limit
        self.seed = seed

    def fit(self, X, y=None):
        from . import bnb
        from .dataset import Dataset
        from .forest import FixedDepthForest
        from .metrics import compute_statistics
        from .miret import MiretHyperparams, build
        from .tuning import gamma_from_percentile

        if y is None:
            X = check_array(X, dtype=float)
        else:
            X, y = check_X_y(X, y, dtype=float)
        est = self.ensemble
        if est is None:
            est = FixedDepthForest(depth=self.depth, seed=self.seed)
        try:
            check_is_fitted(est, "forest_")
        except Exception:
            if y is None:
                raise ValueError("labels are needed to fit the ensemble") from None
            est = clone(est).fit(X, y)
        self.ensemble_ = est
        forest = est.forest_
        if forest.depth != self.depth:
            raise ValueError(f"surrogate depth {self.depth} differs from forest depth {forest.depth}")
        self.classes_ = est.classes_ if y is None else unique_labels(y)
        yhat = np.asarray(est._signed(X))
        data = Dataset(X, yhat, tuple(f"x{j}" for j in range(X.shape[1])))
        stats = compute_statistics(forest, data)
        gamma = self.gamma
        if gamma is None:
            gamma = gamma_from_percentile(stats.level_freq, self.percentile)
        hp = MiretHyperparams(alpha=self.alpha, gamma=gamma, m_bar=self.m_bar,
                              epsilon=self.epsilon, time_limit=self.time_limit,
                              formulation=self.formulation)
        self.model_ = build(data, stats, hp)
        self.report_, sol = bnb.solve(self.model_, self.time_limit, self.seed)
        if sol is None:
            raise RuntimeError(f"solver returned no tree (status {self.report_.status})")
        self.solution_ = sol
        self.tree_ = decode(self.model_, sol)
        self.n_features_in_ = X.shape[1]
        return self

    def predict(self, X):
        check_is_fitted(self, "tree_")
        X = check_array(X, dtype=float)
        s = predict(self.tree_, X)
        if len(self.classes_) == 1:
            return np.full(s.shape, self.classes_[0])
        return np.where(s > 0, self.classes_[-1], self.classes_[0])
