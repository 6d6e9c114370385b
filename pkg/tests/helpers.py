"""Independent reference implementations and fixtures shared by the tests.

Nothing here imports the statistics code under test: frequencies and
proximities are recounted by walking node dictionaries one sample at a time,
and MILPs are solved by enumerating binaries and handing each assignment to
HiGHS.
"""

from __future__ import annotations

import itertools

import numpy as np
from scipy.optimize import linprog

from forestlens.forest import BRANCH, LEAF, Forest, Tree, TreeNode

# forests --------------------------------------------------------------------


def complete_tree(depth, splits, leaf_counts):
    """Tree from breadth-first ``splits`` (feature, threshold) and leaf class counts.

    ``splits`` may hold None for a position that is a leaf; its subtree is
    then dropped and its counts are the sum of the leaf counts below it.
    """
    n_branch = 2 ** depth - 1
    counts = {n_branch + k: tuple(c) for k, c in enumerate(leaf_counts)}
    for t in range(n_branch - 1, -1, -1):
        l, r = counts[2 * t + 1], counts[2 * t + 2]
        counts[t] = (l[0] + r[0], l[1] + r[1])
    nodes = {}
    stack = [0]
    while stack:
        t = stack.pop()
        sp = splits[t] if t < n_branch else None
        if sp is None:
            nodes[t] = TreeNode(t, LEAF, class_counts=counts[t])
        else:
            nodes[t] = TreeNode(t, BRANCH, sp[0], float(sp[1]), counts[t])
            stack += [2 * t + 1, 2 * t + 2]
    return Tree(depth, nodes)


def random_forest(rng, n_trees=None, depth=None, n_features=None, prune=0.25, weights=False):
    n_trees = n_trees or int(rng.integers(1, 6))
    depth = depth or int(rng.integers(1, 4))
    n_features = n_features or int(rng.integers(1, 7))
    trees = []
    for _ in range(n_trees):
        n_branch = 2 ** depth - 1
        splits = []
        for t in range(n_branch):
            if t > 0 and rng.random() < prune:
                splits.append(None)
            else:
                splits.append((int(rng.integers(n_features)), round(float(rng.random()), 3)))
        # a pruned node prunes its subtree
        for t in range(n_branch):
            if splits[t] is None:
                for c in (2 * t + 1, 2 * t + 2):
                    if c < n_branch:
                        splits[c] = None
        leaves = rng.integers(0, 5, size=(2 ** depth, 2))
        trees.append(complete_tree(depth, splits, leaves))
    w = rng.random(n_trees) + 0.5 if weights else np.ones(n_trees)
    return Forest(tuple(trees), w, depth), n_features


def toy_forest():
    """Three depth-3 trees over four features.

    ``x1`` and ``x2`` dominate the top of the trees, ``x3`` appears only
    one level below the root and ``x4`` is never used.
    """
    spec = [
        [(0, 0.5), (1, 0.3), (2, 0.6), (0, 0.2), (1, 0.7), (0, 0.8), (1, 0.4)],
        [(1, 0.4), (0, 0.5), (0, 0.6), (1, 0.2), (0, 0.3), (1, 0.75), (0, 0.9)],
        [(0, 0.55), (2, 0.4), (1, 0.5), (1, 0.1), (0, 0.35), (0, 0.65), (1, 0.85)],
    ]
    leaves = [[(3, 0), (1, 2), (0, 4), (2, 1), (5, 0), (0, 3), (1, 1), (0, 6)],
              [(4, 1), (0, 2), (2, 2), (1, 0), (3, 1), (0, 5), (2, 0), (0, 4)],
              [(6, 0), (1, 1), (0, 3), (2, 2), (4, 0), (1, 3), (0, 2), (0, 5)]]
    trees = tuple(complete_tree(3, s, l) for s, l in zip(spec, leaves))
    return Forest(trees, np.ones(3), 3)


TOY_NAMES = ("x1", "x2", "x3", "x4")


# brute-force recounts -------------------------------------------------------


def walk(tree, x):
    t = 0
    while tree.nodes[t].kind == BRANCH:
        nd = tree.nodes[t]
        t = 2 * t + 1 if x[nd.split_feature] <= nd.split_threshold else 2 * t + 2
    return t


def recount_level_frequency(forest, n_features, full_level):
    D = forest.depth
    out = np.zeros((n_features, D))
    for d in range(D):
        splits = 0
        for e, tree in enumerate(forest.trees):
            for t in range(2 ** d - 1, 2 ** (d + 1) - 1):
                nd = tree.nodes.get(t)
                if nd is not None and nd.kind == BRANCH:
                    out[nd.split_feature, d] += forest.weights[e]
                    splits += 1
        denom = forest.n_trees * 2 ** d if full_level else splits
        if denom:
            out[:, d] /= denom
    return out


def recount_node_frequency(forest, n_features):
    out = np.zeros((2 ** forest.depth - 1, n_features))
    for t in range(out.shape[0]):
        n = 0
        for e, tree in enumerate(forest.trees):
            nd = tree.nodes.get(t)
            if nd is not None and nd.kind == BRANCH:
                out[t, nd.split_feature] += forest.weights[e]
                n += 1
        if n:
            out[t] /= n
    return out


def recount_proximity(forest, X):
    n = len(X)
    m = np.zeros((n, n))
    for i in range(n):
        for k in range(n):
            s = 0.0
            for e, tree in enumerate(forest.trees):
                if walk(tree, X[i]) == walk(tree, X[k]):
                    s += forest.weights[e]
            m[i, k] = s / forest.n_trees
    return m


# MILP oracle ----------------------------------------------------------------


def enumerate_milp(model):
    """Optimal value by trying every binary assignment; ``inf`` when infeasible.

    Assignments violating a row made only of binaries are discarded before
    any LP is solved; the rest go to HiGHS with the binaries fixed.
    """
    A = model.A.toarray()
    bi = np.flatnonzero(model.binary)
    ci = np.flatnonzero(~model.binary)
    free = [j for j in bi if model.lb[j] != model.ub[j]]
    fixed = [j for j in bi if model.lb[j] == model.ub[j]]
    if len(free) > 22:
        raise ValueError("too many free binaries to enumerate")
    bits = np.array(list(itertools.product((0.0, 1.0), repeat=len(free)))).reshape(-1, len(free))
    xb = np.zeros((len(bits), len(bi)))
    pos = {j: k for k, j in enumerate(bi)}
    for k, j in enumerate(free):
        xb[:, pos[j]] = bits[:, k]
    for j in fixed:
        xb[:, pos[j]] = model.lb[j]
    pure = [r for r in range(A.shape[0]) if not np.any(A[r, ci])]
    if pure:
        act = xb @ A[np.ix_(pure, bi)].T
        ok = np.all((act >= model.row_lo[pure] - 1e-9) & (act <= model.row_hi[pure] + 1e-9), axis=1)
        xb = xb[ok]
    mixed = [r for r in range(A.shape[0]) if r not in set(pure)]
    best = np.inf
    Ac = A[np.ix_(mixed, ci)]
    for row in xb:
        shift = A[np.ix_(mixed, bi)] @ row
        lo = model.row_lo[mixed] - shift
        hi = model.row_hi[mixed] - shift
        base = model.c[bi] @ row + model.c0
        if len(ci) == 0:
            if np.all(lo <= 1e-9) and np.all(hi >= -1e-9):
                best = min(best, base)
            continue
        A_ub = np.vstack([Ac, -Ac])
        b_ub = np.concatenate([hi, -lo])
        keep = np.isfinite(b_ub)
        res = linprog(model.c[ci], A_ub=A_ub[keep], b_ub=b_ub[keep],
                      bounds=list(zip(model.lb[ci], model.ub[ci])), method="highs")
        if res.status == 0:
            best = min(best, res.fun + base)
    return best


def random_milp(rng, n_bin=None, n_cont=None, n_rows=None):
    from forestlens.milp import ModelBuilder

    nb = n_bin if n_bin is not None else int(rng.integers(2, 13))
    nc = n_cont if n_cont is not None else int(rng.integers(1, 6))
    mr = n_rows if n_rows is not None else int(rng.integers(2, 10))
    b = ModelBuilder()
    for j in range(nb):
        b.add_var(f"y{j}", binary=True, priority=int(rng.integers(0, 3)))
    for j in range(nc):
        b.add_var(f"x{j}", lb=-float(rng.random()) * 3, ub=float(rng.random()) * 3)
    names = [f"y{j}" for j in range(nb)] + [f"x{j}" for j in range(nc)]
    for nm in names:
        b.add_cost(nm, round(float(rng.normal()), 2))
    for _ in range(mr):
        coefs = {nm: round(float(rng.normal()), 2) for nm in names if rng.random() < 0.5}
        b.le(coefs, round(float(rng.random()) * 2 - 0.3, 2))
    return b.build()


# tiny surrogate models --------------------------------------------------------


def tiny_instance(seed, n, J=2, D=2, n_trees=3):
    """Random ``n``-sample data set whose ``n_trees``-tree forest splits at least once."""
    from forestlens.dataset import Dataset
    from forestlens.forest import train_forest
    from forestlens.metrics import compute_statistics

    rng = np.random.default_rng(seed)
    while True:
        X = np.round(rng.random((n, J)), 2)
        y = np.where(X[:, 0] + 0.3 * rng.normal(size=n) > 0.5, 1, -1)
        if len(set(y.tolist())) < 2:
            continue
        data = Dataset(X, y, tuple(f"f{j}" for j in range(J)))
        forest = train_forest(data, D, n_trees, seed)
        if forest.used_features():
            return data, forest, compute_statistics(forest, data)


def tiny_miret(seed, n, formulation="basic", alpha=0.2, **kw):
    from forestlens.miret import MiretHyperparams, build

    data, _, st = tiny_instance(seed, n, **kw)
    return build(data, st, MiretHyperparams(alpha=alpha, formulation=formulation))
