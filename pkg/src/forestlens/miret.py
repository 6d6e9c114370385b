"""Mixed-integer model of a fidelity-maximising oblique surrogate tree.

Each branch node ``t`` carries a hyperplane ``a_t @ x + b_t`` (left when
``<= 0``, right when ``>= eps``); every sample is assigned to one leaf by
binaries ``z``; ``s`` flags the features a hyperplane uses. Features a level
may use, and the cost of using them, come from the forest's full-level
frequencies. Samples the forest always co-locates are forced into the same
leaf.

Two variants are built. The basic one activates routing rows directly
through sums of ``z``; the strengthened one adds per-node path binaries
``qL``/``qR``, a at-least-one-split cut and non-negative intercepts above the
last branch level.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .metrics import frequency_feature_set, proximity_pair_set
from .milp import ModelBuilder

BASIC = "basic"
STRENGTHENED = "strengthened"

PRIORITY_Q = 3
PRIORITY_Z = 2
PRIORITY_S = 1


@dataclass(frozen=True)
class TreeTopology:
    depth: int
    branches: tuple
    leaves: tuple
    levels: tuple  # levels[d] = branch ids at depth d
    upper: tuple  # levels 0 .. D-2
    last: tuple  # level D-1
    left_leaves: dict
    right_leaves: dict
    leaf_class: dict

    def level_of(self, t):
        return int(np.floor(np.log2(t + 1)))

    def subtree_leaves(self, t):
        return self.left_leaves[t] + self.right_leaves[t]


def _leaves_under(t, depth):
    lo = hi = t
    while lo < 2 ** depth - 1:
        lo, hi = 2 * lo + 1, 2 * hi + 2
    return tuple(range(lo, hi + 1))


def build_topology(depth):
    if depth < 1:
        raise ValueError("depth must be at least 1")
    n_branch = 2 ** depth - 1
    branches = tuple(range(n_branch))
    leaves = tuple(range(n_branch, 2 ** (depth + 1) - 1))
    levels = tuple(tuple(range(2 ** d - 1, 2 ** (d + 1) - 1)) for d in range(depth))
    return TreeTopology(
        depth=depth,
        branches=branches,
        leaves=leaves,
        levels=levels,
        upper=tuple(t for lvl in levels[:-1] for t in lvl),
        last=levels[-1],
        left_leaves={t: _leaves_under(2 * t + 1, depth) for t in branches},
        right_leaves={t: _leaves_under(2 * t + 2, depth) for t in branches},
        leaf_class={l: (-1 if l % 2 == 1 else 1) for l in leaves},
    )


@dataclass(frozen=True)
class MiretHyperparams:
    """``gamma`` may be a scalar or one value per level; ``m_bar=None``
    disables the co-location rows."""

    alpha: float = 0.2
    gamma: object = 0.0
    m_bar: float | None = 1.0
    epsilon: float = 1e-3
    time_limit: float = 600.0
    formulation: str = STRENGTHENED
    min_splits: int = 1

    def __post_init__(self):
        if self.alpha < 0:
            raise ValueError("alpha must be non-negative")
        if not self.epsilon > 0:
            raise ValueError("epsilon must be positive")
        if self.m_bar is not None and not 0 < self.m_bar <= 1:
            raise ValueError("m_bar must lie in (0, 1]")
        if self.formulation not in (BASIC, STRENGTHENED):
            raise ValueError(f"unknown formulation {self.formulation!r}")
        if np.any(np.asarray(self.gamma, dtype=float) < 0):
            raise ValueError("gamma must be non-negative")

    def gammas(self, depth):
        g = np.asarray(self.gamma, dtype=float)
        if g.ndim == 0:
            return np.full(depth, float(g))
        if g.shape != (depth,):
            raise ValueError(f"gamma needs {depth} per-level values, got {g.shape[0]}")
        return g.copy()


def a_name(t, j):
    return f"a_{t}_{j}"


def b_name(t):
    return f"b_{t}"


def z_name(i, l):
    return f"z_{i}_{l}"


def s_name(t, j):
    return f"s_{t}_{j}"


def qL_name(i, t):
    return f"qL_{i}_{t}"


def qR_name(i, t):
    return f"qR_{i}_{t}"


@dataclass
class _Inputs:
    X: np.ndarray
    p: np.ndarray
    yhat: np.ndarray
    freq: np.ndarray  # (n_features, depth)
    allowed: list
    pairs: list = field(default_factory=list)


def _prepare(data, stats, hp, topo):
    X = np.asarray(data.features, dtype=float)
    if stats.level_freq.mode != "full-level":
        raise ValueError("MIRET needs full-level frequencies")
    freq = stats.level_freq.values
    if freq.shape != (X.shape[1], topo.depth):
        raise ValueError(f"frequency matrix {freq.shape} does not match data/depth "
                         f"({X.shape[1]}, {topo.depth})")
    if len(stats.p) != X.shape[0]:
        raise ValueError("statistics were computed on a different sample set")
    allowed = frequency_feature_set(stats.level_freq, hp.gammas(topo.depth))
    if not any(allowed):
        raise ValueError("no feature passes the frequency threshold at any level")
    pairs = [] if hp.m_bar is None else proximity_pair_set(stats.proximity, hp.m_bar)
    return _Inputs(X, np.asarray(stats.p, float), np.asarray(stats.yhat, int), freq, allowed, pairs)


def _common(b, inp, hp, topo, strengthened):
    X = inp.X
    n, n_feat = X.shape
    M_L = n_feat + 1.0
    M_R = n_feat + 1.0 + hp.epsilon

    for t in topo.branches:
        d = topo.level_of(t)
        ok = set(inp.allowed[d])
        for j in range(n_feat):
            b.add_var(a_name(t, j), -1.0, 1.0)
            if j not in ok:
                b.fix(a_name(t, j), 0.0)
        lb = 0.0 if strengthened and t in topo.upper else -1.0
        b.add_var(b_name(t), lb, 1.0)
    for t in topo.branches:
        d = topo.level_of(t)
        ok = set(inp.allowed[d])
        for j in range(n_feat):
            b.add_var(s_name(t, j), binary=True, priority=PRIORITY_S)
            if j in ok:
                b.add_cost(s_name(t, j), hp.alpha / inp.freq[j, d])
            else:
                b.fix(s_name(t, j), 0.0)
    for i in range(n):
        for l in topo.leaves:
            b.add_var(z_name(i, l), binary=True, priority=PRIORITY_Z)

    # loss: 1/2 sum p y (y - sum c z) = 1/2 sum p - 1/2 sum p y c z
    b.c0 += 0.5 * float(inp.p.sum())
    for i in range(n):
        for l in topo.leaves:
            b.add_cost(z_name(i, l), -0.5 * inp.p[i] * inp.yhat[i] * topo.leaf_class[l])

    if strengthened:
        for i in range(n):
            for t in topo.branches:
                b.add_var(qL_name(i, t), binary=True, priority=PRIORITY_Q)
                b.add_var(qR_name(i, t), binary=True, priority=PRIORITY_Q)

    # routing
    for t in topo.branches:
        d = topo.level_of(t)
        feats = inp.allowed[d]
        for i in range(n):
            hyper = {a_name(t, j): X[i, j] for j in feats if X[i, j] != 0.0}
            hyper[b_name(t)] = 1.0
            left = dict(hyper)
            right = dict(hyper)
            if strengthened:
                left[qL_name(i, t)] = M_L
                right[qR_name(i, t)] = -M_R
            else:
                for l in topo.left_leaves[t]:
                    left[z_name(i, l)] = M_L
                for l in topo.right_leaves[t]:
                    right[z_name(i, l)] = -M_R
            b.le(left, M_L, tag=f"route_left[{i},{t}]")
            b.ge(right, hp.epsilon - M_R, tag=f"route_right[{i},{t}]")

    if strengthened:
        for i in range(n):
            b.eq({qL_name(i, 0): 1.0, qR_name(i, 0): 1.0}, 1.0, tag=f"root[{i}]")
    else:
        for i in range(n):
            b.eq({z_name(i, l): 1.0 for l in topo.leaves}, 1.0, tag=f"assign[{i}]")

    for i, k in inp.pairs:
        for l in topo.leaves:
            b.eq({z_name(i, l): 1.0, z_name(k, l): -1.0}, 0.0, tag=f"prox[{i},{k},{l}]")

    for t in topo.branches:
        d = topo.level_of(t)
        for j in inp.allowed[d]:
            b.le({a_name(t, j): 1.0, s_name(t, j): -1.0}, 0.0, tag=f"sparse_hi[{t},{j}]")
            b.ge({a_name(t, j): 1.0, s_name(t, j): 1.0}, 0.0, tag=f"sparse_lo[{t},{j}]")


def _meta(inp, hp, topo, formulation):
    return {
        "formulation": formulation,
        "depth": topo.depth,
        "n_samples": inp.X.shape[0],
        "n_features": inp.X.shape[1],
        "alpha": hp.alpha,
        "epsilon": hp.epsilon,
        "allowed": [list(a) for a in inp.allowed],
        "freq": inp.freq.copy(),
        "p": inp.p.copy(),
        "yhat": inp.yhat.copy(),
        "pairs": list(inp.pairs),
        "X": inp.X.copy(),
    }


def build_basic(data, stats, hp, topo=None):
    topo = topo or build_topology(stats.level_freq.depth)
    inp = _prepare(data, stats, hp, topo)
    b = ModelBuilder()
    _common(b, inp, hp, topo, strengthened=False)
    return b.build(_meta(inp, hp, topo, BASIC))


def build_strengthened(data, stats, hp, topo=None):
    topo = topo or build_topology(stats.level_freq.depth)
    inp = _prepare(data, stats, hp, topo)
    n = inp.X.shape[0]
    b = ModelBuilder()
    _common(b, inp, hp, topo, strengthened=True)
    for i in range(n):
        for t in topo.upper:
            b.eq({qL_name(i, t): 1.0, qL_name(i, 2 * t + 1): -1.0, qR_name(i, 2 * t + 1): -1.0},
                 0.0, tag=f"parent_left[{i},{t}]")
            b.eq({qR_name(i, t): 1.0, qL_name(i, 2 * t + 2): -1.0, qR_name(i, 2 * t + 2): -1.0},
                 0.0, tag=f"parent_right[{i},{t}]")
    for i in range(n):
        for t in topo.branches:
            row = {qL_name(i, t): 1.0}
            row.update({z_name(i, l): -1.0 for l in topo.left_leaves[t]})
            b.eq(row, 0.0, tag=f"link_left[{i},{t}]")
            row = {qR_name(i, t): 1.0}
            row.update({z_name(i, l): -1.0 for l in topo.right_leaves[t]})
            b.eq(row, 0.0, tag=f"link_right[{i},{t}]")
    cut = {s_name(t, j): 1.0 for t in topo.branches for j in inp.allowed[topo.level_of(t)]}
    b.ge(cut, float(hp.min_splits), tag="min_splits")
    return b.build(_meta(inp, hp, topo, STRENGTHENED))


def build(data, stats, hp, topo=None):
    """Dispatch on ``hp.formulation``."""
    fn = build_strengthened if hp.formulation == STRENGTHENED else build_basic
    return fn(data, stats, hp, topo)


def objective_value(model, x):
    """Recompute loss plus sparsity penalty from the raw solution values."""
    x = np.asarray(x, dtype=float)
    if x.shape != (model.n_vars,) or not np.all(np.isfinite(x)):
        raise ValueError("solution must assign a finite value to every variable")
    meta = model.meta
    topo = build_topology(meta["depth"])
    p, yhat = meta["p"], meta["yhat"]
    loss = 0.0
    for i in range(meta["n_samples"]):
        pred = sum(topo.leaf_class[l] * x[model.var(z_name(i, l))] for l in topo.leaves)
        loss += p[i] * yhat[i] * (yhat[i] - pred)
    pen = 0.0
    for t in topo.branches:
        d = topo.level_of(t)
        for j in meta["allowed"][d]:
            pen += x[model.var(s_name(t, j))] / meta["freq"][j, d]
    return 0.5 * loss + meta["alpha"] * pen
