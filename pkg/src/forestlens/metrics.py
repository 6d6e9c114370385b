"""Feature-usage and proximity statistics extracted from a forest."""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass

import numpy as np

from .forest import BRANCH, class_probabilities, node_level, predict_forest

OBSERVED = "observed-splits"
FULL_LEVEL = "full-level"


@dataclass(frozen=True)
class LevelFrequencyMatrix:
    values: np.ndarray  # (n_features, depth), entry [j, d]
    mode: str

    @property
    def depth(self):
        return self.values.shape[1]

    def at(self, d, j):
        return float(self.values[j, d])


@dataclass(frozen=True)
class NodeFrequencyMatrix:
    values: np.ndarray  # (2**D - 1, n_features), entry [t, j]
    split_counts: np.ndarray  # trees in which node t splits


@dataclass(frozen=True)
class ProximityMatrix:
    values: np.ndarray


@dataclass(frozen=True)
class ThresholdRanges:
    ranges: dict  # (t, j) -> (lo, hi)

    def get(self, t, j):
        return self.ranges.get((t, j))

    def __len__(self):
        return len(self.ranges)


def _split_records(forest):
    for e, tr in enumerate(forest.trees):
        for t, node in tr.nodes.items():
            if node.kind == BRANCH:
                yield e, t, node


def level_frequency(forest, n_features, mode=OBSERVED):
    """Weighted share of splits on each feature, per tree level."""
    if mode not in (OBSERVED, FULL_LEVEL):
        raise ValueError(f"unknown denominator mode {mode!r}")
    D = forest.depth
    num = np.zeros((n_features, D))
    count = np.zeros(D)
    for e, t, node in _split_records(forest):
        d = node_level(t)
        num[node.split_feature, d] += forest.weights[e]
        count[d] += 1
    if mode == OBSERVED:
        denom = count
    else:
        denom = forest.n_trees * 2.0 ** np.arange(D)
    vals = np.divide(num, denom, out=np.zeros_like(num), where=denom > 0)
    return LevelFrequencyMatrix(vals, mode)


def node_frequency(forest, n_features):
    """Weighted share of each feature at each breadth-first branch position."""
    n_branch = 2 ** forest.depth - 1
    num = np.zeros((n_branch, n_features))
    count = np.zeros(n_branch)
    for e, t, node in _split_records(forest):
        num[t, node.split_feature] += forest.weights[e]
        count[t] += 1
    vals = np.divide(num, count[:, None], out=np.zeros_like(num), where=count[:, None] > 0)
    return NodeFrequencyMatrix(vals, count.astype(np.int64))


def proximity(forest, data):
    """Weighted fraction of trees in which two samples share a leaf."""
    X = data.features if hasattr(data, "features") else np.asarray(data, dtype=float)
    leaves = forest.apply(X)
    n = X.shape[0]
    m = np.zeros((n, n))
    for e in range(forest.n_trees):
        col = leaves[:, e]
        m += forest.weights[e] * (col[:, None] == col[None, :])
    return ProximityMatrix(m / forest.n_trees)


def threshold_ranges(forest):
    out = {}
    for _, t, node in _split_records(forest):
        key = (t, node.split_feature)
        v = node.split_threshold
        lo, hi = out.get(key, (v, v))
        out[key] = (min(lo, v), max(hi, v))
    return ThresholdRanges(dict(sorted(out.items())))


def frequency_feature_set(freq, gamma):
    """Per level, the features whose frequency strictly exceeds ``gamma[d]``."""
    gamma = np.broadcast_to(np.asarray(gamma, dtype=float), (freq.depth,))
    if np.any(gamma < 0):
        raise ValueError("gamma must be non-negative")
    return [np.flatnonzero(freq.values[:, d] > gamma[d]).tolist() for d in range(freq.depth)]


def proximity_pair_set(prox, threshold):
    """Pairs ``(i, k)`` with ``i < k`` and proximity at least ``threshold``."""
    if not 0.0 < threshold <= 1.0:
        raise ValueError("proximity threshold must lie in (0, 1]")
    m = prox.values if isinstance(prox, ProximityMatrix) else np.asarray(prox)
    i, k = np.nonzero(np.triu(m >= threshold, k=1))
    return list(zip(i.tolist(), k.tolist()))


@dataclass(frozen=True)
class TeStatistics:
    """Everything the surrogate model needs from one (forest, training set)."""

    level_freq: LevelFrequencyMatrix
    node_freq: NodeFrequencyMatrix
    proximity: ProximityMatrix
    p: np.ndarray
    yhat: np.ndarray
    ranges: ThresholdRanges


def compute_statistics(forest, data, mode=FULL_LEVEL):
    """Collect TE statistics on ``data``; ``yhat`` is the forest's vote."""
    probs = class_probabilities(forest, data)
    return TeStatistics(
        level_freq=level_frequency(forest, data.n_features, mode),
        node_freq=node_frequency(forest, data.n_features),
        proximity=proximity(forest, data),
        p=probs.p,
        yhat=predict_forest(forest, data.features),
        ranges=threshold_ranges(forest),
    )


# CSV export ----------------------------------------------------------------

def _writer(fh):
    return csv.writer(fh, lineterminator="\n")


def _emit(fill, fh):
    buf = io.StringIO() if fh is None else fh
    fill(_writer(buf))
    return buf.getvalue() if fh is None else None


def level_frequency_csv(freq, feature_names, fh=None):
    def fill(w):
        w.writerow(["feature"] + [f"level_{d}" for d in range(freq.depth)])
        for j, name in enumerate(feature_names):
            w.writerow([name] + [repr(float(v)) for v in freq.values[j]])
    return _emit(fill, fh)


def node_frequency_csv(nf, feature_names, fh=None):
    def fill(w):
        w.writerow(["node", "splits"] + list(feature_names))
        for t, row in enumerate(nf.values):
            w.writerow([t, int(nf.split_counts[t])] + [repr(float(v)) for v in row])
    return _emit(fill, fh)


def threshold_ranges_csv(ranges, feature_names, fh=None):
    def fill(w):
        w.writerow(["node", "feature", "low", "high"])
        for (t, j), (lo, hi) in ranges.ranges.items():
            w.writerow([t, feature_names[j], repr(lo), repr(hi)])
    return _emit(fill, fh)


def proximity_csv(prox, fh=None):
    """Flat upper-triangle listing (i, k, m) for distribution plots."""
    def fill(w):
        w.writerow(["i", "k", "proximity"])
        m = prox.values
        for i in range(m.shape[0]):
            for k in range(i + 1, m.shape[0]):
                w.writerow([i, k, repr(float(m[i, k]))])
    return _emit(fill, fh)


def class_probability_csv(p, yhat, fh=None):
    def fill(w):
        w.writerow(["sample", "p", "yhat"])
        for i, (pi, yi) in enumerate(zip(p, yhat)):
            w.writerow([i, repr(float(pi)), int(yi)])
    return _emit(fill, fh)
