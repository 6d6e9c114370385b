"""Grid search over the sparsity weight and the frequency-filter percentile."""

from __future__ import annotations

import csv
import io
import math
import time
from dataclasses import dataclass, field

import numpy as np
from sklearn.model_selection import StratifiedKFold

from . import bnb
from .evaluation import fidelity
from .forest import train_forest
from .metrics import compute_statistics
from .miret import STRENGTHENED, MiretHyperparams, build, s_name
from .surrogate import decode

ZERO = "zero"


def _check_h(h):
    if isinstance(h, str):
        if h != ZERO:
            raise ValueError(f"percentile must be a number in (0, 100] or {ZERO!r}, got {h!r}")
        return h
    h = float(h)
    if not 0.0 < h <= 100.0:
        raise ValueError(f"percentile must lie in (0, 100], got {h}")
    return h


def parse_percentile(text):
    """``"zero"``, a plain number, or a fraction such as ``100/3``."""
    text = str(text).strip()
    if text == ZERO:
        return ZERO
    if "/" in text:
        num, den = text.split("/", 1)
        return _check_h(float(num) / float(den))
    return _check_h(float(text))


def gamma_from_percentile(freq, h):
    """Per-level thresholds: the nearest-rank ``h``-th percentile of the positive frequencies.

    Parameters
    ----------
    freq : LevelFrequencyMatrix
    h : float or "zero"
        With "zero" every threshold is 0, so any feature the forest splits
        on at a level stays available there.

    Returns
    -------
    ndarray of shape (depth,)
    """
    h = _check_h(h)
    vals = np.asarray(freq.values, dtype=float)
    out = np.zeros(vals.shape[1])
    if h == ZERO:
        return out
    for d in range(vals.shape[1]):
        pos = np.sort(vals[:, d][vals[:, d] > 0])
        if pos.size:
            # small slack so that e.g. 100/4 of 4 values is rank 1, not 2
            rank = max(1, math.ceil(h / 100.0 * pos.size - 1e-9))
            out[d] = pos[rank - 1]
    return out


@dataclass(frozen=True)
class TuneGrid:
    alphas: tuple = (0.2, 0.4, 0.5, 0.6, 0.8)
    percentiles: tuple = (ZERO, 50.0, 100.0 / 3, 25.0)
    k: int = 4

    def __post_init__(self):
        if self.k < 2:
            raise ValueError("k must be at least 2")
        if not self.alphas or not self.percentiles:
            raise ValueError("grid must be non-empty")
        if any(a < 0 for a in self.alphas):
            raise ValueError("alphas must be non-negative")
        object.__setattr__(self, "alphas", tuple(float(a) for a in self.alphas))
        object.__setattr__(self, "percentiles", tuple(_check_h(h) for h in self.percentiles))

    def cells(self):
        return [(a, h) for a in self.alphas for h in self.percentiles]


@dataclass(frozen=True)
class ForestConfig:
    depth: int = 2
    n_trees: int = 100
    seed: int = 0
    max_features: object = None


@dataclass(frozen=True)
class SolverConfig:
    """``time_limit`` is per fold; when None, ``budget`` is shared evenly over all folds."""

    budget: float = 600.0
    time_limit: float | None = None
    m_bar: float | None = 1.0
    epsilon: float = 1e-3
    formulation: str = STRENGTHENED
    seed: int = 0

    def per_fold(self, n_runs):
        if self.time_limit is not None:
            return float(self.time_limit)
        return self.budget / n_runs


def stratified_folds(labels, k, seed=0):
    """Validation index arrays of a shuffled stratified ``k``-fold partition."""
    labels = np.asarray(labels)
    skf = StratifiedKFold(n_splits=k, shuffle=True, random_state=seed)
    return [np.sort(val) for _, val in skf.split(np.zeros((labels.size, 1)), labels)]


@dataclass(frozen=True)
class FoldResult:
    cell: int
    alpha: float
    h: object
    fold: int
    fidelity: float
    sparsity: int
    gap: float
    time: float
    status: str
    flagged: bool = False


@dataclass(frozen=True)
class CellSummary:
    cell: int
    alpha: float
    h: object
    mean_fidelity: float
    mean_sparsity: float
    n_flagged: int


@dataclass
class TuneResult:
    alpha: float
    h: object
    summaries: list
    folds: list = field(default_factory=list)

    def grid_csv(self, fh=None):
        buf = io.StringIO() if fh is None else fh
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["cell", "alpha", "h", "fold", "fidelity", "sparsity", "gap", "time",
                    "status", "flagged"])
        for r in self.folds:
            w.writerow([r.cell, r.alpha, _h_text(r.h), r.fold, f"{r.fidelity:.4f}", r.sparsity,
                        "" if math.isinf(r.gap) else f"{r.gap:.4f}", f"{r.time:.3f}",
                        r.status, int(r.flagged)])
        return buf.getvalue() if fh is None else None


def _h_text(h):
    return h if h == ZERO else repr(float(h))


def _h_key(h):
    return -1.0 if h == ZERO else float(h)


def select(summaries):
    """Highest mean fidelity, then fewest active splits, then smaller alpha, then larger h."""
    if not summaries:
        raise ValueError("nothing to select from")
    return min(summaries, key=lambda c: (-round(c.mean_fidelity, 9), round(c.mean_sparsity, 9),
                                         c.alpha, -_h_key(c.h)))


def _run_fold(train, val, fcfg, scfg, alpha, h, time_limit):
    t0 = time.monotonic()
    forest = train_forest(train, fcfg.depth, fcfg.n_trees, fcfg.seed, fcfg.max_features)
    stats = compute_statistics(forest, train)
    hp = MiretHyperparams(alpha=alpha, gamma=gamma_from_percentile(stats.level_freq, h),
                          m_bar=scfg.m_bar, epsilon=scfg.epsilon, time_limit=time_limit,
                          formulation=scfg.formulation)
    try:
        model = build(train, stats, hp)
    except ValueError as exc:
        if "threshold" not in str(exc):
            raise
        return 0.0, 0, math.inf, time.monotonic() - t0, "no-features", True
    rep, x = bnb.solve(model, time_limit, seed=scfg.seed)
    if x is None:
        return 0.0, 0, math.inf, time.monotonic() - t0, rep.status, True
    tree = decode(model, x)
    sparsity = int(round(sum(x[model.var(s_name(t, j))]
                             for t in range(2 ** fcfg.depth - 1)
                             for j in model.meta["allowed"][int(math.log2(t + 1))])))
    fid = fidelity(tree, forest, val)
    return fid, sparsity, rep.gap, time.monotonic() - t0, rep.status, False


def cross_validate(data, forest_config=ForestConfig(), grid=TuneGrid(),
                   solver_config=SolverConfig(), fold_seed=0, progress=None):
    """Stratified k-fold search over ``grid.cells()``.

    Each fold trains a fresh forest on the other folds, builds and solves the
    surrogate model there, and scores fidelity on the held-out fold. A fold
    where the solver finds no tree scores 0 and is flagged.

    Returns
    -------
    TuneResult
    """
    folds = stratified_folds(data.labels, grid.k, fold_seed)
    cells = grid.cells()
    limit = solver_config.per_fold(grid.k * len(cells))
    all_idx = np.arange(data.n_samples)
    rows, summaries = [], []
    for c, (alpha, h) in enumerate(cells):
        per = []
        for f, val_idx in enumerate(folds):
            train = data.subset(np.setdiff1d(all_idx, val_idx))
            val = data.subset(val_idx)
            res = FoldResult(c, alpha, h, f, *_run_fold(train, val, forest_config,
                                                        solver_config, alpha, h, limit))
            per.append(res)
            if progress is not None:
                progress(res)
        rows.extend(per)
        summaries.append(CellSummary(c, alpha, h,
                                     float(np.mean([r.fidelity for r in per])),
                                     float(np.mean([r.sparsity for r in per])),
                                     sum(r.flagged for r in per)))
    best = select(summaries)
    return TuneResult(best.alpha, best.h, summaries, rows)
