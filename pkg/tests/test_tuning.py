import numpy as np
import pytest
from helpers import tiny_instance

from forestlens.metrics import FULL_LEVEL, LevelFrequencyMatrix
from forestlens.tuning import (ZERO, CellSummary, ForestConfig, SolverConfig, TuneGrid,
                               cross_validate, gamma_from_percentile, parse_percentile, select,
                               stratified_folds)


def lf(*cols):
    return LevelFrequencyMatrix(np.array(cols, dtype=float).T, FULL_LEVEL)


def test_percentile_examples():
    f = lf([0.1, 0.2, 0.3, 0.4])
    assert gamma_from_percentile(f, 50)[0] == pytest.approx(0.2)
    assert gamma_from_percentile(f, 25)[0] == pytest.approx(0.1)
    assert gamma_from_percentile(f, 100)[0] == pytest.approx(0.4)
    assert gamma_from_percentile(f, 51)[0] == pytest.approx(0.3)
    assert gamma_from_percentile(lf([0.0, 0.7, 0.0]), 25)[0] == pytest.approx(0.7)
    assert gamma_from_percentile(lf([0.5, 0.2], [0.0, 0.0]), ZERO).tolist() == [0.0, 0.0]
    # a level without splits keeps a zero threshold
    assert gamma_from_percentile(lf([0.5, 0.2], [0.0, 0.0]), 50).tolist() == [0.2, 0.0]


def test_percentile_third_of_twelve_is_rank_four():
    vals = np.arange(1, 13) / 100
    assert gamma_from_percentile(lf(vals), 100 / 3)[0] == pytest.approx(0.04)


def test_percentile_parsing():
    assert parse_percentile("zero") == ZERO
    assert parse_percentile("100/3") == pytest.approx(100 / 3)
    assert parse_percentile(" 25 ") == 25.0
    for bad in ("0", "101", "half", "-5"):
        with pytest.raises(ValueError):
            parse_percentile(bad)
    with pytest.raises(ValueError):
        gamma_from_percentile(lf([0.1]), "one")


def test_grid_validation():
    g = TuneGrid(alphas=(0.2, 0.4), percentiles=(ZERO, 50), k=2)
    assert g.cells() == [(0.2, ZERO), (0.2, 50.0), (0.4, ZERO), (0.4, 50.0)]
    with pytest.raises(ValueError):
        TuneGrid(k=1)
    with pytest.raises(ValueError):
        TuneGrid(alphas=())
    with pytest.raises(ValueError):
        TuneGrid(percentiles=(0,))
    assert SolverConfig(budget=600).per_fold(80) == pytest.approx(7.5)
    assert SolverConfig(time_limit=3).per_fold(80) == 3.0


def test_selection_tie_breaks():
    c = [CellSummary(0, 0.4, 50.0, 90.0, 3.0, 0),
         CellSummary(1, 0.2, 25.0, 90.0, 3.0, 0),
         CellSummary(2, 0.2, 50.0, 90.0, 3.0, 0),
         CellSummary(3, 0.8, ZERO, 90.0, 2.0, 0),
         CellSummary(4, 0.6, ZERO, 85.0, 1.0, 0)]
    assert select(c).cell == 3  # fewer splits wins the fidelity tie
    assert select(c[:3]).cell == 2  # then smaller alpha, then larger h
    assert select([c[0], CellSummary(5, 0.4, ZERO, 90.0, 3.0, 0)]).cell == 0
    with pytest.raises(ValueError):
        select([])


def test_folds_partition_and_stratify():
    y = np.array([1] * 12 + [-1] * 8)
    folds = stratified_folds(y, 4, seed=3)
    joined = np.sort(np.concatenate(folds))
    assert joined.tolist() == list(range(20))
    assert all((y[f] == 1).sum() == 3 for f in folds)
    again = stratified_folds(y, 4, seed=3)
    assert all(np.array_equal(a, b) for a, b in zip(folds, again))


def test_tiny_cross_validation():
    data, _, _ = tiny_instance(6, 12)
    seen = []
    res = cross_validate(data, ForestConfig(depth=2, n_trees=3),
                         TuneGrid(alphas=(0.2, 0.8), percentiles=(ZERO, 50), k=2),
                         SolverConfig(time_limit=5), progress=seen.append)
    assert len(res.folds) == len(seen) == 2 * 2 * 2
    assert len(res.summaries) == 4
    assert (res.alpha, res.h) in [(s.alpha, s.h) for s in res.summaries]
    best = select(res.summaries)
    assert (best.alpha, best.h) == (res.alpha, res.h)
    for r in res.folds:
        assert 0.0 <= r.fidelity <= 100.0
    lines = res.grid_csv().splitlines()
    assert lines[0].startswith("cell,alpha,h,fold") and len(lines) == 9
