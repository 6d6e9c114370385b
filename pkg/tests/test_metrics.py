import numpy as np
import pytest
from helpers import (complete_tree, random_forest, recount_level_frequency, recount_node_frequency,
                     recount_proximity, toy_forest)
from hypothesis import given, settings
from hypothesis import strategies as st

from forestlens.dataset import Dataset
from forestlens.forest import Forest
from forestlens.metrics import (FULL_LEVEL, OBSERVED, class_probability_csv, compute_statistics,
                                frequency_feature_set, level_frequency, level_frequency_csv,
                                node_frequency, node_frequency_csv, proximity, proximity_csv,
                                proximity_pair_set, threshold_ranges, threshold_ranges_csv)

THIRD = 1 / 3


def test_toy_level_frequency_by_hand():
    f = toy_forest()
    obs = level_frequency(f, 4, OBSERVED).values
    # roots: x1, x2, x1; level 1: x2 x3 | x1 x1 | x3 x2
    assert obs[:, 0].tolist() == [2 / 3, THIRD, 0.0, 0.0]
    assert obs[:, 1].tolist() == pytest.approx([THIRD, THIRD, THIRD, 0.0])
    assert obs[:, 2].tolist() == [0.5, 0.5, 0.0, 0.0]
    full = level_frequency(f, 4, FULL_LEVEL).values
    # every position splits, so both denominators coincide here
    assert np.array_equal(full, obs)


def test_full_level_counts_missing_splits():
    # one tree splits only at the root: observed level 1 is empty, full level is 0
    a = complete_tree(2, [(0, 0.5), None, None], [(1, 0), (1, 0), (0, 1), (0, 1)])
    b = complete_tree(2, [(1, 0.5), (0, 0.2), None], [(1, 0), (0, 1), (0, 1), (0, 1)])
    f = Forest((a, b), np.ones(2), 2)
    obs = level_frequency(f, 2, OBSERVED).values
    full = level_frequency(f, 2, FULL_LEVEL).values
    assert obs[:, 1].tolist() == [1.0, 0.0]
    assert full[:, 1].tolist() == [0.25, 0.0]
    assert full[:, 0].tolist() == [0.5, 0.5]


def test_weights_enter_numerators_only():
    a = complete_tree(1, [(0, 0.5)], [(1, 0), (0, 1)])
    b = complete_tree(1, [(1, 0.5)], [(1, 0), (0, 1)])
    f = Forest((a, b), np.array([3.0, 1.0]), 1)
    assert level_frequency(f, 2, OBSERVED).values[:, 0].tolist() == [1.5, 0.5]
    X = np.array([[0.1, 0.9], [0.2, 0.1]])
    # same leaf in tree a only: 3 / 2
    assert proximity(f, X).values[0, 1] == 1.5


def test_unknown_mode():
    with pytest.raises(ValueError, match="mode"):
        level_frequency(toy_forest(), 4, "both")


def test_toy_node_frequency_and_ranges():
    f = toy_forest()
    nf = node_frequency(f, 4)
    assert nf.split_counts.tolist() == [3] * 7
    assert nf.values[1].tolist() == pytest.approx([THIRD, THIRD, THIRD, 0])
    assert nf.values[3].tolist() == pytest.approx([THIRD, 2 / 3, 0, 0])
    r = threshold_ranges(f)
    assert r.get(0, 0) == (0.5, 0.55)
    assert r.get(6, 1) == (0.4, 0.85)
    assert r.get(0, 3) is None
    assert len(r) == 16


def test_proximity_by_hand():
    f = toy_forest()
    X = np.array([[0.1, 0.1, 0.1, 0.0], [0.15, 0.05, 0.2, 1.0], [0.9, 0.9, 0.9, 0.0]])
    m = proximity(f, X).values
    assert np.allclose(m, recount_proximity(f, X))
    assert m[0, 1] == 1.0  # x4 differs but is never used
    assert m[0, 2] == 0.0
    assert proximity_pair_set(m, 1.0) == [(0, 1)]
    assert proximity_pair_set(proximity(f, X), 1.0) == [(0, 1)]
    with pytest.raises(ValueError):
        proximity_pair_set(m, 0.0)


def test_frequency_feature_set_is_strict():
    f = toy_forest()
    lf = level_frequency(f, 4, FULL_LEVEL)
    assert frequency_feature_set(lf, 0.0) == [[0, 1], [0, 1, 2], [0, 1]]
    assert frequency_feature_set(lf, [THIRD, THIRD, 0.5]) == [[0], [], []]
    with pytest.raises(ValueError):
        frequency_feature_set(lf, -0.1)


def test_compute_statistics_fields():
    f = toy_forest()
    rng = np.random.default_rng(0)
    X = rng.random((12, 4))
    data = Dataset(X, np.where(X[:, 0] > 0.5, 1, -1), ("x1", "x2", "x3", "x4"))
    st_ = compute_statistics(f, data)
    assert st_.level_freq.mode == FULL_LEVEL
    assert st_.proximity.values.shape == (12, 12)
    assert st_.p.shape == (12,) and np.all((st_.p >= 0) & (st_.p <= 1))
    assert set(st_.yhat.tolist()) <= {-1, 1}


def test_csv_exports():
    f = toy_forest()
    names = ("x1", "x2", "x3", "x4")
    text = level_frequency_csv(level_frequency(f, 4, OBSERVED), names)
    assert text.splitlines()[0].startswith("feature,")
    assert len(text.splitlines()) == 5
    assert len(node_frequency_csv(node_frequency(f, 4), names).splitlines()) > 1
    assert threshold_ranges_csv(threshold_ranges(f), names).count("\n") == 17
    X = np.eye(4)
    assert proximity_csv(proximity(f, X)).count("\n") >= 4
    assert class_probability_csv(np.array([0.5, 1.0]), np.array([1, -1])).count("\n") == 3


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 100_000))
def test_matches_recount(seed):
    rng = np.random.default_rng(seed)
    f, J = random_forest(rng, weights=True)
    X = rng.random((6, J))
    for mode, full in ((OBSERVED, False), (FULL_LEVEL, True)):
        assert np.allclose(level_frequency(f, J, mode).values,
                           recount_level_frequency(f, J, full), atol=1e-12)
    assert np.allclose(node_frequency(f, J).values, recount_node_frequency(f, J), atol=1e-12)
    assert np.allclose(proximity(f, X).values, recount_proximity(f, X), atol=1e-12)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 100_000))
def test_full_level_never_exceeds_observed(seed):
    rng = np.random.default_rng(seed)
    f, J = random_forest(rng)
    obs = level_frequency(f, J, OBSERVED).values
    full = level_frequency(f, J, FULL_LEVEL).values
    assert np.all(full <= obs + 1e-12)
    assert np.all(full.sum(axis=0) <= 1 + 1e-12)
