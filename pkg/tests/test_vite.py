import hashlib
import subprocess
import sys
import xml.etree.ElementTree as ET

import numpy as np
import pytest
from helpers import TOY_NAMES, toy_forest

from forestlens.metrics import (OBSERVED, LevelFrequencyMatrix, level_frequency, node_frequency,
                                threshold_ranges)
from forestlens.vite import (HIDE, HeatmapSpec, feature_order, level_heatmap_csv, percent_label,
                             render_level_heatmap, render_representative_tree,
                             representative_tree_csv)

# digests frozen from the first render of the toy forest
LEVEL_SHA = "6d19327a72be7c583c4eaa014c7eb7d1006eea27524d86c714bfe4b9db43b1fa"
TREE_SHA = "b6c0a968a7eaaaf2bccf7f9afe88153f8e370eb9bb83c388b30d0248e6675276"

SPEC = HeatmapSpec(title="toy forest")


def renders():
    f = toy_forest()
    return (render_level_heatmap(level_frequency(f, 4, OBSERVED), TOY_NAMES, SPEC),
            render_representative_tree(node_frequency(f, 4), threshold_ranges(f), 3, TOY_NAMES,
                                       SPEC))


def sha(text):
    return hashlib.sha256(text.encode()).hexdigest()


def test_frozen_digests():
    level, tree = renders()
    assert sha(level) == LEVEL_SHA
    assert sha(tree) == TREE_SHA


def test_identical_in_a_fresh_interpreter():
    code = ("import sys; sys.path.insert(0, 'tests'); import hashlib, test_vite as t; "
            "a, b = t.renders(); print(t.sha(a), t.sha(b))")
    out = subprocess.run([sys.executable, "-c", code], capture_output=True, text=True,
                         cwd=str(__import__("pathlib").Path(__file__).parents[1]), check=True)
    assert out.stdout.split() == [LEVEL_SHA, TREE_SHA]


def test_svg_is_well_formed():
    for text in renders():
        root = ET.fromstring(text.split("\n", 1)[1])
        assert root.tag.endswith("svg")


def test_percent_rounding_is_half_up():
    assert percent_label(0.0005) == "0.1%"
    assert percent_label(0.00049) == "0.0%"
    assert percent_label(1 / 3) == "33.3%"
    assert percent_label(0.12345) == "12.3%"
    assert percent_label(1.0) == "100.0%"


def test_colour_ramp():
    spec = HeatmapSpec()
    assert spec.color(0.0, 1.0) == "#ffffff"
    assert spec.color(1.0, 1.0) == "#08306b"
    assert spec.color(0.3, 0.0) == "#ffffff"  # empty column stays blank
    assert spec.text_color(1.0, 1.0) == "#ffffff"
    with pytest.raises(ValueError):
        HeatmapSpec(cell_labels="sometimes")


def test_feature_order():
    vals = np.array([[0.1, 0.1], [0.5, 0.0], [0.0, 0.2], [0.0, 0.0]])
    assert feature_order(vals) == [1, 0, 2, 3]


def test_hidden_labels():
    f = toy_forest()
    text = render_level_heatmap(level_frequency(f, 4, OBSERVED), TOY_NAMES, HeatmapSpec(cell_labels=HIDE))
    assert "%" not in text
    text = render_representative_tree(node_frequency(f, 4), threshold_ranges(f), 3, TOY_NAMES,
                                      HeatmapSpec(cell_labels=HIDE))
    assert "%" not in text and "[0.500, 0.550]" in text


def test_representative_tree_content():
    _, tree = renders()
    assert tree.count("<circle") == 8
    assert "node 0 (splits: 3)" in tree
    assert "66.7% [0.500, 0.550]" in tree


def test_companion_csv_rows():
    f = toy_forest()
    text = level_heatmap_csv(level_frequency(f, 4, OBSERVED), TOY_NAMES)
    assert text.splitlines()[-1] == "x4,0.0,0.0,0.0,0.0%,0.0%,0.0%"
    rows = representative_tree_csv(node_frequency(f, 4), threshold_ranges(f), TOY_NAMES).splitlines()
    assert rows[1] == "0,x1,0.6666666666666666,66.7%,0.5,0.55"
    assert rows[4] == "0,x4,0.0,0.0%,,"
    assert len(rows) == 1 + 7 * 4


def test_errors():
    with pytest.raises(ValueError, match="empty"):
        render_level_heatmap(LevelFrequencyMatrix(np.zeros((0, 2)), OBSERVED), (), SPEC)
    f = toy_forest()
    with pytest.raises(ValueError, match="depth 2 needs 3"):
        render_representative_tree(node_frequency(f, 4), threshold_ranges(f), 2, TOY_NAMES)
