"""SVG heatmaps of feature usage in a forest.

Two pictures are produced: a feature-by-level grid and a representative
complete tree whose branch positions each carry a small per-feature heatmap
with the observed threshold interval. Output is plain text built with fixed
number formatting, so equal inputs give byte-identical files.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass
from decimal import ROUND_HALF_UP, Decimal
from xml.sax.saxutils import escape

import numpy as np

SHOW_PERCENT = "show-percent"
HIDE = "hide"


@dataclass(frozen=True)
class HeatmapSpec:
    """Rendering options.

    ``low`` and ``high`` are the RGB end points of a linear colour ramp;
    ``high`` should be the darker one.
    """

    low: tuple = (255, 255, 255)
    high: tuple = (8, 48, 107)
    cell_labels: str = SHOW_PERCENT
    title: str = ""

    def __post_init__(self):
        if self.cell_labels not in (SHOW_PERCENT, HIDE):
            raise ValueError(f"cell_labels must be {SHOW_PERCENT!r} or {HIDE!r}")

    def color(self, v, vmax):
        """Hex colour for ``v`` on the ramp scaled to ``[0, vmax]``."""
        t = 0.0 if vmax <= 0 else min(max(v / vmax, 0.0), 1.0)
        rgb = [round(a + (b - a) * t) for a, b in zip(self.low, self.high)]
        return "#{:02x}{:02x}{:02x}".format(*rgb)

    def text_color(self, v, vmax):
        t = 0.0 if vmax <= 0 else v / vmax
        return "#ffffff" if t > 0.55 else "#000000"


def percent_label(v):
    """Frequency in [0, 1] as a percentage rounded half-up to one decimal."""
    d = (Decimal(repr(float(v))) * 100).quantize(Decimal("0.1"), rounding=ROUND_HALF_UP)
    return f"{d}%"


def _num(v):
    return f"{v:.2f}".rstrip("0").rstrip(".")


def _interval(lo, hi):
    if lo == hi:
        return f"{lo:.3f}"
    return f"[{lo:.3f}, {hi:.3f}]"


class _Svg:
    def __init__(self, width, height):
        self.width = width
        self.height = height
        self.parts = []

    def rect(self, x, y, w, h, fill, stroke="#999999"):
        self.parts.append(f'<rect x="{_num(x)}" y="{_num(y)}" width="{_num(w)}" height="{_num(h)}" '
                          f'fill="{fill}" stroke="{stroke}" stroke-width="0.5"/>')

    def text(self, x, y, s, size=11, anchor="start", fill="#000000", weight=None):
        extra = f' font-weight="{weight}"' if weight else ""
        self.parts.append(f'<text x="{_num(x)}" y="{_num(y)}" font-size="{size}" '
                          f'text-anchor="{anchor}" fill="{fill}"{extra}>{escape(s)}</text>')

    def line(self, x1, y1, x2, y2):
        self.parts.append(f'<line x1="{_num(x1)}" y1="{_num(y1)}" x2="{_num(x2)}" y2="{_num(y2)}" '
                          f'stroke="#555555" stroke-width="1"/>')

    def circle(self, x, y, r, fill="#eeeeee"):
        self.parts.append(f'<circle cx="{_num(x)}" cy="{_num(y)}" r="{_num(r)}" fill="{fill}" '
                          f'stroke="#555555" stroke-width="1"/>')

    def render(self):
        head = (f'<svg xmlns="http://www.w3.org/2000/svg" width="{_num(self.width)}" '
                f'height="{_num(self.height)}" viewBox="0 0 {_num(self.width)} {_num(self.height)}" '
                f'font-family="Helvetica, Arial, sans-serif">')
        return "\n".join(['<?xml version="1.0" encoding="UTF-8"?>', head, *self.parts, "</svg>"]) + "\n"


def feature_order(values):
    """Row order for the level heatmap: total frequency descending, then index."""
    totals = np.asarray(values).sum(axis=1)
    return sorted(range(len(totals)), key=lambda j: (-totals[j], j))


def render_level_heatmap(freq, feature_names, spec=HeatmapSpec()):
    """Feature-by-level grid, shaded relative to each column's maximum."""
    vals = freq.values
    n_feat, D = vals.shape
    if n_feat == 0 or D == 0:
        raise ValueError("empty frequency matrix")
    cw, ch, left = 72, 24, 150
    top = 56 if spec.title else 32
    svg = _Svg(left + cw * D + 16, top + ch * n_feat + 16)
    if spec.title:
        svg.text(left + cw * D / 2, 22, spec.title, size=14, anchor="middle", weight="bold")
    for d in range(D):
        svg.text(left + cw * d + cw / 2, top - 8, f"d={d}", anchor="middle")
    colmax = vals.max(axis=0)
    for r, j in enumerate(feature_order(vals)):
        y = top + ch * r
        svg.text(left - 8, y + ch / 2 + 4, feature_names[j], anchor="end")
        for d in range(D):
            v = vals[j, d]
            svg.rect(left + cw * d, y, cw, ch, spec.color(v, colmax[d]))
            if spec.cell_labels == SHOW_PERCENT:
                svg.text(left + cw * d + cw / 2, y + ch / 2 + 4, percent_label(v), size=10,
                         anchor="middle", fill=spec.text_color(v, colmax[d]))
    return svg.render()


def level_heatmap_csv(freq, feature_names, fh=None):
    """Rows in the rendered order, one percent label per level."""
    buf = io.StringIO() if fh is None else fh
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["feature"] + [f"level_{d}" for d in range(freq.depth)]
               + [f"level_{d}_percent" for d in range(freq.depth)])
    for j in feature_order(freq.values):
        row = freq.values[j]
        w.writerow([feature_names[j]] + [repr(float(v)) for v in row]
                   + [percent_label(v) for v in row])
    return buf.getvalue() if fh is None else None


def render_representative_tree(nodefreq, ranges, depth, feature_names, spec=HeatmapSpec()):
    """Complete depth-``depth`` tree; every branch slot shows a per-feature heatmap.

    Positions where no tree splits are drawn with an all-blank heatmap.
    """
    vals = nodefreq.values
    n_branch = 2 ** depth - 1
    if vals.shape[0] != n_branch:
        raise ValueError(f"node-frequency matrix has {vals.shape[0]} rows, depth {depth} needs {n_branch}")
    n_feat = vals.shape[1]
    cell, row_h, name_w, int_w, pad = 14, 16, 70, 110, 6
    box_w = pad * 2 + cell + 4 + name_w + int_w
    box_h = 20 + row_h * n_feat + pad
    slot_w = box_w + 20
    level_h = box_h + 50
    width = slot_w * 2 ** (depth - 1) + 20 if depth > 0 else slot_w
    top = 40 if spec.title else 12
    height = top + level_h * depth + 40
    svg = _Svg(width, height)
    if spec.title:
        svg.text(width / 2, 24, spec.title, size=14, anchor="middle", weight="bold")

    def center(t):
        d = int(np.floor(np.log2(t + 1)))
        k = t - (2 ** d - 1)
        span = (width - 20) / 2 ** d
        return 10 + span * (k + 0.5), top + level_h * d

    # edges first so boxes paint over them
    for t in range(n_branch):
        x, y = center(t)
        for c in (2 * t + 1, 2 * t + 2):
            cx, cy = center(c)
            svg.line(x, y + box_h, cx, cy)
    for t in range(n_branch):
        x, y = center(t)
        x0 = x - box_w / 2
        row = vals[t]
        rmax = row.max()
        svg.rect(x0, y, box_w, box_h, "#fafafa", stroke="#333333")
        n_split = int(nodefreq.split_counts[t]) if nodefreq.split_counts is not None else 0
        svg.text(x0 + pad, y + 14, f"node {t} (splits: {n_split})", size=10, weight="bold")
        for j in range(n_feat):
            ry = y + 20 + row_h * j
            svg.rect(x0 + pad, ry, cell, cell, spec.color(row[j], rmax))
            label = feature_names[j]
            svg.text(x0 + pad + cell + 4, ry + cell - 3, label, size=10)
            rng = ranges.get(t, j)
            if rng is not None:
                txt = _interval(*rng)
                if spec.cell_labels == SHOW_PERCENT:
                    txt = f"{percent_label(row[j])} {txt}"
                svg.text(x0 + pad + cell + 4 + name_w, ry + cell - 3, txt, size=9)
    for t in range(n_branch, 2 ** (depth + 1) - 1):
        x, y = center(t)
        svg.circle(x, y + 8, 8)
    return svg.render()


def representative_tree_csv(nodefreq, ranges, feature_names, fh=None):
    buf = io.StringIO() if fh is None else fh
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["node", "feature", "frequency", "percent", "low", "high"])
    for t, row in enumerate(nodefreq.values):
        for j, v in enumerate(row):
            rng = ranges.get(t, j)
            lo, hi = ("", "") if rng is None else (repr(rng[0]), repr(rng[1]))
            w.writerow([t, feature_names[j], repr(float(v)), percent_label(v), lo, hi])
    return buf.getvalue() if fh is None else None
