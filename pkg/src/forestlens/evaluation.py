"""Fidelity, accuracy and structure comparisons between a surrogate and its forest."""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field, fields

import numpy as np

from .forest import Forest, predict_forest
from .metrics import proximity
from .surrogate import SurrogateTree
from .surrogate import predict as predict_surrogate


def _predict(model, X):
    if isinstance(model, SurrogateTree):
        return predict_surrogate(model, X)
    if isinstance(model, Forest):
        return predict_forest(model, X)
    return np.asarray(model(X))


def agreement(reference, other):
    """``1 - sum r (r - o) / (2n)`` as a percentage, for ±1 vectors."""
    r = np.asarray(reference, dtype=float)
    o = np.asarray(other, dtype=float)
    if r.size == 0:
        raise ValueError("cannot score an empty sample")
    if r.shape != o.shape:
        raise ValueError("prediction vectors differ in length")
    return 100.0 * (1.0 - float(np.sum(r * (r - o))) / (2.0 * r.size))


def fidelity(surrogate, forest, data):
    X = data.features
    return agreement(_predict(forest, X), _predict(surrogate, X))


def accuracy(predictor, data):
    return agreement(data.labels, _predict(predictor, data.features))


def miret_level_frequency(tree):
    """Share of nodes per level whose hyperplane uses each feature, shape (|J|, D)."""
    A = tree.snapped_coef() != 0
    D = tree.depth
    out = np.zeros((tree.n_features, D))
    for d in range(D):
        nodes = range(2 ** d - 1, 2 ** (d + 1) - 1)
        out[:, d] = A[list(nodes)].sum(axis=0) / len(nodes)
    return out


@dataclass(frozen=True)
class ProximityAgreement:
    u: float  # nan when the forest has no always-together pair
    u_bar: float
    n_u: int
    n_u_bar: int


def proximity_agreement(surrogate, forest, data, together=1.0, apart=0.0):
    """How far the surrogate's partition respects the forest's extreme pairs.

    ``u``: share of pairs with forest proximity >= ``together`` that share a
    surrogate leaf. ``u_bar``: share of pairs with proximity <= ``apart``
    that the surrogate separates.
    """
    if data.n_samples == 0:
        raise ValueError("empty dataset")
    m = proximity(forest, data).values
    leaf = surrogate.apply(data.features)
    iu = np.triu_indices(data.n_samples, k=1)
    mv = m[iu]
    same = leaf[iu[0]] == leaf[iu[1]]
    close = mv >= together
    far = mv <= apart
    n_u, n_ub = int(close.sum()), int(far.sum())
    u = 100.0 * float(same[close].sum()) / n_u if n_u else math.nan
    u_bar = 100.0 * float((~same)[far].sum()) / n_ub if n_ub else math.nan
    return ProximityAgreement(u, u_bar, n_u, n_ub)


@dataclass(frozen=True)
class EvalReport:
    dataset: str
    depth: int
    formulation: str
    split: str
    fid: float
    acc_miret: float
    acc_rf: float
    u: float
    u_bar: float
    n_u: int
    n_u_bar: int
    effective_depth: int
    n_features_used: int
    level_freq: np.ndarray = field(default=None, repr=False, compare=False)


def evaluate(surrogate, forest, data, dataset="", formulation="", split="test"):
    from .surrogate import effective_depth

    pa = proximity_agreement(surrogate, forest, data)
    return EvalReport(
        dataset=dataset,
        depth=surrogate.depth,
        formulation=formulation,
        split=split,
        fid=fidelity(surrogate, forest, data),
        acc_miret=accuracy(surrogate, data),
        acc_rf=accuracy(forest, data),
        u=pa.u,
        u_bar=pa.u_bar,
        n_u=pa.n_u,
        n_u_bar=pa.n_u_bar,
        effective_depth=effective_depth(surrogate),
        n_features_used=len(surrogate.used_features()),
        level_freq=miret_level_frequency(surrogate),
    )


REPORT_FIELDS = tuple(f.name for f in fields(EvalReport) if f.name != "level_freq")


def reports_csv(reports, fh=None):
    """One row per report; undefined percentages are written as empty cells."""
    buf = io.StringIO() if fh is None else fh
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(REPORT_FIELDS)
    for rep in reports:
        row = []
        for k in REPORT_FIELDS:
            v = getattr(rep, k)
            if isinstance(v, float):
                row.append("" if math.isnan(v) else f"{v:.4f}")
            else:
                row.append(v)
        w.writerow(row)
    return buf.getvalue() if fh is None else None


def format_report(rep):
    """Plain-text table of one report."""
    def pct(v):
        return "n/a" if isinstance(v, float) and math.isnan(v) else f"{v:.1f}"
    lines = [
        f"dataset          {rep.dataset}",
        f"split            {rep.split}",
        f"depth            {rep.depth} (effective {rep.effective_depth})",
        f"formulation      {rep.formulation}",
        f"FID              {pct(rep.fid)}",
        f"ACC surrogate    {pct(rep.acc_miret)}",
        f"ACC forest       {pct(rep.acc_rf)}",
        f"U                {pct(rep.u)}  (|U| = {rep.n_u})",
        f"U-bar            {pct(rep.u_bar)}  (|U-bar| = {rep.n_u_bar})",
        f"features used    {rep.n_features_used}",
    ]
    return "\n".join(lines) + "\n"
