"""Generic mixed-integer linear model container.

A :class:`MilpModel` stores a minimisation problem

    min  c @ x + c0
    s.t. row_lo <= A @ x <= row_hi
         lb <= x <= ub,  x[j] in {0, 1} for binary j

with named columns and tagged rows. Models are assembled with
:class:`ModelBuilder`, audited with :func:`check_solution` and exported
to CPLEX-LP text with :func:`write_lp`.
"""

from __future__ import annotations

import io
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import sparse

FEAS_TOL = 1e-6
INT_TOL = 1e-6


@dataclass(frozen=True)
class MilpModel:
    names: tuple
    lb: np.ndarray
    ub: np.ndarray
    binary: np.ndarray
    priority: np.ndarray
    c: np.ndarray
    c0: float
    A: sparse.csr_matrix
    row_lo: np.ndarray
    row_hi: np.ndarray
    row_tags: tuple
    index: dict
    meta: dict = field(default_factory=dict, compare=False)

    @property
    def n_vars(self):
        return len(self.names)

    @property
    def n_rows(self):
        return self.A.shape[0]

    def rows_with_prefix(self, prefix):
        return [k for k, tag in enumerate(self.row_tags) if tag.startswith(prefix)]

    def var(self, name):
        return self.index[name]

    def objective(self, x):
        return float(self.c @ np.asarray(x, dtype=float) + self.c0)


class ModelBuilder:
    """Incremental assembly of a :class:`MilpModel`.

    Variables get a branching ``priority`` (higher branches first); rows are
    added as ``{name: coef}`` dicts and tagged for later auditing.
    """

    def __init__(self):
        self._names = []
        self._index = {}
        self._lb = []
        self._ub = []
        self._binary = []
        self._priority = []
        self._cost = {}
        self.c0 = 0.0
        self._rows = []
        self._lo = []
        self._hi = []
        self._tags = []

    def add_var(self, name, lb=0.0, ub=1.0, binary=False, priority=0):
        if name in self._index:
            raise ValueError(f"duplicate variable {name!r}")
        self._index[name] = len(self._names)
        self._names.append(name)
        self._lb.append(float(lb))
        self._ub.append(float(ub))
        self._binary.append(bool(binary))
        self._priority.append(int(priority))
        return self._index[name]

    def fix(self, name, value):
        k = self._index[name]
        self._lb[k] = self._ub[k] = float(value)

    def set_bounds(self, name, lb=None, ub=None):
        k = self._index[name]
        if lb is not None:
            self._lb[k] = float(lb)
        if ub is not None:
            self._ub[k] = float(ub)

    def add_cost(self, name, coef):
        k = self._index[name]
        self._cost[k] = self._cost.get(k, 0.0) + float(coef)

    def add_row(self, coefs, lo=-math.inf, hi=math.inf, tag=""):
        row = {}
        for name, v in coefs.items():
            k = self._index[name]
            row[k] = row.get(k, 0.0) + float(v)
        self._rows.append(row)
        self._lo.append(float(lo))
        self._hi.append(float(hi))
        self._tags.append(tag)

    def le(self, coefs, rhs, tag=""):
        self.add_row(coefs, hi=rhs, tag=tag)

    def ge(self, coefs, rhs, tag=""):
        self.add_row(coefs, lo=rhs, tag=tag)

    def eq(self, coefs, rhs, tag=""):
        self.add_row(coefs, lo=rhs, hi=rhs, tag=tag)

    def build(self, meta=None):
        n = len(self._names)
        indptr, indices, data = [0], [], []
        for row in self._rows:
            for k in sorted(row):
                indices.append(k)
                data.append(row[k])
            indptr.append(len(indices))
        A = sparse.csr_matrix(
            (np.asarray(data, float), np.asarray(indices, np.int64), np.asarray(indptr, np.int64)),
            shape=(len(self._rows), n),
        )
        c = np.zeros(n)
        for k, v in self._cost.items():
            c[k] = v
        return MilpModel(
            names=tuple(self._names),
            lb=np.asarray(self._lb, float),
            ub=np.asarray(self._ub, float),
            binary=np.asarray(self._binary, bool),
            priority=np.asarray(self._priority, np.int64),
            c=c,
            c0=float(self.c0),
            A=A,
            row_lo=np.asarray(self._lo, float),
            row_hi=np.asarray(self._hi, float),
            row_tags=tuple(self._tags),
            index=dict(self._index),
            meta=dict(meta or {}),
        )


@dataclass
class Violation:
    kind: str  # "row", "bound" or "integrality"
    where: str
    amount: float

    def __str__(self):
        return f"{self.kind}:{self.where}:{self.amount:.3g}"


def check_solution(model, x, tol=FEAS_TOL, int_tol=INT_TOL):
    """Return every violated row, bound and integrality condition.

    An empty list certifies that ``x`` is feasible within ``tol``.
    """
    x = np.asarray(x, dtype=float)
    if x.shape != (model.n_vars,):
        raise ValueError(f"solution has {x.shape} entries, model has {model.n_vars} variables")
    if not np.all(np.isfinite(x)):
        raise ValueError("solution contains non-finite values")
    out = []
    act = model.A @ x
    for k in np.flatnonzero((act < model.row_lo - tol) | (act > model.row_hi + tol)):
        amount = max(model.row_lo[k] - act[k], act[k] - model.row_hi[k])
        out.append(Violation("row", model.row_tags[k] or f"r{k}", float(amount)))
    for j in np.flatnonzero((x < model.lb - tol) | (x > model.ub + tol)):
        amount = max(model.lb[j] - x[j], x[j] - model.ub[j])
        out.append(Violation("bound", model.names[j], float(amount)))
    frac = np.abs(x - np.round(x))
    for j in np.flatnonzero(model.binary & (frac > int_tol)):
        out.append(Violation("integrality", model.names[j], float(frac[j])))
    return out


def _fmt(v):
    if v == int(v) and abs(v) < 1e15:
        return str(int(v))
    return repr(float(v))


def _expr(terms):
    parts = []
    for name, v in terms:
        if v == 0:
            continue
        sign = "-" if v < 0 else "+"
        mag = abs(v)
        coef = "" if mag == 1 else _fmt(mag) + " "
        parts.append(f"{sign} {coef}{name}")
    if not parts:
        return "0"
    text = " ".join(parts)
    return text[2:] if text.startswith("+ ") else "-" + text[1:]


def _wrap(text, width=78):
    body = text.lstrip(" ")
    toks = body.split(" ")
    lines, cur = [], text[:len(text) - len(body)] + toks[0]
    for tok in toks[1:]:
        if len(cur) + 1 + len(tok) > width:
            lines.append(cur)
            cur = "   " + tok
        else:
            cur = f"{cur} {tok}"
    lines.append(cur)
    return "\n".join(lines)


def _lp_name(tag, k):
    clean = "".join(ch if ch.isalnum() or ch in "_." else "_" for ch in tag)
    return f"c{k}_{clean}" if clean else f"c{k}"


def write_lp(model, fh=None):
    """Write ``model`` in CPLEX-LP format.

    Output depends only on the model contents, so identical models give
    byte-identical files. Returns the text when ``fh`` is None.
    """
    buf = io.StringIO() if fh is None else fh
    names = model.names
    buf.write("\\ forestlens MILP export\n")
    buf.write("Minimize\n")
    obj = [(names[j], model.c[j]) for j in np.flatnonzero(model.c)]
    body = _expr(obj)
    if model.c0:
        body += (" + " if model.c0 > 0 else " - ") + _fmt(abs(model.c0)) + " constant"
    buf.write(_wrap(" obj: " + body) + "\n")
    buf.write("Subject To\n")
    A = model.A.tocsr()
    for k in range(model.n_rows):
        lo, hi = model.row_lo[k], model.row_hi[k]
        start, stop = A.indptr[k], A.indptr[k + 1]
        terms = [(names[j], v) for j, v in zip(A.indices[start:stop], A.data[start:stop])]
        expr = _expr(terms)
        label = _lp_name(model.row_tags[k], k)
        if lo == hi:
            buf.write(_wrap(f" {label}: {expr} = {_fmt(hi)}") + "\n")
            continue
        if lo > -math.inf:
            suffix = "_lo" if hi < math.inf else ""
            buf.write(_wrap(f" {label}{suffix}: {expr} >= {_fmt(lo)}") + "\n")
        if hi < math.inf:
            suffix = "_hi" if lo > -math.inf else ""
            buf.write(_wrap(f" {label}{suffix}: {expr} <= {_fmt(hi)}") + "\n")
    buf.write("Bounds\n")
    if model.c0:
        buf.write(" constant = 1\n")
    for j, name in enumerate(names):
        lo, hi = model.lb[j], model.ub[j]
        if lo == hi:
            buf.write(f" {name} = {_fmt(lo)}\n")
        elif lo == -math.inf and hi == math.inf:
            buf.write(f" {name} free\n")
        else:
            lo_s = "-inf" if lo == -math.inf else _fmt(lo)
            hi_s = "+inf" if hi == math.inf else _fmt(hi)
            buf.write(f" {lo_s} <= {name} <= {hi_s}\n")
    bins = [names[j] for j in np.flatnonzero(model.binary)]
    if bins:
        buf.write("Binaries\n")
        for j in range(0, len(bins), 8):
            buf.write(" " + " ".join(bins[j:j + 8]) + "\n")
    buf.write("End\n")
    if fh is None:
        return buf.getvalue()
    return None
