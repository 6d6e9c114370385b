"""Bounded-variable primal simplex for LP relaxations.

The LP ``min c@x  s.t.  row_lo <= A@x <= row_hi,  lo <= x <= hi`` is put in
the form ``[A, -I] @ [x; r] = 0`` where the row activities ``r`` carry the
row bounds. The initial basis is the logical one (all ``r`` basic), so any
bound vector can be loaded into an existing basis: phase 1 minimises the sum
of basic infeasibilities and phase 2 the true cost, switching automatically.

The basis is held as a sparse LU factorisation plus a file of eta
(product-form) updates; after ``refactor_every`` pivots the basis is factored
afresh. Pricing is full Dantzig over all columns, which together with the
dense eta vectors is what limits the solver to desk-scale models.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import sparse
from scipy.sparse.linalg import splu

OPTIMAL = "optimal"
INFEASIBLE = "infeasible"
UNBOUNDED = "unbounded"
ITERATION_LIMIT = "iteration_limit"


@dataclass
class LpResult:
    status: str
    x: np.ndarray | None
    objective: float
    iterations: int


class BoundedSimplex:
    """Warm-startable primal simplex over a fixed constraint matrix.

    Parameters
    ----------
    A : sparse matrix, shape (m, n)
    c : array, shape (n,)
    row_lo, row_hi : arrays, shape (m,)
        Row activity bounds; use ``-inf``/``inf`` for one-sided rows.
    """

    def __init__(self, A, c, row_lo, row_hi, feas_tol=1e-9, opt_tol=1e-9,
                 pivot_tol=1e-9, refactor_every=64, bland_after=50):
        A = sparse.csc_matrix(A, dtype=float)
        self.m, self.n = A.shape
        m = self.m
        self.M = sparse.hstack([A, -sparse.identity(m, format="csc")], format="csc")
        self.MT = self.M.T.tocsr()
        self.cost = np.concatenate([np.asarray(c, float), np.zeros(m)])
        self.row_lo = np.asarray(row_lo, float)
        self.row_hi = np.asarray(row_hi, float)
        self.feas_tol = feas_tol
        self.opt_tol = opt_tol
        self.pivot_tol = pivot_tol
        self.refactor_every = refactor_every
        self.bland_after = bland_after
        self.total_iterations = 0
        self.reset()

    # basis bookkeeping -------------------------------------------------

    def reset(self):
        m, n = self.m, self.n
        self.head = np.arange(n, n + m)
        self.is_basic = np.zeros(n + m, bool)
        self.is_basic[self.head] = True
        self.at_upper = np.zeros(n + m, bool)
        self._refactor()

    def get_basis(self):
        return self.head.copy(), self.at_upper.copy()

    def set_basis(self, basis):
        head, at_upper = basis
        self.head = np.asarray(head).copy()
        self.at_upper = np.asarray(at_upper).copy()
        self.is_basic = np.zeros(self.n + self.m, bool)
        self.is_basic[self.head] = True
        if not self._refactor():
            self.reset()

    def _refactor(self):
        self.etas = []
        if self.m == 0:
            self.lu = None
            return True
        B = self.M[:, self.head].tocsc()
        try:
            self.lu = splu(B)
        except RuntimeError:
            return False
        return True

    def _ftran(self, v):
        """Solve ``B w = v``."""
        w = self.lu.solve(v) if self.m else v.copy()
        for r, idx, vals, piv in self.etas:
            wr = w[r] / piv
            if wr != 0.0:
                w[idx] -= vals * wr
            w[r] = wr
        return w

    def _btran(self, c):
        """Solve ``y B = c``."""
        y = np.array(c, dtype=float)
        for r, idx, vals, piv in reversed(self.etas):
            y[r] = (y[r] - y[idx] @ vals) / piv
        return self.lu.solve(y, trans="T") if self.m else y

    def _nonbasic_values(self, lo, hi):
        x = np.where(self.at_upper, hi, lo)
        bad = ~np.isfinite(x)
        if bad.any():
            alt = np.where(self.at_upper, lo, hi)
            x = np.where(bad, alt, x)
            self.at_upper = np.where(bad & np.isfinite(alt), ~self.at_upper, self.at_upper)
            x = np.where(np.isfinite(x), x, 0.0)
        x[self.head] = 0.0
        return x

    def _basic_values(self, x):
        # B x_B + N x_N = 0
        return -self._ftran(self.M @ x)

    # main loop --------------------------------------------------------

    def solve(self, lo, hi, max_iter=None, deadline=None):
        """Optimise with column bounds ``lo``/``hi`` from the current basis."""
        import time

        n, m = self.n, self.m
        lo_ext = np.concatenate([np.asarray(lo, float), self.row_lo])
        hi_ext = np.concatenate([np.asarray(hi, float), self.row_hi])
        if np.any(lo_ext > hi_ext + self.feas_tol):
            return LpResult(INFEASIBLE, None, math.inf, 0)
        if max_iter is None:
            max_iter = 50 * (n + m) + 1000
        movable = hi_ext > lo_ext

        x = self._nonbasic_values(lo_ext, hi_ext)
        xB = self._basic_values(x)
        ftol, otol, ptol = self.feas_tol, self.opt_tol, self.pivot_tol
        degenerate = 0
        bland = False
        it = 0
        while True:
            if it >= max_iter or (deadline is not None and it % 50 == 0 and time.monotonic() > deadline):
                self.total_iterations += it
                return LpResult(ITERATION_LIMIT, None, math.nan, it)
            loB = lo_ext[self.head]
            hiB = hi_ext[self.head]
            below = xB < loB - ftol
            above = xB > hiB + ftol
            phase1 = bool(below.any() or above.any())
            if phase1:
                cB = above.astype(float) - below.astype(float)
                cost = None
            else:
                cB = self.cost[self.head]
                cost = self.cost
            y = self._btran(cB)
            d = -(self.MT @ y)
            if cost is not None:
                d += cost
            d[self.is_basic] = 0.0
            # eligible entering columns
            inc = (d < -otol) & movable & ~self.at_upper
            dec = (d > otol) & movable & self.at_upper
            free = ~np.isfinite(lo_ext) & ~np.isfinite(hi_ext) & ~self.is_basic
            dec |= free & (d > otol)
            inc &= ~self.is_basic
            dec &= ~self.is_basic
            elig = inc | dec
            if not elig.any():
                self.total_iterations += it
                if phase1:
                    return LpResult(INFEASIBLE, None, math.inf, it)
                x[self.head] = xB
                return LpResult(OPTIMAL, x[:n].copy(), float(self.cost[:n] @ x[:n]), it)
            if bland:
                j = int(np.flatnonzero(elig)[0])
            else:
                score = np.where(elig, np.abs(d), -1.0)
                j = int(np.argmax(score))
            direction = 1.0 if inc[j] else -1.0

            lo_p, hi_p = self.M.indptr[j], self.M.indptr[j + 1]
            col = np.zeros(m)
            col[self.M.indices[lo_p:hi_p]] = self.M.data[lo_p:hi_p]
            alpha = self._ftran(col)
            delta = -direction * alpha  # d xB / d theta

            theta, r, leave_upper = self._ratio_test(xB, loB, hiB, delta, phase1)
            span = hi_ext[j] - lo_ext[j]
            if r < 0 and not math.isfinite(span):
                self.total_iterations += it
                return LpResult(UNBOUNDED, None, -math.inf, it)
            if span <= theta:
                # bound flip, basis unchanged
                theta = span
                xB += theta * delta
                x[j] = hi_ext[j] if direction > 0 else lo_ext[j]
                self.at_upper[j] = direction > 0
                degenerate = 0
                bland = False
                it += 1
                continue
            theta = max(theta, 0.0)
            if theta <= 1e-12:
                degenerate += 1
                if degenerate > self.bland_after:
                    bland = True
            else:
                degenerate = 0
                bland = False
            xB += theta * delta
            xj = x[j] + direction * theta
            leaving = self.head[r]
            self.is_basic[leaving] = False
            self.at_upper[leaving] = leave_upper
            x[leaving] = hi_ext[leaving] if leave_upper else lo_ext[leaving]
            if not np.isfinite(x[leaving]):
                x[leaving] = 0.0
            self.head[r] = j
            self.is_basic[j] = True
            self.at_upper[j] = False
            xB[r] = xj
            x[j] = 0.0
            self._push_eta(alpha, r)
            it += 1
            if len(self.etas) >= self.refactor_every:
                if not self._refactor():
                    self.reset()
                    x = self._nonbasic_values(lo_ext, hi_ext)
                xB = self._basic_values(x)

    def _ratio_test(self, xB, loB, hiB, delta, phase1):
        """Harris two-pass ratio test; returns (theta, row, leaves_at_upper)."""
        ftol, ptol = self.feas_tol, self.pivot_tol
        up = delta > ptol
        dn = delta < -ptol
        below = xB < loB - ftol
        above = xB > hiB + ftol
        feas = ~below & ~above
        # target bound each basic heads for as theta grows
        # feasible: moving up hits hi, moving down hits lo
        # below lo and moving up: becomes feasible at lo; above hi moving down: at hi
        tgt_hi = (feas & up) | (above & dn)
        tgt_lo = (feas & dn) | (below & up)
        cand = (tgt_hi & np.isfinite(hiB)) | (tgt_lo & np.isfinite(loB))
        if not cand.any():
            return math.inf, -1, False
        idx = np.flatnonzero(cand)
        dl = delta[idx]
        bound = np.where(tgt_hi[idx], hiB[idx], loB[idx])
        slack_tol = np.where(feas[idx], ftol, 0.0)
        relaxed = np.where(dl > 0, bound + slack_tol, bound - slack_tol)
        ratios_relaxed = (relaxed - xB[idx]) / dl
        theta_max = ratios_relaxed.min()
        exact = (bound - xB[idx]) / dl
        ok = exact <= theta_max
        if not ok.any():
            ok = exact <= exact.min()
        pick = np.flatnonzero(ok)
        best = pick[np.argmax(np.abs(dl[pick]))]
        r = int(idx[best])
        return float(exact[best]), r, bool(tgt_hi[r])

    def _push_eta(self, alpha, r):
        idx = np.flatnonzero(alpha)
        idx = idx[idx != r]
        self.etas.append((r, idx, alpha[idx].copy(), alpha[r]))


def solve_lp(c, A, row_lo, row_hi, lo, hi, **kw):
    """One-shot convenience wrapper around :class:`BoundedSimplex`."""
    lp = BoundedSimplex(A, c, row_lo, row_hi, **kw)
    return lp.solve(lo, hi)
