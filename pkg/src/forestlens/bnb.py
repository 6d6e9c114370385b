"""Best-first LP-based branch-and-bound for :class:`~forestlens.milp.MilpModel`.

Node LPs reuse one :class:`~forestlens.simplex.BoundedSimplex`; each node only
changes column bounds, so the basis left by the previous node is a valid
starting point. Open nodes are stored as a vector of binary fixings and keyed
by the parent LP bound (ties favour deeper, then newer nodes, which makes the
search dive naturally). Seeded rounding dives supply a first incumbent and a
neighbourhood search around it improves the incumbent between tree nodes.
"""

from __future__ import annotations

import csv
import heapq
import math
import time
from dataclasses import dataclass, field

import numpy as np

from .milp import FEAS_TOL, INT_TOL
from .simplex import INFEASIBLE, OPTIMAL, UNBOUNDED, BoundedSimplex

GAP_EPS = 1e-10

STATUS_OPTIMAL = "optimal"
STATUS_FEASIBLE_TIMEOUT = "feasible-timeout"
STATUS_INFEASIBLE = "infeasible"
STATUS_TIMEOUT = "timeout"  # limit hit before any feasible point was found


@dataclass
class SolveReport:
    status: str
    objective: float
    bound: float
    gap: float
    time: float
    nodes: int
    lp_iterations: int = 0
    log: list = field(default_factory=list, repr=False)

    def write_log(self, path_or_fh):
        """Dump the convergence trace as CSV (time, nodes, incumbent, bound, gap)."""
        own = isinstance(path_or_fh, (str, bytes)) or hasattr(path_or_fh, "__fspath__")
        fh = open(path_or_fh, "w", newline="") if own else path_or_fh
        try:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["time", "nodes", "incumbent", "bound", "gap"])
            for rec in self.log:
                w.writerow([f"{rec[0]:.6f}", rec[1], repr(rec[2]), repr(rec[3]), repr(rec[4])])
        finally:
            if own:
                fh.close()


def gap_percent(incumbent, bound):
    if not math.isfinite(incumbent):
        return math.inf
    if not math.isfinite(bound):
        return math.inf
    return max(0.0, 100.0 * (incumbent - bound) / max(abs(incumbent), GAP_EPS))


class _Reduced:
    """Model with fixed columns substituted out."""

    def __init__(self, model):
        fixed = model.lb == model.ub
        self.model = model
        self.keep = np.flatnonzero(~fixed)
        self.fixed_vals = np.where(fixed, model.lb, 0.0)
        A = model.A.tocsc()
        shift = A @ self.fixed_vals
        Ak = A[:, self.keep].tocsr()
        nnz = np.diff(Ak.indptr)
        lo = model.row_lo - shift
        hi = model.row_hi - shift
        empty = nnz == 0
        self.infeasible = bool(np.any(empty & ((lo > FEAS_TOL) | (hi < -FEAS_TOL))))
        rows = np.flatnonzero(~empty)
        self.A = Ak[rows]
        self.row_lo = lo[rows]
        self.row_hi = hi[rows]
        self.c = model.c[self.keep]
        self.c0 = float(model.c0 + model.c @ self.fixed_vals)
        self.lb = model.lb[self.keep]
        self.ub = model.ub[self.keep]
        self.binary = model.binary[self.keep]
        self.priority = model.priority[self.keep]

    def expand(self, xr):
        x = self.fixed_vals.copy()
        x[self.keep] = xr
        return x


class _Search:
    def __init__(self, red, time_limit, seed, node_limit, heur_share, log_every):
        self.red = red
        self.t0 = time.monotonic()
        self.deadline = self.t0 + time_limit if math.isfinite(time_limit) else None
        self.rng = np.random.default_rng(seed)
        self.node_limit = node_limit
        self.log_every = log_every
        self.lp = BoundedSimplex(red.A, red.c, red.row_lo, red.row_hi)
        self.bin_idx = np.flatnonzero(red.binary)
        self.inc_obj = math.inf
        self.inc_x = None
        self.nodes = 0
        self.log = []
        self._last_log = -math.inf
        self.timed_out = False
        self.csc = red.A.tocsc()
        self.csr = red.A.tocsr()
        self.bin_pos = -np.ones(red.A.shape[1], dtype=np.int64)
        self.bin_pos[self.bin_idx] = np.arange(len(self.bin_idx))
        self.heur_share = heur_share
        self.heur_time = 0.0
        self.n_dives = 0
        self.lns_seeds = 4.0
        self.n_lns = 0
        self.lns_nodes = 200

    # helpers -----------------------------------------------------------

    def elapsed(self):
        return time.monotonic() - self.t0

    def out_of_time(self):
        return self.deadline is not None and time.monotonic() > self.deadline

    def bounds_for(self, fix):
        lo = self.red.lb.copy()
        hi = self.red.ub.copy()
        sel = fix >= 0
        idx = self.bin_idx[sel]
        lo[idx] = fix[sel]
        hi[idx] = fix[sel]
        return lo, hi

    def lp_solve(self, lo, hi):
        res = self.lp.solve(lo, hi, deadline=self.deadline)
        if res.status == OPTIMAL:
            return res.x, res.objective + self.red.c0
        if res.status in (INFEASIBLE,):
            return None, math.inf
        if res.status == UNBOUNDED:
            raise ValueError("LP relaxation is unbounded; bound every column")
        self.timed_out = True
        return None, math.nan

    def fractional(self, x):
        xb = x[self.bin_idx]
        frac = np.abs(xb - np.round(xb))
        return np.flatnonzero(frac > INT_TOL), xb

    def pick_branch(self, x):
        cand, xb = self.fractional(x)
        if cand.size == 0:
            return -1
        pr = self.red.priority[self.bin_idx[cand]]
        cand = cand[pr == pr.max()]
        dist = np.abs(xb[cand] - 0.5)
        # most fractional first; argmin keeps the lowest index on ties
        return int(cand[np.argmin(np.round(dist, 9))])

    def record(self, bound, force=False):
        now = self.elapsed()
        if force or now - self._last_log >= self.log_every:
            self._last_log = now
            self.log.append((now, self.nodes, self.inc_obj, bound, gap_percent(self.inc_obj, bound)))

    def polish(self, x):
        """Round binaries, re-solve the continuous part, keep if better."""
        lo = self.red.lb.copy()
        hi = self.red.ub.copy()
        rb = np.round(x[self.bin_idx])
        lo[self.bin_idx] = rb
        hi[self.bin_idx] = rb
        xp, obj = self.lp_solve(lo, hi)
        if xp is None:
            return False
        xp[self.bin_idx] = rb
        if obj < self.inc_obj - 1e-12:
            self.inc_obj = obj
            self.inc_x = xp
            return True
        return False

    def dive(self, fix, x, to_one=False, max_lp=None):
        """Round fractional binaries one at a time until integral or stuck.

        The default rule fixes the value closest to integral (random order
        among ties, random direction at exactly one half). With ``to_one``
        the largest fractional value is pushed to 1 instead, which suits
        partitioning rows where near-zero values are artefacts of big-M
        slack. Either way the opposite value is tried when the LP becomes
        infeasible.
        """
        fix = fix.copy()
        if max_lp is None:
            max_lp = 4 * len(self.bin_idx) + 10
        solves = 0
        while solves < max_lp and not self.out_of_time():
            cand, xb = self.fractional(x)
            if cand.size == 0:
                self.polish(x)
                return
            pr = self.red.priority[self.bin_idx[cand]]
            cand = cand[pr == pr.max()]
            v = xb[cand]
            if to_one:
                best = np.flatnonzero(v >= v.max() - 1e-6)
                k = int(cand[self.rng.choice(best)])
                first = 1.0
            else:
                dist = np.abs(v - np.round(v))
                best = np.flatnonzero(dist <= dist.min() + 1e-9)
                k = int(cand[self.rng.choice(best)])
                if abs(xb[k] - 0.5) < 1e-9:
                    first = float(self.rng.integers(2))
                else:
                    first = float(np.round(xb[k]))
            for val in (first, 1.0 - first):
                fix[k] = val
                lo, hi = self.bounds_for(fix)
                xn, obj = self.lp_solve(lo, hi)
                solves += 1
                if xn is not None and obj < self.inc_obj - 1e-9:
                    x = xn
                    break
            else:
                return

    # large-neighbourhood search ----------------------------------------

    def _neighbourhood(self, seeds):
        """Seed binaries plus every binary sharing a row with one of them."""
        A, At = self.csc, self.csr
        out = set(int(k) for k in seeds)
        for k in seeds:
            j = self.bin_idx[k]
            for r in A.indices[A.indptr[j]:A.indptr[j + 1]]:
                cols = At.indices[At.indptr[r]:At.indptr[r + 1]]
                pos = self.bin_pos[cols]
                out.update(pos[pos >= 0].tolist())
        return sorted(out)

    def subsolve(self, fix, node_limit):
        """Small best-first search below ``fix``; only updates the incumbent."""
        heap = [(-math.inf, 0, 0, fix)]
        seq = 1
        nodes = 0
        while heap and nodes < node_limit and not self.out_of_time():
            pbound, negdepth, _, f = heapq.heappop(heap)
            if pbound >= self.inc_obj - 1e-9:
                continue
            lo, hi = self.bounds_for(f)
            x, obj = self.lp_solve(lo, hi)
            nodes += 1
            if x is None or obj >= self.inc_obj - 1e-9:
                continue
            k = self.pick_branch(x)
            if k < 0:
                self.polish(x)
                continue
            first = 1.0 if x[self.bin_idx[k]] >= 0.5 else 0.0
            for v in (1.0 - first, first):
                child = f.copy()
                child[k] = v
                heapq.heappush(heap, (obj, negdepth - 1, -seq, child))
                seq += 1
        return nodes

    def lns_round(self):
        """Free a random row-neighbourhood of the incumbent and re-optimise it.

        The number of seeds adapts: it grows while sub-searches finish
        without improvement and shrinks when they hit the node limit.
        """
        if self.inc_x is None:
            return
        nb = len(self.bin_idx)
        n_seeds = min(max(1, int(self.lns_seeds)), nb)
        xb = self.inc_x[self.bin_idx]
        # every other round, seed from binaries that are on and cost something
        costly = np.flatnonzero((xb > 0.5) & (self.red.c[self.bin_idx] > 0))
        self.n_lns += 1
        if self.n_lns % 2 and len(costly):
            seeds = self.rng.choice(costly, size=min(n_seeds, len(costly)), replace=False)
        else:
            seeds = self.rng.choice(nb, size=n_seeds, replace=False)
        fix = np.round(self.inc_x[self.bin_idx])
        fix[self._neighbourhood(seeds)] = -1.0
        before = self.inc_obj
        used = self.subsolve(fix, self.lns_nodes)
        if self.inc_obj < before:
            return
        if used >= self.lns_nodes:
            self.lns_seeds = max(1.0, self.lns_seeds * 0.8)
        else:
            self.lns_seeds = min(float(nb), self.lns_seeds * 1.1 + 1)

    def heuristics(self, fix, x, heap, obj):
        """Spend heuristic time: dives until an incumbent exists, then LNS."""
        t0 = time.monotonic()
        before = self.inc_obj
        if self.inc_x is None:
            self.dive(fix, x, to_one=bool(self.n_dives % 2))
            self.n_dives += 1
        else:
            self.lns_round()
        self.heur_time += time.monotonic() - t0
        if self.inc_obj < before:
            self.record(self._global_bound(heap, obj), force=True)

    # main loop ---------------------------------------------------------

    def run(self):
        nb = len(self.bin_idx)
        root_fix = np.full(nb, -1.0)
        heap = [(-math.inf, 0, 0, root_fix)]
        seq = 1
        tol = 1e-9
        root_bound = -math.inf
        while heap:
            if self.out_of_time() or (self.node_limit is not None and self.nodes >= self.node_limit):
                self.timed_out = True
                break
            pbound, negdepth, _, fix = heapq.heappop(heap)
            if pbound >= self.inc_obj - tol * max(1.0, abs(self.inc_obj)):
                continue
            lo, hi = self.bounds_for(fix)
            x, obj = self.lp_solve(lo, hi)
            self.nodes += 1
            if self.timed_out:
                heapq.heappush(heap, (pbound, negdepth, seq, fix))
                break
            if x is None:
                continue
            if self.nodes == 1:
                root_bound = obj
            if obj >= self.inc_obj - tol * max(1.0, abs(self.inc_obj)):
                continue
            k = self.pick_branch(x)
            if k < 0:
                self.polish(x)
                self.record(self._global_bound(heap, obj), force=True)
                continue
            if self.nodes == 1 or self.heur_time < self.heur_share * self.elapsed():
                self.heuristics(fix, x, heap, obj)
            xk = x[self.bin_idx[k]]
            first = 1.0 if xk >= 0.5 else 0.0
            for v in (1.0 - first, first):  # preferred child pushed last, popped first
                child = fix.copy()
                child[k] = v
                heapq.heappush(heap, (obj, negdepth - 1, -seq, child))
                seq += 1
            self.record(self._global_bound(heap, obj))
        if self.timed_out:
            bound = self._global_bound(heap, math.inf)
            if not math.isfinite(bound) and self.inc_x is not None:
                bound = self.inc_obj
            bound = max(bound, root_bound) if math.isfinite(root_bound) else bound
            bound = min(bound, self.inc_obj)
        else:
            bound = self.inc_obj
        self.record(bound, force=True)
        return bound

    @staticmethod
    def _global_bound(heap, current):
        b = current
        for item in heap:
            if item[0] < b:
                b = item[0]
        return b


def solve(model, time_limit=math.inf, seed=0, node_limit=None, heur_share=0.7, log_every=1.0):
    """Minimise ``model`` to proven optimality or until ``time_limit`` seconds.

    ``heur_share`` caps the fraction of wall time spent in primal heuristics
    (rounding dives, then neighbourhood search around the incumbent); the
    rest goes to the best-first tree search that proves the bound.

    Returns ``(report, x)``; ``x`` is None when no feasible point is known.
    The solution is the LP re-solve with binaries fixed at their rounded
    values, so it satisfies every row to simplex precision.
    """
    if not time_limit > 0:
        raise ValueError("time_limit must be positive")
    t0 = time.monotonic()
    red = _Reduced(model)
    if red.infeasible:
        rep = SolveReport(STATUS_INFEASIBLE, math.inf, math.inf, math.inf, time.monotonic() - t0, 0)
        return rep, None
    search = _Search(red, time_limit, seed, node_limit, heur_share, log_every)
    bound = search.run()
    wall = time.monotonic() - t0
    if search.inc_x is None:
        status = STATUS_TIMEOUT if search.timed_out else STATUS_INFEASIBLE
        rep = SolveReport(status, math.inf, bound if search.timed_out else math.inf, math.inf,
                          wall, search.nodes, search.lp.total_iterations, search.log)
        return rep, None
    gap = gap_percent(search.inc_obj, bound)
    if search.timed_out and gap > 0:
        status = STATUS_FEASIBLE_TIMEOUT
    else:
        status = STATUS_OPTIMAL
        gap = 0.0
    x = red.expand(search.inc_x)
    x[model.binary] = np.round(x[model.binary])
    rep = SolveReport(status, search.inc_obj, bound, gap, wall, search.nodes,
                      search.lp.total_iterations, search.log)
    return rep, x
