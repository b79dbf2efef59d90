"""Bounded-variable revised simplex with a sparse LU basis and eta updates.

Every row ``i`` gets a logical column ``-e_i`` whose value is the row
activity, so the working system is ``[A, -I] x = 0`` with box bounds on all
``n + m`` columns. The all-logical basis is always a valid start. Phase 1
minimises the sum of basic bound infeasibilities; phase 2 minimises the
(scaled) cost. Dantzig pricing switches to Bland's rule after a run of
degenerate pivots; the leaving row uses a Harris two-pass ratio test.
"""
from __future__ import annotations

import logging
import math

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

log = logging.getLogger(__name__)

BASIC, AT_LOWER, AT_UPPER, AT_ZERO = 0, 1, 2, 3

OPTIMAL = "optimal"
INFEASIBLE = "infeasible"
UNBOUNDED = "unbounded"
NUMERIC_FAILURE = "numeric_failure"
ITERATION_LIMIT = "iteration_limit"


class NumericFailure(RuntimeError):
    pass


class _Factor:
    """LU of the basis matrix plus a product-form eta file."""

    def __init__(self, B: sp.csc_matrix):
        m = B.shape[0]
        self.m = m
        if m == 0:
            self.lu = None
        else:
            try:
                self.lu = spla.splu(B, permc_spec="COLAMD", options={"SymmetricMode": False})
            except RuntimeError as exc:  # exactly singular
                raise NumericFailure(str(exc)) from exc
        self.etas: list[tuple[int, np.ndarray, np.ndarray, float]] = []

    def ftran(self, a: np.ndarray) -> np.ndarray:
        x = self.lu.solve(a) if self.m else a.copy()
        for r, idx, vals, piv in self.etas:
            xr = x[r]
            if xr != 0.0:
                xr = xr / piv
                x[idx] -= vals * xr
                x[r] = xr
        return x

    def btran(self, c: np.ndarray) -> np.ndarray:
        y = c.copy()
        for r, idx, vals, piv in reversed(self.etas):
            y[r] = (y[r] - vals @ y[idx]) / piv
        return self.lu.solve(y, trans="T") if self.m else y

    def update(self, r: int, alpha: np.ndarray) -> None:
        piv = alpha[r]
        idx = np.flatnonzero(np.abs(alpha) > 1e-14)
        idx = idx[idx != r]
        self.etas.append((r, idx, alpha[idx].copy(), piv))


class SimplexResult:
    __slots__ = ("status", "x", "row_dual", "reduced_cost", "basis", "degenerate", "iterations",
                 "max_infeasibility")

    def __init__(self, status, x=None, row_dual=None, reduced_cost=None, basis=None,
                 degenerate=False, iterations=0, max_infeasibility=math.nan):
        self.status = status
        self.x = x
        self.row_dual = row_dual
        self.reduced_cost = reduced_cost
        self.basis = basis
        self.degenerate = degenerate
        self.iterations = iterations
        self.max_infeasibility = max_infeasibility


class RevisedSimplex:
    """Minimise ``c @ x`` s.t. ``row_lo <= A x <= row_hi``, ``lb <= x <= ub``.

    The caller is responsible for scaling; tolerances here apply to the
    problem as given.
    """

    def __init__(self, A: sp.spmatrix, c, row_lo, row_hi, lb, ub, *,
                 feas_tol: float = 1e-7, opt_tol: float = 1e-9, harris_tol: float = 1e-9,
                 pivot_tol: float = 1e-7, refactor_every: int = 64, stall_limit: int = 50,
                 max_iter: int | None = None):
        A = sp.csc_matrix(A, dtype=float)
        self.m, self.n = A.shape
        m, n = self.m, self.n
        self.A = A
        self.full = sp.hstack([A, -sp.identity(m, format="csc")], format="csc")
        self.N = n + m
        self.cost = np.concatenate([np.asarray(c, float), np.zeros(m)])
        self.lo = np.concatenate([np.asarray(lb, float), np.asarray(row_lo, float)])
        self.hi = np.concatenate([np.asarray(ub, float), np.asarray(row_hi, float)])
        self.feas_tol = feas_tol
        self.opt_tol = opt_tol
        self.harris_tol = harris_tol
        self.pivot_tol = pivot_tol
        self.refactor_every = refactor_every
        self.stall_limit = stall_limit
        self.max_iter = max_iter if max_iter is not None else max(20000, 50 * (m + n))
        self._indptr = self.full.indptr
        self._indices = self.full.indices
        self._data = self.full.data

    # -- helpers ----------------------------------------------------------
    def _column(self, j: int) -> np.ndarray:
        a = np.zeros(self.m)
        s, e = self._indptr[j], self._indptr[j + 1]
        a[self._indices[s:e]] = self._data[s:e]
        return a

    def _refactor(self):
        B = self.full[:, self.basis]
        self.factor = _Factor(sp.csc_matrix(B))
        self._recompute_xb()
        self._good = (self.basis.copy(), self.status.copy(), self.x.copy())

    def _safe_refactor(self):
        """Refactor; on a singular basis fall back to the last good one and pivot more cautiously."""
        try:
            self._refactor()
        except NumericFailure:
            self._repairs += 1
            if self._repairs > 8:
                raise
            self.basis, self.status, self.x = (a.copy() for a in self._good)
            self._pivot_tol = min(self._pivot_tol * 100.0, 1e-5)
            log.debug("singular basis; reverted to last factorisation, pivot tol %.0e", self._pivot_tol)
            self._refactor()

    def _recompute_xb(self):
        nb = self.status != BASIC
        rhs = -(self.full[:, nb] @ self.x[nb])
        self.x[self.basis] = self.factor.ftran(rhs)

    def _initial_status(self, basis=None, status=None):
        N, m = self.N, self.m
        self.x = np.zeros(N)
        if basis is not None and status is not None and len(basis) == m:
            self.basis = np.array(basis, dtype=int)
            self.status = np.array(status, dtype=np.int8)
        else:
            self.basis = np.arange(self.n, N)
            self.status = np.full(N, AT_LOWER, dtype=np.int8)
            self.status[self.basis] = BASIC
        for j in range(N):
            st = self.status[j]
            if st == BASIC:
                continue
            lo, hi = self.lo[j], self.hi[j]
            if st == AT_UPPER and math.isfinite(hi):
                self.x[j] = hi
            elif math.isfinite(lo):
                self.status[j] = AT_LOWER
                self.x[j] = lo
            elif math.isfinite(hi):
                self.status[j] = AT_UPPER
                self.x[j] = hi
            else:
                self.status[j] = AT_ZERO
                self.x[j] = 0.0

    def _infeasibility(self):
        xb = self.x[self.basis]
        lo = self.lo[self.basis]
        hi = self.hi[self.basis]
        below = lo - xb
        above = xb - hi
        return below, above

    # -- main loop --------------------------------------------------------
    def solve(self, basis=None, status=None) -> SimplexResult:
        self._pivot_tol = self.pivot_tol
        self._repairs = 0
        self._initial_status(basis, status)
        try:
            try:
                self._refactor()
            except NumericFailure:
                log.debug("warm basis singular; restarting from slack basis")
                self._initial_status()
                self._refactor()
            return self._run()
        except NumericFailure as exc:
            log.warning("simplex numeric failure: %s", exc)
            return SimplexResult(NUMERIC_FAILURE)

    def _run(self) -> SimplexResult:
        it = 0
        stall = 0
        bland = False
        retries = 0
        since_refactor = 0
        m = self.m
        while True:
            if it >= self.max_iter:
                return SimplexResult(ITERATION_LIMIT, iterations=it)
            below, above = self._infeasibility()
            tol = self.feas_tol
            infeasible = (below > tol) | (above > tol)
            phase1 = bool(infeasible.any())
            if phase1:
                cb = np.where(below > tol, -1.0, np.where(above > tol, 1.0, 0.0))
                cost_nb = None
            else:
                cb = self.cost[self.basis]
                cost_nb = self.cost
            y = self.factor.btran(cb) if m else np.zeros(0)
            d = self._reduced_costs(y, cost_nb)
            q, direction = self._price(d, bland)
            if q < 0:
                if phase1:
                    # confirm with a fresh factorisation before declaring infeasible
                    if since_refactor:
                        self._safe_refactor()
                        since_refactor = 0
                        continue
                    return SimplexResult(INFEASIBLE, iterations=it,
                                         max_infeasibility=float(max(below.max(initial=0), above.max(initial=0))))
                if since_refactor:
                    self._safe_refactor()
                    since_refactor = 0
                    continue
                return self._finish(y, d, it)

            alpha = self.factor.ftran(self._column(q))
            g = direction * alpha
            theta, r, leave_to_upper = self._ratio(g, phase1, infeasible, bland)
            span = self.hi[q] - self.lo[q]
            if span <= theta:
                r = -1
                theta = span
            if r < 0:
                if not math.isfinite(theta):
                    if phase1:
                        raise NumericFailure("unbounded ray in phase 1")
                    return SimplexResult(UNBOUNDED, iterations=it)
                # bound flip of the entering column
                self.x[q] += direction * theta
                self.x[self.basis] -= theta * g
                self.status[q] = AT_UPPER if direction > 0 else AT_LOWER
                self.x[q] = self.hi[q] if direction > 0 else self.lo[q]
                it += 1
                stall = 0 if theta > 1e-12 else stall + 1
                continue

            if abs(alpha[r]) < self._pivot_tol:
                retries += 1
                if retries > 5:
                    raise NumericFailure("pivot element below tolerance after refactorisation")
                self._safe_refactor()
                since_refactor = 0
                continue

            leaving = self.basis[r]
            self.x[q] += direction * theta
            self.x[self.basis] -= theta * g
            self.x[leaving] = self.hi[leaving] if leave_to_upper else self.lo[leaving]
            self.status[leaving] = AT_UPPER if leave_to_upper else AT_LOWER
            if not math.isfinite(self.x[leaving]):
                self.x[leaving] = 0.0
                self.status[leaving] = AT_ZERO
            self.status[q] = BASIC
            self.basis[r] = q
            self.factor.update(r, alpha)
            since_refactor += 1
            it += 1
            if theta <= 1e-12:
                stall += 1
                if stall >= self.stall_limit and not bland:
                    log.debug("switching to Bland's rule after %d degenerate pivots", stall)
                    bland = True
            else:
                stall = 0
                bland = False
            if since_refactor >= self.refactor_every:
                self._safe_refactor()
                since_refactor = 0

    def _reduced_costs(self, y, cost_nb):
        n = self.n
        d = np.empty(self.N)
        d[:n] = -(self.A.T @ y)
        d[n:] = y
        if cost_nb is not None:
            d += cost_nb
        d[self.basis] = 0.0
        return d

    def _price(self, d, bland):
        st = self.status
        tol = self.opt_tol
        can_up = ((st == AT_LOWER) | (st == AT_ZERO)) & (d < -tol) & (self.hi > self.lo)
        can_down = ((st == AT_UPPER) | (st == AT_ZERO)) & (d > tol) & (self.hi > self.lo)
        elig = can_up | can_down
        if not elig.any():
            return -1, 0
        if bland:
            q = int(np.flatnonzero(elig)[0])
        else:
            score = np.where(elig, np.abs(d), -1.0)
            q = int(np.argmax(score))
        return q, (1 if can_up[q] else -1)

    def _ratio(self, g, phase1, infeasible, bland):
        """Return (step, leaving row or -1, leaving goes to upper bound)."""
        basis = self.basis
        xb = self.x[basis]
        lo = self.lo[basis]
        hi = self.hi[basis]
        # entries this small relative to the column are treated as zero
        ptol = max(self._pivot_tol, 1e-9 * float(np.abs(g).max(initial=0.0)))
        htol = self.harris_tol
        ftol = self.feas_tol

        dec = g > ptol      # basic value decreases
        inc = g < -ptol     # basic value increases
        below = lo - xb > ftol
        above = xb - hi > ftol

        ratio = np.full(self.m, math.inf)
        relaxed = np.full(self.m, math.inf)
        to_upper = np.zeros(self.m, dtype=bool)

        # feasible (or within tolerance) basics hit the bound they move toward
        feas = ~(below | above) if phase1 else np.ones(self.m, dtype=bool)
        mask = dec & feas & np.isfinite(lo)
        ratio[mask] = (xb[mask] - lo[mask]) / g[mask]
        relaxed[mask] = (xb[mask] - lo[mask] + htol) / g[mask]
        mask = inc & feas & np.isfinite(hi)
        ratio[mask] = (hi[mask] - xb[mask]) / -g[mask]
        relaxed[mask] = (hi[mask] - xb[mask] + htol) / -g[mask]
        to_upper[mask] = True
        if phase1:
            # infeasible basics block when they reach the violated bound
            mask = dec & above
            ratio[mask] = relaxed[mask] = (xb[mask] - hi[mask]) / g[mask]
            to_upper[mask] = True
            mask = inc & below
            ratio[mask] = relaxed[mask] = (lo[mask] - xb[mask]) / -g[mask]
        ratio = np.maximum(ratio, 0.0)

        if not np.isfinite(ratio).any():
            return math.inf, -1, False
        if bland:
            tmin = ratio.min()
            ties = np.flatnonzero(ratio <= tmin + 1e-12)
            r = int(ties[np.argmin(basis[ties])])
            return float(ratio[r]), r, bool(to_upper[r])
        tmax = relaxed.min()
        cand = np.flatnonzero(ratio <= tmax)
        if cand.size == 0:
            cand = np.array([int(np.argmin(ratio))])
        r = int(cand[np.argmax(np.abs(g[cand]))])
        return float(ratio[r]), r, bool(to_upper[r])

    def _finish(self, y, d, it) -> SimplexResult:
        below, above = self._infeasibility()
        basic_vals = self.x[self.basis]
        lo = self.lo[self.basis]
        hi = self.hi[self.basis]
        gap = np.minimum(np.abs(basic_vals - lo), np.abs(hi - basic_vals))
        degenerate = bool(np.any(gap <= self.feas_tol)) if self.m else False
        d = d.copy()
        d[self.basis] = 0.0
        # clear sign noise within the optimality tolerance (fixed columns keep any sign)
        free_range = self.hi > self.lo
        d[(self.status == AT_LOWER) & free_range & (d < 0)] = 0.0
        d[(self.status == AT_UPPER) & free_range & (d > 0)] = 0.0
        d[self.status == AT_ZERO] = 0.0
        row_dual = d[self.n:].copy()
        return SimplexResult(
            OPTIMAL,
            x=self.x.copy(),
            row_dual=row_dual,
            reduced_cost=d[: self.n].copy(),
            basis=(self.basis.copy(), self.status.copy()),
            degenerate=degenerate,
            iterations=it,
            max_infeasibility=float(max(below.max(initial=0.0), above.max(initial=0.0), 0.0)),
        )
