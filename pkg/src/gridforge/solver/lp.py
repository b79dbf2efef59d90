"""LP front end: scaling, dual sign conventions, backends.

Duals and reduced costs are reported as sensitivities of the *maximised*
objective: ``dual[i] = d obj / d rhs_i`` and ``reduced_costs[j] = d obj / d x_j``
at the bound where nonbasic ``x_j`` rests. So a binding ``<=`` row carries a
non-negative dual and a binding ``>=`` row a non-positive one.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from ..ir import ModelIR
from .simplex import (BASIC, ITERATION_LIMIT, NUMERIC_FAILURE, OPTIMAL, RevisedSimplex)

log = logging.getLogger(__name__)


@dataclass
class SolverOptions:
    feas_tol: float = 1e-7
    opt_tol: float = 1e-9
    harris_tol: float = 1e-9
    gap_tol: float = 1e-6
    int_tol: float = 1e-6
    node_limit: int = 200_000
    time_limit_s: float = 300.0
    backend: str = "simplex"        # "simplex" (embedded) or "highs"
    scale: bool = True

    @classmethod
    def from_config(cls, cfg: dict | None) -> "SolverOptions":
        opts = cls()
        for key, val in (cfg or {}).items():
            if not hasattr(opts, key):
                raise KeyError(f"unknown solver option {key!r}")
            setattr(opts, key, type(getattr(opts, key))(val))
        return opts


@dataclass
class LpSolution:
    status: str
    primal: np.ndarray | None = None
    objective: float = math.nan
    duals: np.ndarray | None = None
    reduced_costs: np.ndarray | None = None
    basis: list[int] = field(default_factory=list)
    degenerate: bool = False
    iterations: int = 0
    ir: ModelIR | None = field(default=None, repr=False)
    warm: tuple | None = field(default=None, repr=False)

    @property
    def optimal(self) -> bool:
        return self.status == OPTIMAL

    def value(self, name: str) -> float:
        return float(self.primal[self.ir.name_index[name]])

    def dual(self, name: str) -> float:
        return float(self.duals[self.ir.row_index[name]])

    def duals_of(self, family: str) -> dict[str, float]:
        """Duals of every row named ``family[...]`` keyed by row name."""
        rows = self.ir.rows_matching(family)
        return {self.ir.constraints[i].name: float(self.duals[i]) for i in rows}


def _pow2(x: np.ndarray) -> np.ndarray:
    return np.exp2(np.round(np.log2(x)))


def equilibrate(A: sp.csr_matrix, passes: int = 6):
    """Geometric-mean row/column scaling factors (powers of two)."""
    m, n = A.shape
    r = np.ones(m)
    c = np.ones(n)
    if A.nnz == 0:
        return r, c
    absA = abs(sp.csr_matrix(A))
    for _ in range(passes):
        S = sp.diags(r) @ absA @ sp.diags(c)
        S = sp.csr_matrix(S)
        rmax = np.asarray(S.max(axis=1).todense()).ravel()
        rmin = _nz_min(S, axis=1)
        ok = rmax > 0
        r[ok] /= np.sqrt(rmax[ok] * rmin[ok])
        S = sp.csc_matrix(sp.diags(r) @ absA @ sp.diags(c))
        cmax = np.asarray(S.max(axis=0).todense()).ravel()
        cmin = _nz_min(S, axis=0)
        ok = cmax > 0
        c[ok] /= np.sqrt(cmax[ok] * cmin[ok])
    return _pow2(r), _pow2(c)


def _nz_min(S, axis):
    S = S.tocsr() if axis == 1 else S.tocsc()
    out = np.ones(S.shape[0] if axis == 1 else S.shape[1])
    indptr, data = S.indptr, S.data
    for k in range(len(out)):
        seg = data[indptr[k]:indptr[k + 1]]
        seg = seg[seg > 0]
        if seg.size:
            out[k] = seg.min()
    return out


class LpEngine:
    """A scaled copy of one ModelIR that can be re-solved under new bounds.

    Branch-and-bound keeps one engine and passes per-node column bounds plus
    the parent basis as a warm start.
    """

    def __init__(self, ir: ModelIR, options: SolverOptions | None = None):
        self.ir = ir
        self.opts = options or SolverOptions()
        c, A, row_lo, row_hi, lb, ub, integrality = ir.arrays()
        self.c, self.A, self.row_lo, self.row_hi = c, A, row_lo, row_hi
        self.lb, self.ub, self.integrality = lb, ub, integrality
        m, n = A.shape
        if self.opts.scale and self.opts.backend == "simplex":
            self.rs, self.cs = equilibrate(A)
        else:
            self.rs, self.cs = np.ones(m), np.ones(n)
        As = sp.diags(self.rs) @ A @ sp.diags(self.cs)
        cost = -(c * self.cs)
        self.cscale = float(np.max(np.abs(cost))) if n and np.any(cost) else 1.0
        self._simplex = None
        if self.opts.backend == "simplex":
            self._simplex = RevisedSimplex(
                As, cost / self.cscale, row_lo * self.rs, row_hi * self.rs,
                lb / self.cs, ub / self.cs,
                feas_tol=self.opts.feas_tol, opt_tol=self.opts.opt_tol,
                harris_tol=self.opts.harris_tol)

    def solve(self, lb=None, ub=None, warm=None) -> LpSolution:
        lb = self.lb if lb is None else np.asarray(lb, float)
        ub = self.ub if ub is None else np.asarray(ub, float)
        if np.any(lb > ub):
            return LpSolution("infeasible", ir=self.ir)
        if self.opts.backend == "highs":
            return self._solve_highs(lb, ub)
        if self.opts.backend != "simplex":
            raise ValueError(f"unknown LP backend {self.opts.backend!r}")
        return self._solve_simplex(lb, ub, warm)

    # -- embedded simplex -------------------------------------------------
    def _solve_simplex(self, lb, ub, warm) -> LpSolution:
        spx = self._simplex
        n = self.A.shape[1]
        spx.lo[:n] = lb / self.cs
        spx.hi[:n] = ub / self.cs
        basis, status = warm if warm is not None else (None, None)
        res = spx.solve(basis, status)
        if res.status != OPTIMAL:
            st = "numeric_failure" if res.status in (NUMERIC_FAILURE, ITERATION_LIMIT) else res.status
            return LpSolution(st, iterations=res.iterations, ir=self.ir)
        x = res.x[:n] * self.cs
        # snap nonbasic structurals exactly onto their bounds
        nb = res.basis[1][:n] != BASIC
        x_nb = x[nb]
        x[nb] = np.where(np.abs(x_nb - lb[nb]) <= np.abs(x_nb - ub[nb]), lb[nb], ub[nb])
        x[nb] = np.where(np.isfinite(x[nb]), x[nb], x_nb)
        duals = -self.cscale * self.rs * res.row_dual
        rc = -self.cscale * res.reduced_cost / self.cs
        obj = float(self.c @ x) + self.ir.objective_constant
        basic_cols = sorted(int(j) for j in res.basis[0])
        return LpSolution("optimal", x, obj, duals, rc, basic_cols, res.degenerate,
                          res.iterations, self.ir, warm=res.basis)

    # -- HiGHS via scipy --------------------------------------------------
    def _solve_highs(self, lb, ub) -> LpSolution:
        from scipy.optimize import linprog

        A = self.A.tocsr()
        lo, hi = self.row_lo, self.row_hi
        eq = np.isfinite(lo) & np.isfinite(hi) & (lo == hi)
        up = np.isfinite(hi) & ~eq
        dn = np.isfinite(lo) & ~eq
        A_ub = sp.vstack([A[up], -A[dn]]).tocsr()
        b_ub = np.concatenate([hi[up], -lo[dn]])
        res = linprog(-self.c, A_ub=A_ub if A_ub.shape[0] else None, b_ub=b_ub if A_ub.shape[0] else None,
                      A_eq=A[eq] if eq.any() else None, b_eq=hi[eq] if eq.any() else None,
                      bounds=np.column_stack([lb, ub]), method="highs")
        if res.status == 2:
            return LpSolution("infeasible", ir=self.ir)
        if res.status == 3:
            return LpSolution("unbounded", ir=self.ir)
        if res.status != 0:
            return LpSolution("numeric_failure", ir=self.ir)
        m = A.shape[0]
        duals = np.zeros(m)
        k = int(up.sum())
        if A_ub.shape[0]:
            marg = res.ineqlin.marginals
            duals[np.flatnonzero(up)] += -marg[:k]
            duals[np.flatnonzero(dn)] += marg[k:]
        if eq.any():
            duals[np.flatnonzero(eq)] = -res.eqlin.marginals
        rc = -(res.lower.marginals + res.upper.marginals)
        x = res.x
        act = A @ x
        tol = self.opts.feas_tol
        n_active = int(np.sum(np.isfinite(lb) & (np.abs(x - lb) <= tol))
                       + np.sum(np.isfinite(ub) & (np.abs(x - ub) <= tol) & (ub > lb))
                       + np.sum(np.isfinite(lo) & (np.abs(act - lo) <= tol))
                       + np.sum(np.isfinite(hi) & (np.abs(act - hi) <= tol) & ~eq))
        degenerate = n_active > len(x)
        obj = float(self.c @ x) + self.ir.objective_constant
        return LpSolution("optimal", x, obj, duals, rc, [], degenerate, int(res.nit), self.ir)


def solve_lp(ir: ModelIR, options: SolverOptions | None = None, *, lb=None, ub=None) -> LpSolution:
    """Solve the continuous relaxation of ``ir`` (integrality ignored)."""
    return LpEngine(ir, options).solve(lb, ub)


def dual_objective(sol: LpSolution) -> float:
    """Dual value ``sum_i y_i b_i + sum_j d_j x_j`` (nonbasic ``x_j`` sit on bounds)."""
    ir = sol.ir
    _, _, row_lo, row_hi, _, _, _ = ir.arrays()
    rhs = np.where(np.isfinite(row_hi), row_hi, row_lo)
    # dual of a >= row acts on its lower side
    rhs = np.where(sol.duals < 0, np.where(np.isfinite(row_lo), row_lo, rhs), rhs)
    rhs = np.where(sol.duals > 0, np.where(np.isfinite(row_hi), row_hi, rhs), rhs)
    return float(sol.duals @ rhs + sol.reduced_costs @ sol.primal + ir.objective_constant)


def complementary_slackness(sol: LpSolution) -> float:
    """Largest |dual x slack| over rows and |reduced cost x distance to bound| over columns.

    Slack is measured to the nearer finite side; sign correctness is checked
    separately by :func:`dual_sign_violation`.
    """
    ir = sol.ir
    _, A, row_lo, row_hi, lb, ub, _ = ir.arrays()
    act = A @ sol.primal
    row_slack = np.minimum(np.abs(act - row_lo), np.abs(row_hi - act))
    x = sol.primal
    col_slack = np.minimum(np.abs(x - lb), np.abs(ub - x))
    y, d = sol.duals, sol.reduced_costs
    with np.errstate(invalid="ignore"):
        row_res = np.where(y != 0, np.abs(y) * row_slack, 0.0)
        col_res = np.where(d != 0, np.abs(d) * col_slack, 0.0)
    return float(max(row_res.max(initial=0.0), col_res.max(initial=0.0)))


def dual_sign_violation(sol: LpSolution) -> float:
    """Largest dual/reduced-cost magnitude carrying the wrong sign for a maximisation."""
    ir = sol.ir
    _, _, row_lo, row_hi, lb, ub, _ = ir.arrays()
    y, d = sol.duals, sol.reduced_costs
    bad = [np.zeros(1)]
    bad.append(np.where(~np.isfinite(row_lo), np.maximum(-y, 0), 0.0))   # <= rows: y >= 0
    bad.append(np.where(~np.isfinite(row_hi), np.maximum(y, 0), 0.0))    # >= rows: y <= 0
    bad.append(np.where(~np.isfinite(ub), np.maximum(d, 0), 0.0))        # can always increase
    bad.append(np.where(~np.isfinite(lb), np.maximum(-d, 0), 0.0))       # can always decrease
    return float(max(b.max() for b in bad))
