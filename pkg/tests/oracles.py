"""Reference solvers built directly on scipy, independent of the package's solver code."""
from __future__ import annotations

import itertools

import numpy as np
import scipy.sparse as sp
from scipy.optimize import linprog

from gridforge.ir import ModelIR


def reference_lp(ir: ModelIR, lb=None, ub=None):
    """Maximise the LP relaxation with HiGHS; returns (status, objective)."""
    c, A, lo, hi, vlb, vub, _ = ir.arrays()
    lb = vlb if lb is None else lb
    ub = vub if ub is None else ub
    fin_hi = np.isfinite(hi)
    fin_lo = np.isfinite(lo)
    eq = fin_hi & fin_lo & (hi == lo)
    up = fin_hi & ~eq
    dn = fin_lo & ~eq
    A = A.tocsr()
    A_ub = sp.vstack([A[up], -A[dn]]).tocsr()
    b_ub = np.concatenate([hi[up], -lo[dn]])
    res = linprog(-c, A_ub=A_ub if A_ub.shape[0] else None, b_ub=b_ub if A_ub.shape[0] else None,
                  A_eq=A[eq] if eq.any() else None, b_eq=hi[eq] if eq.any() else None,
                  bounds=list(zip(lb, ub)), method="highs")
    if res.status == 0:
        return "optimal", -res.fun + ir.objective_constant
    if res.status == 2:
        return "infeasible", -np.inf
    if res.status == 3:
        return "unbounded", np.inf
    return "error", np.nan


def enumerate_milp(ir: ModelIR, skip=None):
    """Best LP value over every binary assignment; ``skip(bits)`` prunes assignments."""
    _, _, _, _, lb0, ub0, _ = ir.arrays()
    cols = ir.integer_columns()
    best = -np.inf
    for bits in itertools.product((0.0, 1.0), repeat=len(cols)):
        if skip is not None and skip(dict(zip(cols.tolist(), bits))):
            continue
        lb, ub = lb0.copy(), ub0.copy()
        lb[cols] = ub[cols] = bits
        status, obj = reference_lp(ir, lb, ub)
        if status == "optimal":
            best = max(best, obj)
        elif status == "unbounded":
            return np.inf
    return best


def random_ir(rng: np.random.Generator, m: int, n: int, bounded: bool = False) -> ModelIR:
    """Random LP that is feasible at a drawn point; boxes every column when ``bounded``."""
    ir = ModelIR()
    boxes = [(0, np.inf), (-np.inf, np.inf), (-2, 3), (0, 5)]
    for j in range(n):
        lo, hi = boxes[2 + rng.integers(2)] if bounded else boxes[rng.integers(4)]
        ir.add_var(f"x[{j}]", lo, hi)
    x0 = np.array([np.clip(rng.normal(), v.lb, v.ub) for v in ir.variables])
    for i in range(m):
        cols = rng.choice(n, size=min(n, int(rng.integers(1, 5))), replace=False)
        coeffs = {int(c): float(rng.integers(-5, 6)) or 1.0 for c in cols}
        act = sum(v * x0[c] for c, v in coeffs.items())
        sense = rng.choice(["<=", ">=", "="], p=[0.45, 0.35, 0.2])
        if sense == "<=":
            rhs = act + rng.random() * 2
        elif sense == ">=":
            rhs = act - rng.random() * 2
        else:
            rhs = act
        ir.add_constraint(f"r[{i}]", coeffs, str(sense), float(rhs))
    ir.set_objective({j: float(rng.integers(-3, 4)) for j in range(n)})
    return ir
