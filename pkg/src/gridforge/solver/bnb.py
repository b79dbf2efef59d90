"""Best-bound branch-and-bound over {0,1} columns of a ModelIR."""
from __future__ import annotations

import heapq
import logging
import math
import time
from dataclasses import dataclass, field

import numpy as np

from ..ir import ModelIR
from .lp import LpEngine, LpSolution, SolverOptions

log = logging.getLogger(__name__)


class InternalConsistencyError(RuntimeError):
    pass


@dataclass
class MilpSolution:
    status: str                      # optimal | infeasible | gap_limit | node_limit
    incumbent: np.ndarray | None
    objective: float
    bound: float
    gap: float
    nodes_explored: int
    lp: LpSolution | None = field(default=None, repr=False)
    trace: list[tuple[int, int, int]] = field(default_factory=list, repr=False)
    elapsed_s: float = 0.0
    backend: str = "bnb"

    @property
    def has_incumbent(self) -> bool:
        return self.incumbent is not None


def relative_gap(bound: float, objective: float) -> float:
    if not math.isfinite(objective):
        return math.inf
    return max(0.0, (bound - objective) / max(1.0, abs(objective)))


def _check_binary(ir: ModelIR, cols: np.ndarray) -> None:
    for j in cols:
        v = ir.variables[j]
        if v.lb < 0 or v.ub > 1:
            raise ValueError(f"integer column {v.name} is not binary (bounds [{v.lb}, {v.ub}])")


def solve_milp(ir: ModelIR, options: SolverOptions | None = None) -> MilpSolution:
    """Maximise ``ir`` with its binary columns enforced.

    Nodes are processed in best-bound order (ties: insertion order, with the
    1-branch inserted first). The branching column is the most fractional
    binary, lowest index on ties. Integral node solutions are polished by
    clamping the binaries and re-solving, so incumbents are exactly integral.
    """
    opts = options or SolverOptions()
    if opts.backend == "highs_milp":
        return _solve_highs_milp(ir, opts)
    t0 = time.perf_counter()
    int_cols = ir.integer_columns()
    _check_binary(ir, int_cols)
    engine = LpEngine(ir, opts)
    lb0, ub0 = engine.lb.copy(), engine.ub.copy()

    best_x = None
    best_obj = -math.inf
    best_lp = None
    trace: list[tuple[int, int, int]] = []
    counter = 0
    # heap entries: (-parent_bound, seq, fixings tuple, warm basis)
    heap = [(-math.inf, 0, (), None)]
    nodes = 0
    status = None

    def global_bound():
        open_best = -heap[0][0] if heap else -math.inf
        return max(open_best, best_obj)

    while heap:
        if nodes >= opts.node_limit:
            status = "node_limit"
            break
        if time.perf_counter() - t0 > opts.time_limit_s:
            status = "gap_limit"
            break
        if best_x is not None and relative_gap(global_bound(), best_obj) <= opts.gap_tol:
            break
        neg_bound, seq, fixings, warm = heapq.heappop(heap)
        parent_bound = -neg_bound
        if best_x is not None and parent_bound - best_obj <= opts.gap_tol * max(1.0, abs(best_obj)):
            continue
        lb, ub = lb0.copy(), ub0.copy()
        for j, val in fixings:
            lb[j] = ub[j] = val
        sol = engine.solve(lb, ub, warm)
        nodes += 1
        if sol.status == "infeasible":
            continue
        if sol.status == "unbounded":
            if best_x is None and not fixings:
                return MilpSolution("unbounded", None, math.inf, math.inf, math.inf, nodes,
                                    trace=trace, elapsed_s=time.perf_counter() - t0)
            continue
        if sol.status != "optimal":
            raise InternalConsistencyError(f"node LP failed with status {sol.status}")
        if sol.objective - best_obj <= opts.gap_tol * max(1.0, abs(best_obj)) and best_x is not None:
            continue
        xi = sol.primal[int_cols] if int_cols.size else np.zeros(0)
        frac = np.minimum(xi - np.floor(xi), np.ceil(xi) - xi)
        if not int_cols.size or frac.max() <= opts.int_tol:
            polished = _polish(engine, lb, ub, int_cols, sol)
            if polished is not None and polished.objective > best_obj:
                best_obj, best_x, best_lp = polished.objective, polished.primal, polished
            continue
        score = np.minimum(xi, 1.0 - xi)
        k = int(np.argmax(score))          # first maximum -> lowest column index
        j = int(int_cols[k])
        trace.append((nodes, j, 1))
        counter += 1
        heapq.heappush(heap, (-sol.objective, counter, fixings + ((j, 1.0),), sol.warm))
        counter += 1
        heapq.heappush(heap, (-sol.objective, counter, fixings + ((j, 0.0),), sol.warm))

    elapsed = time.perf_counter() - t0
    if best_x is None:
        if status is None:
            return MilpSolution("infeasible", None, -math.inf, -math.inf, math.inf, nodes,
                                trace=trace, elapsed_s=elapsed)
        return MilpSolution(status, None, -math.inf, global_bound(), math.inf, nodes,
                            trace=trace, elapsed_s=elapsed)
    bound = global_bound() if heap else best_obj
    bound = max(bound, best_obj)
    gap = relative_gap(bound, best_obj)
    if status is None or gap <= opts.gap_tol:
        status = "optimal"
    return MilpSolution(status, best_x, best_obj, bound, gap, nodes, best_lp, trace, elapsed)


def _polish(engine: LpEngine, lb, ub, int_cols, sol: LpSolution) -> LpSolution | None:
    if not int_cols.size:
        return sol
    lb, ub = lb.copy(), ub.copy()
    vals = np.round(sol.primal[int_cols])
    lb[int_cols] = ub[int_cols] = vals
    polished = engine.solve(lb, ub, sol.warm)
    if polished.status != "optimal":
        log.debug("clamped re-solve of an integral node failed (%s)", polished.status)
        return None
    return polished


def fix_integers_resolve(ir: ModelIR, incumbent: MilpSolution | np.ndarray,
                         options: SolverOptions | None = None) -> LpSolution:
    """Clamp binaries to the incumbent and re-solve the LP for shadow prices."""
    x = incumbent.incumbent if isinstance(incumbent, MilpSolution) else np.asarray(incumbent)
    if x is None:
        raise InternalConsistencyError("no incumbent to clamp")
    opts = options or SolverOptions()
    if opts.backend == "highs_milp":
        opts = SolverOptions(**{**opts.__dict__, "backend": "highs"})
    engine = LpEngine(ir, opts)
    lb, ub = engine.lb.copy(), engine.ub.copy()
    cols = ir.integer_columns()
    if cols.size:
        vals = np.round(x[cols])
        lb[cols] = ub[cols] = vals
    sol = engine.solve(lb, ub)
    if sol.status != "optimal":
        raise InternalConsistencyError(f"clamped LP is {sol.status} for a feasible incumbent")
    return sol


def _solve_highs_milp(ir: ModelIR, opts: SolverOptions) -> MilpSolution:
    """External backend for large instances (scipy's HiGHS MILP)."""
    from scipy.optimize import Bounds, LinearConstraint, milp

    t0 = time.perf_counter()
    c, A, lo, hi, lb, ub, integ = ir.arrays()
    cons = [LinearConstraint(A, lo, hi)] if A.shape[0] else []
    res = milp(-c, constraints=cons, bounds=Bounds(lb, ub), integrality=integ.astype(int),
               options={"mip_rel_gap": opts.gap_tol, "time_limit": opts.time_limit_s,
                        "node_limit": opts.node_limit, "presolve": True})
    elapsed = time.perf_counter() - t0
    nodes = int(getattr(res, "mip_node_count", 0) or 0)
    if res.x is None:
        st = "infeasible" if res.status == 2 else ("gap_limit" if res.status == 1 else "numeric_failure")
        return MilpSolution(st, None, -math.inf, -math.inf, math.inf, nodes, elapsed_s=elapsed,
                            backend="highs_milp")
    lp_opts = SolverOptions(**{**opts.__dict__, "backend": "highs"})
    polished = fix_integers_resolve(ir, res.x, lp_opts)
    obj = polished.objective
    bound = -float(getattr(res, "mip_dual_bound", -obj) or -obj)
    bound = max(bound, obj)
    gap = relative_gap(bound, obj)
    status = "optimal" if res.status == 0 else "gap_limit"
    return MilpSolution(status, polished.primal, obj, bound, gap, nodes, polished,
                        elapsed_s=elapsed, backend="highs_milp")
