"""Build, solve, extract, and check one instance."""
from __future__ import annotations

import logging
import math
import time
from dataclasses import dataclass, field

import numpy as np

from .evaluation import replay
from .formulation import ProfitBreakdown, Schedule, build_model, extract_schedule, profit_breakdown
from .ir import ModelIR
from .model import InstanceSpec
from .solver import (LpSolution, SolverOptions, fix_integers_resolve,
                     solve_lp, solve_milp)

log = logging.getLogger(__name__)

# solver statuses mapped onto CLI exit codes
FEASIBLE_STATUSES = ("optimal", "gap_limit", "node_limit")


@dataclass
class SolveReport:
    status: str
    objective: float
    bound: float
    gap: float
    schedule: Schedule | None
    breakdown: ProfitBreakdown | None
    nodes: int = 0
    elapsed_s: float = 0.0
    backend: str = "simplex"
    duals: LpSolution | None = field(default=None, repr=False)
    degenerate: bool = False
    in_sample_violations: int = 0
    ir: ModelIR | None = field(default=None, repr=False)
    primal: np.ndarray | None = field(default=None, repr=False)

    @property
    def ok(self) -> bool:
        return self.status in FEASIBLE_STATUSES and self.schedule is not None

    def named_duals(self, family: str) -> dict[str, float]:
        if self.duals is None:
            return {}
        return self.duals.duals_of(family)

    def to_dict(self) -> dict:
        out = {
            "status": self.status,
            "objective": _num(self.objective),
            "bound": _num(self.bound),
            "gap": _num(self.gap),
            "nodes": self.nodes,
            "elapsed_s": self.elapsed_s,
            "backend": self.backend,
            "degenerate": self.degenerate,
            "in_sample_violations": self.in_sample_violations,
            "profit": None if self.breakdown is None else self.breakdown.to_dict(),
        }
        if self.duals is not None:
            out["duals"] = {fam: self.named_duals(fam) for fam in ("load_cap", "ramp_up", "ramp_down")}
            out["duals_note"] = "locally valid only (degenerate basis)" if self.degenerate else "basis non-degenerate"
        return out


def _num(x: float):
    return x if math.isfinite(x) else None


def solve_instance(spec: InstanceSpec, options: SolverOptions | None = None, *,
                   with_duals: bool = False, ir: ModelIR | None = None) -> SolveReport:
    """Solve one instance as LP or MILP according to its DVFS mode.

    ``with_duals`` re-solves the LP with binaries clamped to an optimal
    incumbent; incumbents stopped by a limit get no duals.
    """
    opts = options or SolverOptions.from_config(spec.solver)
    ir = ir if ir is not None else build_model(spec)
    t0 = time.perf_counter()
    if ir.integer_columns().size:
        milp = solve_milp(ir, opts)
        status, obj, bound, gap, nodes, x = (milp.status, milp.objective, milp.bound, milp.gap,
                                             milp.nodes_explored, milp.incumbent)
        lp = milp.lp
        backend = milp.backend
        if with_duals and status == "optimal":
            lp = fix_integers_resolve(ir, milp, _dual_options(opts))
        elif with_duals:
            lp = None
    else:
        lp = solve_lp(ir, opts)
        status = lp.status
        x = lp.primal if lp.optimal else None
        obj = lp.objective if lp.optimal else (-math.inf if status == "infeasible" else math.nan)
        bound, gap, nodes = obj, 0.0 if lp.optimal else math.inf, 1
        backend = opts.backend
    elapsed = time.perf_counter() - t0
    if x is None:
        return SolveReport(status, obj, bound, gap, None, None, nodes, elapsed, backend, ir=ir)
    schedule = extract_schedule(ir, x, spec)
    breakdown = profit_breakdown(schedule, spec)
    bad = sum(len(replay(schedule, sc, spec).violations) for sc in spec.scenarios)
    if bad:
        log.warning("schedule violates %d in-sample limits on replay", bad)
    duals = lp if with_duals else None
    return SolveReport(status, obj, bound, gap, schedule, breakdown, nodes, elapsed, backend,
                       duals, bool(duals is not None and duals.degenerate), bad, ir, x)


def _dual_options(opts: SolverOptions) -> SolverOptions:
    # duals always come from the embedded simplex unless HiGHS was asked for explicitly
    if opts.backend == "highs_milp":
        return SolverOptions(**{**opts.__dict__, "backend": "simplex"})
    return opts
