"""Storage economics and interconnection sensitivity.

Value added compares the worst-case daily objective with and without the
battery, removes the artificial gain of ending the day at a lower state of
charge, and splits the rest into ancillary-service revenue and everything
else. Net value subtracts the annualised capital charge spread over 365 days.
"""
from __future__ import annotations

import csv
import io
import json
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Callable, Iterable, Sequence

import numpy as np

from .engine import SolveReport, solve_instance
from .evaluation import replay
from .formulation import Schedule, bess_throughput
from .model import DomainError, InstanceSpec, Scenario
from .solver import LpSolution, SolverOptions

log = logging.getLogger(__name__)

AXES = ("load_cap", "ramp_cap")


# -- closed forms ----------------------------------------------------------

def crf(r: float, years: int) -> float:
    """Capital recovery factor; the zero-rate limit is ``1 / years``."""
    if r < 0:
        raise DomainError(f"discount rate must be >= 0, got {r}")
    if years < 1:
        raise DomainError(f"lifetime must be >= 1 year, got {years}")
    if r == 0:
        return 1.0 / years
    g = (1.0 + r) ** years
    return r * g / (g - 1.0)


def soc_depletion_correction(e0: float, mean_terminal: float, n: float, unit_energy: float,
                             eta_discharge: float, mean_energy_price: float) -> float:
    """Value of the energy drawn down below the starting state of charge."""
    return max(0.0, e0 - mean_terminal) * n * unit_energy * eta_discharge * mean_energy_price


def net_value(va: float, n: float, unit_cost: float, r: float, years: int) -> float:
    return va - n * unit_cost * crf(r, years) / 365.0


def throughput_efc(schedule: Schedule, scenario: Scenario, energy_cap: float, dt: float = 1.0):
    """Battery throughput (MWh) and equivalent full cycles for one scenario."""
    if not energy_cap > 0:
        raise DomainError("energy_cap must be > 0")
    thr = bess_throughput(schedule, scenario, dt)
    return thr, thr / (2.0 * energy_cap)


@dataclass(frozen=True)
class ValueReport:
    value_added_raw: float
    as_revenue: float
    non_as_raw: float
    soc_depletion: float
    value_added_corrected: float
    net_value: float = math.nan
    crf: float = math.nan
    units: float = 0
    mean_terminal_soc: float = math.nan

    @property
    def non_as_corrected(self) -> float:
        return self.non_as_raw - self.soc_depletion

    def to_dict(self) -> dict:
        out = dict(self.__dict__)
        out["non_as_corrected"] = self.non_as_corrected
        return {k: (None if isinstance(v, float) and not math.isfinite(v) else v) for k, v in out.items()}


def _mean(x) -> float:
    if isinstance(x, (int, float)):
        return float(x)
    arr = np.asarray(list(x), dtype=float)
    return float(arr.mean()) if arr.size else 0.0


def value_added(objectives_with: Sequence[float], objectives_without: Sequence[float],
                as_revenue, depletion: float) -> ValueReport:
    """Mean daily value added; ``as_revenue`` may be a scalar or per-day values."""
    zn = np.asarray(objectives_with, dtype=float)
    z0 = np.asarray(objectives_without, dtype=float)
    if zn.shape != z0.shape or zn.ndim != 1 or zn.size < 1:
        raise DomainError(f"need equal-length day lists, got {zn.shape} and {z0.shape}")
    raw = float(np.mean(zn - z0))
    r_as = _mean(as_revenue)
    return ValueReport(raw, r_as, raw - r_as, float(depletion), raw - float(depletion))


def value_report(objectives_with, objectives_without, as_revenue, depletion, *, units: float,
                 unit_cost: float, r: float, years: int, mean_terminal_soc: float = math.nan) -> ValueReport:
    core = value_added(objectives_with, objectives_without, as_revenue, depletion)
    factor = crf(r, years)
    nv = core.value_added_corrected - units * unit_cost * factor / 365.0
    return replace(core, net_value=nv, crf=factor, units=units, mean_terminal_soc=mean_terminal_soc)


# -- dual aggregation -------------------------------------------------------

def _axis_families(axis: str) -> tuple[str, ...]:
    if axis == "load_cap":
        return ("load_cap",)
    if axis == "ramp_cap":
        return ("ramp_up", "ramp_down")
    raise DomainError(f"unknown axis {axis!r}; expected one of {AXES}")


def aggregate_duals(duals_by_period, axis: str) -> float:
    """Sum the load-cap duals, or the ramp-up plus ramp-down duals, over the horizon.

    ``duals_by_period`` is an LpSolution or a mapping from row name to dual.
    """
    families = _axis_families(axis)
    if isinstance(duals_by_period, LpSolution):
        named: dict[str, float] = {}
        for fam in families:
            named.update(duals_by_period.duals_of(fam))
    else:
        named = {k: float(v) for k, v in duals_by_period.items()
                 if any(k.startswith(f + "[") for f in families)}
    if not named:
        raise DomainError(f"no rows of family {' or '.join(families)} among the duals")
    return float(math.fsum(named.values()))


# -- sensitivity sweeps -------------------------------------------------------

@dataclass
class SensitivityPoint:
    axis_value: float
    objectives: list[float]
    objectives_step: list[float]
    dual_aggs: list[float | None]
    statuses: list[str]
    degenerate: list[bool]
    fd_marginal: float = math.nan

    @property
    def obj_mean(self) -> float:
        return float(np.mean(self.objectives)) if self.objectives else math.nan

    @property
    def obj_std(self) -> float:
        return float(np.std(self.objectives)) if self.objectives else math.nan

    @property
    def dual_agg(self) -> float | None:
        vals = [d for d in self.dual_aggs if d is not None]
        if not vals or len(vals) != len(self.dual_aggs):
            return None
        return float(np.mean(vals))


@dataclass
class SensitivityReport:
    axis: str
    delta: float
    points: list[SensitivityPoint] = field(default_factory=list)

    @property
    def grid(self) -> list[float]:
        return [p.axis_value for p in self.points]

    @property
    def fd_marginal(self) -> list[float]:
        return [p.fd_marginal for p in self.points]

    @property
    def aggregated_dual(self) -> list[float | None]:
        return [p.dual_agg for p in self.points]

    def to_dict(self) -> dict:
        def clean(x):
            return None if x is None or (isinstance(x, float) and not math.isfinite(x)) else x
        return {
            "axis": self.axis,
            "delta": self.delta,
            "points": [{
                "axis_value": p.axis_value,
                "obj_mean": clean(p.obj_mean),
                "obj_std": clean(p.obj_std),
                "fd_marginal": clean(p.fd_marginal),
                "dual_agg": clean(p.dual_agg),
                "dual_note": ("locally valid only (degenerate basis)" if any(p.degenerate)
                              else None) if p.dual_agg is not None else "no dual",
                "statuses": p.statuses,
                "objectives": [clean(v) for v in p.objectives],
            } for p in self.points],
        }

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["axis_value", "obj_mean", "obj_std", "fd_marginal", "dual_agg"])
        for p in self.points:
            w.writerow([_fmt(p.axis_value), _fmt(p.obj_mean), _fmt(p.obj_std), _fmt(p.fd_marginal),
                        "" if p.dual_agg is None else _fmt(p.dual_agg)])
        return buf.getvalue()

    def to_text(self) -> str:
        rows = [("axis_value", "obj_mean", "obj_std", "fd_marginal", "dual_agg")]
        for p in self.points:
            rows.append((_fmt(p.axis_value), _fmt(p.obj_mean), _fmt(p.obj_std), _fmt(p.fd_marginal),
                         "no dual" if p.dual_agg is None else _fmt(p.dual_agg)))
        return _table(rows)


def _fmt(x) -> str:
    if x is None:
        return ""
    if isinstance(x, float) and not math.isfinite(x):
        return "nan"
    return f"{x:.6g}" if isinstance(x, float) else str(x)


def _table(rows) -> str:
    widths = [max(len(str(r[k])) for r in rows) for k in range(len(rows[0]))]
    return "\n".join("  ".join(str(c).rjust(w) for c, w in zip(r, widths)) for r in rows) + "\n"


def with_limit(spec: InstanceSpec, axis: str, value: float) -> InstanceSpec:
    _axis_families(axis)
    return replace(spec, limits=replace(spec.limits, **{axis: float(value)}))


def _solve_cell(args):
    spec, options, duals, axis = args
    rep = solve_instance(spec, options, with_duals=duals)
    agg = None
    if duals and rep.duals is not None and rep.duals.optimal:
        agg = aggregate_duals(rep.duals, axis) if axis else None
    obj = rep.objective if rep.ok else math.nan
    return obj, rep.status, agg, bool(rep.degenerate)


def parallel_map(fn: Callable, items: list, jobs: int = 1) -> list:
    """Ordered map, fanned out over a process pool when ``jobs > 1``."""
    if jobs <= 1 or len(items) <= 1:
        return [fn(it) for it in items]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(fn, items))


def fd_sensitivity(specs: InstanceSpec | Iterable[InstanceSpec], axis: str, grid_points: Sequence[float],
                   delta: float = 1.0, options: SolverOptions | None = None, *,
                   with_duals: bool = True, jobs: int = 1) -> SensitivityReport:
    """Forward finite differences of the optimum along one interconnection limit.

    Each grid value ``x`` is solved at ``x`` and ``x + delta`` for every day
    instance; the marginal is the mean over days of ``(Z(x+delta) - Z(x)) / delta``.
    Failed solves are recorded as ``nan`` and the report is still produced.
    """
    _axis_families(axis)
    days = [specs] if isinstance(specs, InstanceSpec) else list(specs)
    grid = [float(g) for g in grid_points]
    if not grid or any(b <= a for a, b in zip(grid, grid[1:])):
        raise DomainError("grid points must be non-empty and strictly increasing")
    if not delta > 0:
        raise DomainError("delta must be > 0")
    cells = []
    for g in grid:
        for day in days:
            cells.append((with_limit(day, axis, g), options, with_duals, axis))
            cells.append((with_limit(day, axis, g + delta), options, False, None))
    results = parallel_map(_solve_cell, cells, jobs)
    report = SensitivityReport(axis, float(delta))
    k = 0
    for g in grid:
        objs, steps, aggs, stats, degs = [], [], [], [], []
        for _ in days:
            (z, st, agg, deg), (z2, st2, _, _) = results[k], results[k + 1]
            k += 2
            objs.append(z)
            steps.append(z2)
            aggs.append(agg)
            stats.append(st if st == st2 else f"{st}/{st2}")
            degs.append(deg)
        pt = SensitivityPoint(g, objs, steps, aggs, stats, degs)
        pt.fd_marginal = float(np.mean([(b - a) / delta for a, b in zip(objs, steps)]))
        report.points.append(pt)
    return report


# -- sizing study ------------------------------------------------------------

@dataclass(frozen=True)
class Technology:
    name: str
    power_mw: float
    energy_mwh: float
    unit_cost: float
    round_trip_eff: float

    def unit_bess(self, base):
        eta = math.sqrt(self.round_trip_eff)
        return replace(base, energy_cap=self.energy_mwh, charge_cap=self.power_mw, discharge_cap=self.power_mw,
                       eta_charge=eta, eta_discharge=eta)


MEGAPACK_3 = Technology("megapack_3", 1.25, 5.0, 1.0e6, 0.91)
MEGAPACK_2XL = Technology("megapack_2xl", 1.9, 3.9, 1.2e6, 0.92)


@dataclass
class SizingCell:
    technology: str
    units: int
    cycle_limit: float
    rate: float
    report: ValueReport | None
    statuses: list[str]

    def to_dict(self) -> dict:
        return {"technology": self.technology, "units": self.units, "cycle_limit": self.cycle_limit,
                "rate": self.rate, "statuses": self.statuses,
                "value": None if self.report is None else self.report.to_dict()}


def _day_value(spec: InstanceSpec, rep: SolveReport) -> tuple[float, float, float]:
    """(objective, ancillary revenue, mean terminal SOC) of one solved day."""
    if not rep.ok:
        return math.nan, math.nan, math.nan
    br = rep.breakdown
    r_as = br.reserve_revenue + br.frp_revenue
    if spec.has_bess:
        terminal = float(np.mean([replay(rep.schedule, sc, spec).soc[-1] for sc in spec.scenarios]))
    else:
        terminal = spec.bess.soc_init
    return rep.objective, r_as, terminal


def _solve_day(args):
    spec, options = args
    return _day_value(spec, solve_instance(spec, options))


def sizing_study(days: InstanceSpec | Sequence[InstanceSpec], technologies: Sequence[Technology],
                 units: Sequence[int], cycle_limits: Sequence[float], rates: Sequence[float],
                 years: int = 20, options: SolverOptions | None = None, *,
                 enforce_terminal: bool = False, jobs: int = 1) -> list[SizingCell]:
    """Value added and net value over a grid of fleet sizes and cycling limits.

    The no-battery baseline is solved once per day. The terminal SOC
    constraint is dropped unless ``enforce_terminal`` is set, and the
    resulting depletion is valued at the day's mean energy price.
    """
    days = [days] if isinstance(days, InstanceSpec) else list(days)
    baseline = parallel_map(_solve_day, [(replace(d, bess_units=0), options) for d in days], jobs)
    z0 = [b[0] for b in baseline]
    plan, tasks = [], []
    for tech in technologies:
        for n in units:
            for cyc in cycle_limits:
                plan.append((tech, n, cyc))
                if n == 0:
                    continue
                for d in days:
                    bess = replace(tech.unit_bess(d.bess), cycle_budget=float(cyc))
                    if not enforce_terminal:
                        bess = replace(bess, soc_terminal=None)
                    tasks.append((replace(d, bess=bess, bess_units=n), options))
    solved = iter(parallel_map(_solve_day, tasks, jobs))
    cells = []
    for tech, n, cyc in plan:
        if n == 0:
            per_day = [(z, 0.0, d.bess.soc_init) for z, d in zip(z0, days)]
        else:
            per_day = [next(solved) for _ in days]
        zn = [p[0] for p in per_day]
        statuses = ["optimal" if math.isfinite(z) else "failed" for z in zn]
        for r in rates:
            if not all(math.isfinite(z) for z in zn + z0):
                cells.append(SizingCell(tech.name, n, cyc, r, None, statuses))
                continue
            e0 = days[0].bess.soc_init
            deps = []
            for d, (_, _, term) in zip(days, per_day):
                price = float(np.mean(d.prices.energy))
                deps.append(soc_depletion_correction(e0, term, n, tech.energy_mwh,
                                                     math.sqrt(tech.round_trip_eff), price))
            rep = value_report(zn, z0, [p[1] for p in per_day], float(np.mean(deps)), units=n,
                               unit_cost=tech.unit_cost, r=r, years=years,
                               mean_terminal_soc=float(np.mean([p[2] for p in per_day])))
            cells.append(SizingCell(tech.name, n, cyc, r, rep, statuses))
    return cells


def sizing_table(cells: Sequence[SizingCell]) -> str:
    rows = [("technology", "units", "cycle_limit", "rate", "VA", "AS", "non_AS", "V_dep", "NV")]
    for c in cells:
        v = c.report
        if v is None:
            rows.append((c.technology, c.units, c.cycle_limit, c.rate, "failed", "", "", "", ""))
        else:
            rows.append((c.technology, c.units, _fmt(float(c.cycle_limit)), _fmt(float(c.rate)),
                         _fmt(v.value_added_corrected), _fmt(v.as_revenue), _fmt(v.non_as_corrected),
                         _fmt(v.soc_depletion), _fmt(v.net_value)))
    return _table(rows)


def to_json(obj) -> str:
    data = obj.to_dict() if hasattr(obj, "to_dict") else [o.to_dict() for o in obj]
    return json.dumps(data, indent=1)
