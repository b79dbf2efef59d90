"""Open-loop replay of a fixed schedule and out-of-sample violation statistics.

The schedule is never adjusted: if a realised scenario drives the battery
outside its SOC band or the grid draw over a limit, the event is recorded.
"""
from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field

import numpy as np

from .formulation import Schedule
from .model import DomainError, InstanceSpec, Scenario
from .scenarios import GeneratorConfig, generate_oos_scenarios

VIOLATION_TOL = 1e-6
KINDS = ("load", "ramp_up", "ramp_down", "soc_low", "soc_high")


@dataclass(frozen=True)
class Violation:
    period: int
    kind: str
    exceedance: float


@dataclass
class ReplayTrace:
    net_load: np.ndarray
    soc: np.ndarray
    compute_power: np.ndarray
    energy: np.ndarray
    violations: list[Violation] = field(default_factory=list)

    def count(self, *kinds: str) -> int:
        return sum(1 for v in self.violations if v.kind in kinds)

    def periods_with(self, *kinds: str) -> set[int]:
        return {v.period for v in self.violations if v.kind in kinds}

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["t", "D", "soc", "P", "violations"])
        for t in range(1, len(self.net_load) + 1):
            kinds = ";".join(v.kind for v in self.violations if v.period == t)
            w.writerow([t, repr(float(self.net_load[t - 1])), repr(float(self.soc[t - 1])),
                        repr(float(self.compute_power[t - 1])), kinds])
        return buf.getvalue()


def replay(schedule: Schedule, scenario: Scenario, spec: InstanceSpec,
           tol: float = VIOLATION_TOL) -> ReplayTrace:
    """Recompute grid draw, compute power and SOC for one realised scenario."""
    T = spec.grid.periods
    dt = spec.grid.dt
    if schedule.periods != T or scenario.periods != T:
        raise DomainError(f"schedule/scenario lengths ({schedule.periods}, {scenario.periods}) != T={T}")
    d = spec.dvfs
    a = np.asarray(schedule.dvfs, dtype=float)
    fixed = (np.asarray(scenario.fixed_envelope, dtype=float)
             + d.fixed_sensitive_fraction * (a - d.reference) / d.reference * np.asarray(scenario.fixed_load))
    jobs = np.zeros(T)
    for job in spec.jobs:
        if len(schedule.job_rates[job.id]) != T:
            raise DomainError(f"job {job.id!r} rate series has wrong length")
        jobs += schedule.effective(job.id, d.reference)
    P = fixed + jobs
    ch = np.asarray(schedule.bess_charge, dtype=float)
    dis = np.asarray(schedule.bess_discharge, dtype=float)
    D = ch - dis + P

    b = spec.fleet
    C = b.energy_cap
    charged = b.eta_charge * (ch + np.asarray(scenario.deploy_frp_up) * np.asarray(schedule.frp_up_offer))
    drawn = (dis + np.asarray(scenario.deploy_frp_down) * np.asarray(schedule.frp_down_offer)
             + np.asarray(scenario.deploy_reserve) * np.asarray(schedule.reserve_offer)) / b.eta_discharge
    E = np.empty(T)
    level = b.soc_init * C
    for t in range(T):
        level = level + (charged[t] - drawn[t]) * dt
        E[t] = level
    soc = E / C if C > 0 else np.full(T, b.soc_init)

    events = []
    lim = spec.limits
    for t in range(T):
        if D[t] - lim.load_cap > tol:
            events.append(Violation(t + 1, "load", float(D[t] - lim.load_cap)))
        if t > 0:
            prev = D[t - 1]
        elif lim.initial_net_load is not None:
            prev = lim.initial_net_load
        else:
            prev = None
        if prev is not None:
            if D[t] - prev - lim.ramp_cap > tol:
                events.append(Violation(t + 1, "ramp_up", float(D[t] - prev - lim.ramp_cap)))
            if prev - D[t] - lim.ramp_cap > tol:
                events.append(Violation(t + 1, "ramp_down", float(prev - D[t] - lim.ramp_cap)))
        if C > 0:
            if b.soc_min * C - E[t] > tol:
                events.append(Violation(t + 1, "soc_low", float(b.soc_min - soc[t])))
            if E[t] - b.soc_max * C > tol:
                events.append(Violation(t + 1, "soc_high", float(soc[t] - b.soc_max)))
    return ReplayTrace(D, soc, P, E, events)


@dataclass(frozen=True)
class OosReport:
    period_violation_rate_load: float
    period_violation_rate_ramp: float
    scenario_incidence_load: float
    scenario_incidence_ramp: float
    max_exceedance_load: float
    max_exceedance_ramp: float
    soc_violation_rate: float
    sample_count: int

    def to_dict(self) -> dict:
        return dict(self.__dict__)


def summarize_traces(traces: list[ReplayTrace], periods: int) -> OosReport:
    n = len(traces)
    if n < 1:
        raise DomainError("need at least one trace")
    cells = periods * n
    load_periods = sum(len(tr.periods_with("load")) for tr in traces)
    ramp_periods = sum(len(tr.periods_with("ramp_up", "ramp_down")) for tr in traces)
    soc_periods = sum(len(tr.periods_with("soc_low", "soc_high")) for tr in traces)
    inc_load = sum(1 for tr in traces if tr.count("load")) / n
    inc_ramp = sum(1 for tr in traces if tr.count("ramp_up", "ramp_down")) / n
    max_load = max((v.exceedance for tr in traces for v in tr.violations if v.kind == "load"), default=0.0)
    max_ramp = max((v.exceedance for tr in traces for v in tr.violations
                    if v.kind in ("ramp_up", "ramp_down")), default=0.0)
    return OosReport(load_periods / cells, ramp_periods / cells, inc_load, inc_ramp,
                     max_load, max_ramp, soc_periods / cells, n)


def oos_evaluate(schedule: Schedule, spec: InstanceSpec, generator: GeneratorConfig,
                 sample_count: int, *, seed: int | None = None, vary_load: bool = True,
                 return_traces: bool = False):
    """Replay ``schedule`` on ``sample_count`` fresh scenarios and aggregate violations."""
    if sample_count < 1:
        raise DomainError("sample_count must be >= 1")
    fresh = generate_oos_scenarios(generator, spec.grid, sample_count, seed=seed, vary_load=vary_load)
    traces = [replay(schedule, sc, spec) for sc in fresh]
    report = summarize_traces(traces, spec.grid.periods)
    return (report, traces) if return_traces else report
