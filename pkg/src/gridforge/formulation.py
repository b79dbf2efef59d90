"""Build the robust day-ahead model as a ModelIR and map solutions back.

Two builders share one skeleton:

* :func:`build_continuous_model` uses the effective service rate
  ``v[j,t] = (a_t / a_o) * w[j,t]`` so the workload block is linear in
  ``(v, a)``; ``|a_t - a_o|`` is carried by an epigraph variable ``u[t]``.
* :func:`build_discrete_model` picks one DVFS level per period through
  binaries ``z[l,t]`` and disaggregated rates ``w[j,l,t]``.

Both maximise ``theta`` subject to ``theta <= profit_s`` for every scenario.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .ir import INF, ModelIR
from .model import DomainError, InstanceSpec, Scenario


class WrongBuilderError(ValueError):
    """The builder does not match the instance's DVFS mode."""


class ExtractionError(RuntimeError):
    """No usable primal solution to turn into a schedule."""


# -- builders --------------------------------------------------------------

def build_continuous_model(spec: InstanceSpec, *, integer_bess_modes: bool = False) -> ModelIR:
    """Continuous-DVFS model (or fixed ``a = a_o`` when DVFS is disabled).

    Battery mode indicators are relaxed to [0, 1] unless
    ``integer_bess_modes`` is set, which is only useful for comparing
    against the discrete builder on equal terms.
    """
    if spec.dvfs.mode == "discrete":
        raise WrongBuilderError("discrete DVFS instances need build_discrete_model")
    return _Builder(spec, discrete=False, integer_modes=integer_bess_modes).build()


def build_discrete_model(spec: InstanceSpec) -> ModelIR:
    """Discrete-DVFS MILP with battery mode binaries."""
    if spec.dvfs.mode != "discrete":
        raise WrongBuilderError(f"build_discrete_model needs discrete DVFS, got {spec.dvfs.mode!r}")
    return _Builder(spec, discrete=True, integer_modes=True).build()


def build_model(spec: InstanceSpec) -> ModelIR:
    """Pick the builder that matches ``spec.dvfs.mode``."""
    if spec.dvfs.mode == "discrete":
        return build_discrete_model(spec)
    return build_continuous_model(spec)


class _Builder:
    def __init__(self, spec: InstanceSpec, discrete: bool, integer_modes: bool):
        self.spec = spec
        self.discrete = discrete
        self.integer_modes = integer_modes
        self.ir = ModelIR()
        self.T = spec.grid.periods
        self.dt = spec.grid.dt
        self.periods = range(1, self.T + 1)
        # per-scenario objective contributions that are identical across scenarios
        self.shared: dict[int, float] = {}

    def build(self) -> ModelIR:
        spec, ir = self.spec, self.ir
        ir.meta.update(mode=spec.dvfs.mode, discrete=self.discrete, periods=self.T,
                       scenarios=len(spec.scenarios), jobs=[j.id for j in spec.jobs],
                       has_bess=spec.has_bess, name=spec.name)
        self.theta = ir.add_var("theta", -INF, INF)
        if self.discrete:
            eff = self._dvfs_discrete()
        else:
            eff = self._dvfs_continuous()
        self._work(eff)
        if spec.has_bess:
            self._bess_first_stage()
        for s, sc in enumerate(spec.scenarios, start=1):
            self._scenario(s, sc, eff)
        ir.set_objective({self.theta: 1.0})
        return ir

    def _add_shared(self, col: int, coef: float) -> None:
        if coef:
            self.shared[col] = self.shared.get(col, 0.0) + coef

    # workload and DVFS ---------------------------------------------------
    def _dvfs_continuous(self):
        spec, ir, dt = self.spec, self.ir, self.dt
        d = spec.dvfs
        w = spec.weights
        a_o = d.reference
        self.a = {}
        for t in self.periods:
            if d.mode == "disabled":
                self.a[t] = ir.add_var(f"a[{t}]", a_o, a_o)
            else:
                self.a[t] = ir.add_var(f"a[{t}]", d.bounds[0], d.bounds[1])
        if d.mode == "continuous":
            for t in self.periods:
                u = ir.add_var(f"u[{t}]", 0.0, INF)
                ir.add_constraint(f"abs_hi[{t}]", {u: 1.0, self.a[t]: -1.0}, ">=", -a_o)
                ir.add_constraint(f"abs_lo[{t}]", {u: 1.0, self.a[t]: 1.0}, ">=", a_o)
                self._add_shared(u, w.lambda_job * w.c_dvfs * dt)
        eff = {}
        for job in spec.jobs:
            for t in self.periods:
                ub = 0.0 if t < job.release else INF
                col = ir.add_var(f"v[{job.id},{t}]", 0.0, ub)
                eff[job.id, t] = col
                if t >= job.release:
                    # affine rate bound: v <= r_max * a / a_o
                    ir.add_constraint(f"rate[{job.id},{t}]",
                                      {col: 1.0, self.a[t]: -job.max_rate / a_o}, "<=", 0.0)
        return eff

    def _dvfs_discrete(self):
        spec, ir, dt = self.spec, self.ir, self.dt
        d = spec.dvfs
        w = spec.weights
        a_o = d.reference
        levels = d.levels
        self.z = {}
        self.a = {}
        for t in self.periods:
            for k, lv in enumerate(levels, start=1):
                col = ir.add_var(f"z[{k},{t}]", 0.0, 1.0, integer=True)
                self.z[k, t] = col
                self._add_shared(col, w.lambda_job * w.c_dvfs * abs(lv - a_o) * dt)
            ir.add_constraint(f"sos1[{t}]", {self.z[k, t]: 1.0 for k in range(1, len(levels) + 1)}, "=", 1.0)
            self.a[t] = ir.add_var(f"a[{t}]", min(levels), max(levels))
            coeffs = {self.a[t]: 1.0}
            for k, lv in enumerate(levels, start=1):
                coeffs[self.z[k, t]] = -lv
            ir.add_constraint(f"alink[{t}]", coeffs, "=", 0.0)
        eff = {}
        for job in spec.jobs:
            for t in self.periods:
                active = t >= job.release
                p = ir.add_var(f"p[{job.id},{t}]", 0.0, INF if active else 0.0)
                eff[job.id, t] = p
                link = {p: 1.0}
                for k, lv in enumerate(levels, start=1):
                    wl = ir.add_var(f"w[{job.id},{k},{t}]", 0.0, job.max_rate if active else 0.0)
                    link[wl] = -lv / a_o
                    if active:
                        ir.add_constraint(f"rate[{job.id},{k},{t}]",
                                          {wl: 1.0, self.z[k, t]: -job.max_rate}, "<=", 0.0)
                ir.add_constraint(f"plink[{job.id},{t}]", link, "=", 0.0)
        return eff

    def _work(self, eff):
        spec, ir, dt = self.spec, self.ir, self.dt
        w = spec.weights
        self.unfinished = {}
        for job in spec.jobs:
            lcol = ir.add_var(f"l[{job.id}]", 0.0, job.work)
            self.unfinished[job.id] = lcol
            served = {eff[job.id, t]: dt for t in self.periods}
            ir.add_constraint(f"work_lo[{job.id}]", {**served, lcol: 1.0}, ">=", job.work)
            ir.add_constraint(f"work_hi[{job.id}]", served, "<=", job.work)
            self._add_shared(lcol, w.lambda_job * w.c_unfinished * job.weight * dt)
            for t in range(job.deadline + 1, self.T + 1):
                self._add_shared(eff[job.id, t], w.lambda_job * w.c_tardy * job.weight * (t - job.deadline) * dt)

    # battery -----------------------------------------------------------
    def _bess_first_stage(self):
        ir, dt, pr = self.ir, self.dt, self.spec.prices
        b = self.spec.fleet
        self.bess = {}
        for t in self.periods:
            cols = {name: ir.add_var(f"{name}[{t}]", 0.0, INF) for name in ("ch", "dis", "res", "fu", "fd")}
            cols["alpha"] = ir.add_var(f"alpha[{t}]", 0.0, 1.0, integer=self.integer_modes)
            cols["beta"] = ir.add_var(f"beta[{t}]", 0.0, 1.0, integer=self.integer_modes)
            self.bess[t] = cols
            ir.add_constraint(f"mode[{t}]", {cols["alpha"]: 1.0, cols["beta"]: 1.0}, "<=", 1.0)
            ir.add_constraint(f"chg_cap[{t}]", {cols["ch"]: 1.0, cols["fu"]: 1.0,
                                                cols["alpha"]: -b.charge_cap}, "<=", 0.0)
            ir.add_constraint(f"dis_cap[{t}]", {cols["dis"]: 1.0, cols["res"]: 1.0, cols["fd"]: 1.0,
                                                cols["beta"]: -b.discharge_cap}, "<=", 0.0)
            # capacity payments enter every scenario's profit identically
            self._add_shared(cols["res"], -pr.reserve[t - 1] * dt)
            self._add_shared(cols["fu"], -pr.frp_up[t - 1] * dt)
            self._add_shared(cols["fd"], -pr.frp_down[t - 1] * dt)

    # scenario blocks -----------------------------------------------------
    def _scenario(self, s: int, sc: Scenario, eff):
        spec, ir, dt = self.spec, self.ir, self.dt
        d = spec.dvfs
        lim = spec.limits
        pr = spec.prices
        phi, a_o = d.fixed_sensitive_fraction, d.reference
        robust = dict(self.shared)
        robust[self.theta] = robust.get(self.theta, 0.0) + 1.0

        def add_obj(col, coef):
            robust[col] = robust.get(col, 0.0) + coef

        D = {}
        for t in self.periods:
            env, fc = sc.fixed_envelope[t - 1], sc.fixed_load[t - 1]
            P = ir.add_var(f"P[{s},{t}]", -INF, INF)
            coeffs = {P: 1.0}
            for job in spec.jobs:
                coeffs[eff[job.id, t]] = -1.0
            if self.discrete:
                for k, lv in enumerate(d.levels, start=1):
                    coeffs[self.z[k, t]] = -phi * (lv - a_o) / a_o * fc
                ir.add_constraint(f"power[{s},{t}]", coeffs, "=", env)
            else:
                coeffs[self.a[t]] = -phi * fc / a_o
                ir.add_constraint(f"power[{s},{t}]", coeffs, "=", env - phi * fc)
            ir.add_constraint(f"hw_cap[{s},{t}]", {P: 1.0}, "<=", spec.dc_power_cap)
            D[t] = ir.add_var(f"D[{s},{t}]", -INF, INF)
            net = {D[t]: 1.0, P: -1.0}
            if spec.has_bess:
                net[self.bess[t]["ch"]] = -1.0
                net[self.bess[t]["dis"]] = 1.0
            ir.add_constraint(f"netload[{s},{t}]", net, "=", 0.0)
            ir.add_constraint(f"load_cap[{s},{t}]", {D[t]: 1.0}, "<=", lim.load_cap)
            add_obj(D[t], pr.energy[t - 1] * dt)
        for t in self.periods:
            if t >= 2:
                ir.add_constraint(f"ramp_up[{s},{t}]", {D[t]: 1.0, D[t - 1]: -1.0}, "<=", lim.ramp_cap)
                ir.add_constraint(f"ramp_down[{s},{t}]", {D[t - 1]: 1.0, D[t]: -1.0}, "<=", lim.ramp_cap)
            elif lim.initial_net_load is not None:
                ir.add_constraint(f"ramp_up[{s},1]", {D[1]: 1.0}, "<=", lim.initial_net_load + lim.ramp_cap)
                ir.add_constraint(f"ramp_down[{s},1]", {D[1]: -1.0}, "<=", lim.ramp_cap - lim.initial_net_load)

        if spec.has_bess:
            self._scenario_bess(s, sc, add_obj)
        ir.add_constraint(f"robust[{s}]", robust, "<=", 0.0)

    def _scenario_bess(self, s, sc, add_obj):
        spec, ir, dt = self.spec, self.ir, self.dt
        b = spec.fleet
        pr = spec.prices
        w = spec.weights
        C = b.energy_cap
        prev = None
        thr = {}
        for t in self.periods:
            cols = self.bess[t]
            br, bu, bd = sc.deploy_reserve[t - 1], sc.deploy_frp_up[t - 1], sc.deploy_frp_down[t - 1]
            E = ir.add_var(f"EB[{s},{t}]", b.soc_min * C, b.soc_max * C)
            bal = {E: 1.0,
                   cols["ch"]: -dt * b.eta_charge, cols["fu"]: -dt * b.eta_charge * bu,
                   cols["dis"]: dt / b.eta_discharge, cols["fd"]: dt * bd / b.eta_discharge,
                   cols["res"]: dt * br / b.eta_discharge}
            if prev is None:
                rhs = b.soc_init * C
            else:
                bal[prev] = -1.0
                rhs = 0.0
            ir.add_constraint(f"energy[{s},{t}]", bal, "=", rhs)
            prev = E
            for name, coef in (("ch", 1.0), ("fu", bu), ("dis", 1.0), ("res", br), ("fd", bd)):
                thr[cols[name]] = thr.get(cols[name], 0.0) + dt * coef
            # deployed energy changes the scenario's settlement
            price = pr.energy[t - 1] * dt
            add_obj(cols["res"], -price * br)
            add_obj(cols["fu"], price * bu)
            add_obj(cols["fd"], -price * bd)
        if b.soc_terminal is not None:
            ir.add_constraint(f"terminal[{s}]", {prev: 1.0}, ">=", b.soc_terminal * C)
        ls = ir.add_var(f"ls[{s}]", 0.0, INF)
        thr[ls] = -2.0 * C
        ir.add_constraint(f"thr[{s}]", thr, "<=", 2.0 * C * b.cycle_budget)
        add_obj(ls, w.lambda_deg * b.degradation_cost * 2.0 * C)


# -- schedules and pricing -------------------------------------------------

@dataclass(frozen=True)
class Schedule:
    dvfs: tuple[float, ...]
    job_rates: dict[str, tuple[float, ...]]
    unfinished: dict[str, float]
    bess_charge: tuple[float, ...]
    bess_discharge: tuple[float, ...]
    reserve_offer: tuple[float, ...]
    frp_up_offer: tuple[float, ...]
    frp_down_offer: tuple[float, ...]
    mode_charge: tuple[float, ...]
    mode_discharge: tuple[float, ...]
    dvfs_level: tuple[int, ...] | None = None
    effective_rates: dict[str, tuple[float, ...]] = field(default_factory=dict)

    @property
    def periods(self) -> int:
        return len(self.dvfs)

    def effective(self, job_id: str, reference: float) -> np.ndarray:
        """DVFS-scaled service ``(a_t / a_o) * w_t`` for one job."""
        if job_id in self.effective_rates:
            return np.asarray(self.effective_rates[job_id])
        return np.asarray(self.dvfs) / reference * np.asarray(self.job_rates[job_id])

    def to_dict(self) -> dict:
        return {
            "dvfs": list(self.dvfs),
            "dvfs_level": None if self.dvfs_level is None else list(self.dvfs_level),
            "job_rates": {k: list(v) for k, v in self.job_rates.items()},
            "effective_rates": {k: list(v) for k, v in self.effective_rates.items()},
            "unfinished": dict(self.unfinished),
            "bess_charge": list(self.bess_charge),
            "bess_discharge": list(self.bess_discharge),
            "reserve_offer": list(self.reserve_offer),
            "frp_up_offer": list(self.frp_up_offer),
            "frp_down_offer": list(self.frp_down_offer),
            "mode_charge": list(self.mode_charge),
            "mode_discharge": list(self.mode_discharge),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "Schedule":
        tup = lambda xs: tuple(float(x) for x in xs)  # noqa: E731
        return cls(
            dvfs=tup(data["dvfs"]),
            job_rates={k: tup(v) for k, v in data["job_rates"].items()},
            unfinished={k: float(v) for k, v in data["unfinished"].items()},
            bess_charge=tup(data["bess_charge"]),
            bess_discharge=tup(data["bess_discharge"]),
            reserve_offer=tup(data["reserve_offer"]),
            frp_up_offer=tup(data["frp_up_offer"]),
            frp_down_offer=tup(data["frp_down_offer"]),
            mode_charge=tup(data["mode_charge"]),
            mode_discharge=tup(data["mode_discharge"]),
            dvfs_level=None if data.get("dvfs_level") is None else tuple(int(k) for k in data["dvfs_level"]),
            effective_rates={k: tup(v) for k, v in data.get("effective_rates", {}).items()},
        )


def _primal_of(primal):
    status = getattr(primal, "status", "optimal")
    x = getattr(primal, "primal", None)
    if x is None:
        x = getattr(primal, "incumbent", None)
    if x is None and not hasattr(primal, "status"):
        x = primal
    if x is None:
        raise ExtractionError(f"no primal solution to extract (status {status})")
    if status in ("infeasible", "unbounded", "numeric_failure"):
        raise ExtractionError(f"cannot extract a schedule from a {status} solution")
    return np.asarray(x, dtype=float)


def extract_schedule(ir: ModelIR, primal, spec: InstanceSpec) -> Schedule:
    """Turn a primal vector (or a solver result) into first-stage decisions."""
    x = _primal_of(primal)
    if x.shape != (ir.n_vars,):
        raise ExtractionError(f"primal has {x.size} entries, model has {ir.n_vars}")
    T = spec.grid.periods
    a_o = spec.dvfs.reference
    val = lambda name: float(x[ir.name_index[name]])  # noqa: E731
    a = np.array([val(f"a[{t}]") for t in range(1, T + 1)])
    rates, effective = {}, {}
    level = None
    if ir.meta.get("discrete"):
        L = len(spec.dvfs.levels)
        zs = np.array([[val(f"z[{k},{t}]") for k in range(1, L + 1)] for t in range(1, T + 1)])
        level = tuple(int(k) + 1 for k in np.argmax(zs, axis=1))
        for job in spec.jobs:
            rates[job.id] = tuple(sum(val(f"w[{job.id},{k},{t}]") for k in range(1, L + 1))
                                  for t in range(1, T + 1))
            effective[job.id] = tuple(val(f"p[{job.id},{t}]") for t in range(1, T + 1))
    else:
        for job in spec.jobs:
            v = np.array([val(f"v[{job.id},{t}]") for t in range(1, T + 1)])
            w = np.where(a > 0, v * a_o / np.where(a > 0, a, 1.0), 0.0)
            rates[job.id] = tuple(float(r) for r in w)
            effective[job.id] = tuple(float(r) for r in v)
    unfinished = {job.id: val(f"l[{job.id}]") for job in spec.jobs}

    def series(name):
        if not ir.meta.get("has_bess"):
            return tuple(0.0 for _ in range(T))
        return tuple(val(f"{name}[{t}]") for t in range(1, T + 1))

    return Schedule(tuple(float(v) for v in a), rates, unfinished, series("ch"), series("dis"),
                    series("res"), series("fu"), series("fd"), series("alpha"), series("beta"),
                    level, effective)


@dataclass(frozen=True)
class ScenarioProfit:
    reserve_revenue: float
    frp_revenue: float
    energy_cost: float
    job_cost: float
    degradation_cost: float
    throughput: float
    profit: float


@dataclass(frozen=True)
class ProfitBreakdown:
    reserve_revenue: float
    frp_revenue: float
    energy_cost_s: tuple[float, ...]
    job_cost: float
    degradation_cost_s: tuple[float, ...]
    per_scenario_profit: tuple[float, ...]
    worst_case: float

    def to_dict(self) -> dict:
        return {k: (list(v) if isinstance(v, tuple) else v) for k, v in self.__dict__.items()}


def _check_lengths(schedule: Schedule, scenario: Scenario, spec: InstanceSpec) -> int:
    T = spec.grid.periods
    if schedule.periods != T or scenario.periods != T:
        raise DomainError(f"schedule has {schedule.periods} periods, scenario {scenario.periods}, T={T}")
    for jid, r in schedule.job_rates.items():
        if len(r) != T:
            raise DomainError(f"job {jid!r} has {len(r)} rates, expected {T}")
    return T


def compute_power(schedule: Schedule, scenario: Scenario, spec: InstanceSpec) -> np.ndarray:
    """Data-centre draw: conservative fixed load at the scheduled DVFS plus job power."""
    d = spec.dvfs
    a = np.asarray(schedule.dvfs)
    P = (np.asarray(scenario.fixed_envelope)
         + d.fixed_sensitive_fraction * (a - d.reference) / d.reference * np.asarray(scenario.fixed_load))
    for job in spec.jobs:
        P = P + schedule.effective(job.id, d.reference)
    return P


def bess_throughput(schedule: Schedule, scenario: Scenario, dt: float) -> float:
    """Energy through the battery, counting deployed offers at their realised share."""
    flows = (np.asarray(schedule.bess_charge)
             + np.asarray(scenario.deploy_frp_up) * np.asarray(schedule.frp_up_offer)
             + np.asarray(schedule.bess_discharge)
             + np.asarray(scenario.deploy_reserve) * np.asarray(schedule.reserve_offer)
             + np.asarray(scenario.deploy_frp_down) * np.asarray(schedule.frp_down_offer))
    return float(dt * flows.sum())


def job_cost(schedule: Schedule, spec: InstanceSpec) -> float:
    """Workload-quality cost (tardiness, unfinished work, DVFS deviation)."""
    dt = spec.grid.dt
    w = spec.weights
    a_o = spec.dvfs.reference
    T = spec.grid.periods
    tardy = 0.0
    for job in spec.jobs:
        eff = schedule.effective(job.id, a_o)
        late = np.arange(1, T + 1) - job.deadline
        tardy += job.weight * float(np.sum(np.where(late > 0, late, 0) * eff)) * dt
    unfinished = sum(job.weight * schedule.unfinished[job.id] for job in spec.jobs) * dt
    dvfs = float(np.sum(np.abs(np.asarray(schedule.dvfs) - a_o))) * dt
    return w.c_tardy * tardy + w.c_unfinished * unfinished + w.c_dvfs * dvfs


def scenario_profit(schedule: Schedule, scenario: Scenario, spec: InstanceSpec) -> ScenarioProfit:
    """Price one schedule under one scenario, independently of any solver output."""
    _check_lengths(schedule, scenario, spec)
    dt = spec.grid.dt
    pr = spec.prices
    w = spec.weights
    res = np.asarray(schedule.reserve_offer)
    fu = np.asarray(schedule.frp_up_offer)
    fd = np.asarray(schedule.frp_down_offer)
    r_res = float(np.dot(pr.reserve, res)) * dt
    r_frp = float(np.dot(pr.frp_up, fu) + np.dot(pr.frp_down, fd)) * dt
    D = np.asarray(schedule.bess_charge) - np.asarray(schedule.bess_discharge) + compute_power(schedule, scenario, spec)
    withdrawal = (D - np.asarray(scenario.deploy_reserve) * res
                  + np.asarray(scenario.deploy_frp_up) * fu - np.asarray(scenario.deploy_frp_down) * fd)
    energy = float(np.dot(pr.energy, withdrawal)) * dt
    jc = job_cost(schedule, spec)
    b = spec.fleet
    thr = bess_throughput(schedule, scenario, dt)
    if b.energy_cap > 0:
        excess = max(0.0, thr / (2.0 * b.energy_cap) - b.cycle_budget)
        degr = b.degradation_cost * 2.0 * b.energy_cap * excess
    else:
        degr = 0.0
    profit = r_res + r_frp - energy - w.lambda_job * jc - w.lambda_deg * degr
    return ScenarioProfit(r_res, r_frp, energy, jc, degr, thr, profit)


def profit_breakdown(schedule: Schedule, spec: InstanceSpec, scenarios=None) -> ProfitBreakdown:
    scenarios = spec.scenarios if scenarios is None else scenarios
    parts = [scenario_profit(schedule, sc, spec) for sc in scenarios]
    profits = tuple(p.profit for p in parts)
    first = parts[0]
    return ProfitBreakdown(first.reserve_revenue, first.frp_revenue, tuple(p.energy_cost for p in parts),
                           first.job_cost, tuple(p.degradation_cost for p in parts), profits, min(profits))
