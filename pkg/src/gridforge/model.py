"""Domain types, validation, and closed-form load quantities.

Units are fixed engine-wide: MW, MWh, hours, unitless fractions and one
unnamed currency. Periods are 1-based in every public interface (job
release/deadline, ``t`` arguments, variable names).
"""
from __future__ import annotations

import csv
import io
import logging
import math
import os
from dataclasses import dataclass, field, replace
from typing import Any, Iterable, Sequence

log = logging.getLogger(__name__)

DVFS_MODES = ("continuous", "discrete", "disabled")
JOB_COLUMNS = ("id", "release", "deadline", "work", "max_rate", "weight")


class DomainError(ValueError):
    """An argument outside the admissible domain of an operation."""


class ParseError(ValueError):
    """Malformed tabular input; the message names the offending row."""


def _series(values) -> tuple[float, ...]:
    return tuple(float(v) for v in values)


@dataclass(frozen=True)
class TimeGrid:
    periods: int
    dt: float = 1.0


@dataclass(frozen=True)
class InterconnectionLimits:
    load_cap: float
    ramp_cap: float
    # when set, the first period's ramp is measured against this net load
    initial_net_load: float | None = None


@dataclass(frozen=True)
class JobSpec:
    id: str
    release: int
    deadline: int
    work: float
    max_rate: float
    weight: float


@dataclass(frozen=True)
class DvfsConfig:
    mode: str = "disabled"
    levels: tuple[float, ...] = ()
    bounds: tuple[float, float] = (1.0, 1.0)
    reference: float = 1.0
    fixed_sensitive_fraction: float = 0.35

    def __post_init__(self):
        object.__setattr__(self, "levels", _series(self.levels))
        object.__setattr__(self, "bounds", (float(self.bounds[0]), float(self.bounds[1])))

    def admissible(self, a: float, tol: float = 1e-12) -> bool:
        if self.mode == "disabled":
            return abs(a - self.reference) <= tol
        if self.mode == "discrete":
            return any(abs(a - lv) <= tol for lv in self.levels)
        lo, hi = self.bounds
        return lo - tol <= a <= hi + tol


@dataclass(frozen=True)
class BessSpec:
    energy_cap: float = 0.0
    charge_cap: float = 0.0
    discharge_cap: float = 0.0
    eta_charge: float = 1.0
    eta_discharge: float = 1.0
    soc_min: float = 0.0
    soc_max: float = 1.0
    soc_init: float = 0.5
    soc_terminal: float | None = None
    cycle_budget: float = 1.0
    degradation_cost: float = 0.0

    def fleet(self, units: float) -> "BessSpec":
        """One equivalent battery for ``units`` identical units."""
        return replace(self, energy_cap=self.energy_cap * units, charge_cap=self.charge_cap * units,
                       discharge_cap=self.discharge_cap * units)


@dataclass(frozen=True)
class CostWeights:
    c_dvfs: float = 1000.0
    c_unfinished: float = 2000.0
    c_tardy: float = 100.0
    lambda_job: float = 1.0
    lambda_deg: float = 1.0


@dataclass(frozen=True)
class MarketPrices:
    energy: tuple[float, ...]
    reserve: tuple[float, ...]
    frp_up: tuple[float, ...]
    frp_down: tuple[float, ...]

    def __post_init__(self):
        for name in ("energy", "reserve", "frp_up", "frp_down"):
            object.__setattr__(self, name, _series(getattr(self, name)))


@dataclass(frozen=True)
class Scenario:
    fixed_load: tuple[float, ...]
    fixed_envelope: tuple[float, ...]
    deploy_reserve: tuple[float, ...]
    deploy_frp_up: tuple[float, ...]
    deploy_frp_down: tuple[float, ...]

    def __post_init__(self):
        for name in ("fixed_load", "fixed_envelope", "deploy_reserve", "deploy_frp_up", "deploy_frp_down"):
            object.__setattr__(self, name, _series(getattr(self, name)))

    @property
    def periods(self) -> int:
        return len(self.fixed_load)


@dataclass(frozen=True)
class InstanceSpec:
    grid: TimeGrid
    limits: InterconnectionLimits
    jobs: tuple[JobSpec, ...]
    dvfs: DvfsConfig
    bess: BessSpec
    prices: MarketPrices
    weights: CostWeights
    scenarios: tuple[Scenario, ...]
    dc_power_cap: float
    bess_units: float = 1
    name: str = ""
    generator: Any = None
    solver: dict = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "jobs", tuple(self.jobs))
        object.__setattr__(self, "scenarios", tuple(self.scenarios))

    @property
    def T(self) -> int:
        return self.grid.periods

    @property
    def fleet(self) -> BessSpec:
        return self.bess.fleet(self.bess_units)

    @property
    def has_bess(self) -> bool:
        f = self.fleet
        return f.energy_cap > 0 and (f.charge_cap > 0 or f.discharge_cap > 0)


# -- validation ------------------------------------------------------------

@dataclass(frozen=True)
class Violation:
    path: str
    message: str

    def __str__(self):
        return f"{self.path}: {self.message}"


@dataclass(frozen=True)
class ValidationResult:
    violations: tuple[Violation, ...] = ()

    @property
    def ok(self) -> bool:
        return not self.violations

    def __bool__(self):
        return self.ok

    def messages(self) -> list[str]:
        return [str(v) for v in self.violations]


def validate_instance(spec: InstanceSpec) -> ValidationResult:
    """Collect every violated invariant; never raises on bad data."""
    out: list[Violation] = []

    def bad(path, msg):
        out.append(Violation(path, msg))

    T = spec.grid.periods
    if not isinstance(T, int) or T < 1:
        bad("grid.periods", f"must be an integer >= 1, got {T!r}")
    if not spec.grid.dt > 0:
        bad("grid.dt", f"must be > 0, got {spec.grid.dt}")
    if not spec.limits.load_cap > 0:
        bad("limits.load_cap", "must be > 0")
    if not spec.limits.ramp_cap > 0:
        bad("limits.ramp_cap", "must be > 0")
    if not spec.dc_power_cap > 0:
        bad("dc_power_cap", "must be > 0")
    if spec.bess_units < 0:
        bad("bess_units", "must be >= 0")

    seen = set()
    for k, job in enumerate(spec.jobs):
        p = f"jobs[{k}]"
        if job.id in seen:
            bad(f"{p}.id", f"duplicate job id {job.id!r}")
        seen.add(job.id)
        if not 1 <= job.release:
            bad(f"{p}.release", f"job {job.id!r}: release {job.release} < 1")
        if job.deadline < job.release:
            bad(f"{p}.deadline", f"job {job.id!r}: deadline {job.deadline} < release {job.release}")
        if isinstance(T, int) and job.deadline > T:
            bad(f"{p}.deadline", f"job {job.id!r}: deadline {job.deadline} > T={T}")
        if job.work < 0:
            bad(f"{p}.work", f"job {job.id!r}: work must be >= 0")
        if not job.max_rate > 0:
            bad(f"{p}.max_rate", f"job {job.id!r}: max_rate must be > 0")
        if job.weight < 0:
            bad(f"{p}.weight", f"job {job.id!r}: weight must be >= 0")

    d = spec.dvfs
    if d.mode not in DVFS_MODES:
        bad("dvfs.mode", f"unknown mode {d.mode!r}")
    lo, hi = d.bounds
    if lo > hi:
        bad("dvfs.bounds", f"a_lo {lo} > a_hi {hi}")
    if not d.reference > 0:
        bad("dvfs.reference", "must be > 0")
    if not 0 < d.fixed_sensitive_fraction < 1:
        bad("dvfs.fixed_sensitive_fraction", "must lie in (0, 1)")
    if d.mode == "discrete":
        if not d.levels:
            bad("dvfs.levels", "discrete mode needs at least one level")
        if list(d.levels) != sorted(d.levels):
            bad("dvfs.levels", "levels must be sorted non-decreasing")
        if any(lv < lo or lv > hi for lv in d.levels):
            bad("dvfs.levels", f"levels must lie within bounds [{lo}, {hi}]")
        if d.levels and not any(abs(lv - d.reference) <= 1e-12 for lv in d.levels):
            bad("dvfs.reference", "reference must be one of the levels")
    elif d.mode == "continuous" and not lo <= d.reference <= hi:
        bad("dvfs.reference", f"reference must lie within [{lo}, {hi}]")

    b = spec.bess
    if not 0 <= b.soc_min <= b.soc_init <= b.soc_max <= 1:
        bad("bess", "need 0 <= soc_min <= soc_init <= soc_max <= 1")
    if b.soc_terminal is not None and not b.soc_min <= b.soc_terminal <= b.soc_max:
        bad("bess.soc_terminal", "must lie within [soc_min, soc_max]")
    for name in ("energy_cap", "charge_cap", "discharge_cap"):
        if getattr(b, name) < 0:
            bad(f"bess.{name}", "must be >= 0")
    for name in ("eta_charge", "eta_discharge"):
        if not 0 < getattr(b, name) <= 1:
            bad(f"bess.{name}", "must lie in (0, 1]")
    if b.cycle_budget < 0:
        bad("bess.cycle_budget", "must be >= 0")
    if b.degradation_cost < 0:
        bad("bess.degradation_cost", "must be >= 0")

    w = spec.weights
    for name in ("c_dvfs", "c_unfinished", "c_tardy", "lambda_job", "lambda_deg"):
        if getattr(w, name) < 0:
            bad(f"weights.{name}", "must be >= 0")

    pr = spec.prices
    for name in ("energy", "reserve", "frp_up", "frp_down"):
        series = getattr(pr, name)
        if len(series) != T:
            bad(f"prices.{name}", f"length {len(series)} != T={T}")
        if name != "energy" and any(v < 0 for v in series):
            bad(f"prices.{name}", "capacity prices must be >= 0")

    if not spec.scenarios:
        bad("scenarios", "at least one scenario is required")
    for s, sc in enumerate(spec.scenarios):
        p = f"scenarios[{s}]"
        for name in ("fixed_load", "fixed_envelope", "deploy_reserve", "deploy_frp_up", "deploy_frp_down"):
            series = getattr(sc, name)
            if len(series) != T:
                bad(f"{p}.{name}", f"length {len(series)} != T={T}")
            if name.startswith("deploy"):
                for t, v in enumerate(series, start=1):
                    if not 0 <= v <= 1:
                        bad(f"{p}.{name}[t={t}]", f"deployment factor outside [0,1]: {v}")
        for t, (env, load) in enumerate(zip(sc.fixed_envelope, sc.fixed_load), start=1):
            if env < load - 1e-9:
                bad(f"{p}.fixed_envelope[t={t}]", f"envelope {env} below fixed load {load}")
    return ValidationResult(tuple(out))


# -- closed-form load quantities ------------------------------------------------

def conservative_fixed_load(scenario: Scenario, t: int, a: float, dvfs: DvfsConfig) -> float:
    """Envelope at the reference setting plus the DVFS-sensitive share of the forecast."""
    if not 1 <= t <= scenario.periods:
        raise DomainError(f"period {t} outside 1..{scenario.periods}")
    if not dvfs.admissible(a):
        raise DomainError(f"DVFS factor {a} not admissible in {dvfs.mode} mode")
    phi = dvfs.fixed_sensitive_fraction
    a_o = dvfs.reference
    return scenario.fixed_envelope[t - 1] + phi * (a - a_o) / a_o * scenario.fixed_load[t - 1]


def flexible_headroom(spec: InstanceSpec, scenario: Scenario, t: int, a: float) -> float:
    """Hardware capacity left for schedulable jobs; negative values are returned as is."""
    return spec.dc_power_cap - conservative_fixed_load(scenario, t, a, spec.dvfs)


# -- job portfolios ------------------------------------------------------------

def _job_from_fields(fields: Sequence[Any], row: int) -> JobSpec:
    if len(fields) != len(JOB_COLUMNS):
        raise ParseError(f"row {row}: expected {len(JOB_COLUMNS)} fields, got {len(fields)}")
    try:
        jid = str(fields[0]).strip()
        if not jid:
            raise ValueError("empty id")
        return JobSpec(jid, _as_int(fields[1]), _as_int(fields[2]), float(fields[3]),
                       float(fields[4]), float(fields[5]))
    except (TypeError, ValueError) as exc:
        raise ParseError(f"row {row}: {exc}") from None


def _as_int(v) -> int:
    f = float(v)
    if not f.is_integer():
        raise ValueError(f"period index {v!r} is not an integer")
    return int(f)


def load_job_portfolio(source) -> list[JobSpec]:
    """Parse job records from a CSV path, a text stream, or an iterable of rows.

    CSV input needs the header ``id,release,deadline,work,max_rate,weight``.
    Row indices in errors are 0-based over data rows.
    """
    if isinstance(source, (str, os.PathLike)) and not (isinstance(source, str) and "\n" in source):
        with open(source, newline="") as fh:
            return load_job_portfolio(fh)
    if isinstance(source, str):
        source = io.StringIO(source)
    if hasattr(source, "read"):
        reader = csv.reader(source, skipinitialspace=True)
        rows = [r for r in reader if r and any(c.strip() for c in r)]
        if not rows:
            return []
        header = tuple(c.strip() for c in rows[0])
        if header != JOB_COLUMNS:
            raise ParseError(f"header must be {','.join(JOB_COLUMNS)}, got {','.join(header)}")
        records = rows[1:]
    else:
        records = list(source)
    jobs = []
    for k, rec in enumerate(records):
        if isinstance(rec, dict):
            rec = [rec.get(c) for c in JOB_COLUMNS]
        elif isinstance(rec, str):
            rec = next(csv.reader([rec], skipinitialspace=True))
        jobs.append(_job_from_fields(rec, k))
    log.debug("loaded %d jobs, total work %.3f MWh", len(jobs), total_work(jobs))
    return jobs


def dump_job_portfolio(jobs: Iterable[JobSpec], stream=None) -> str:
    """Write jobs as CSV; returns the text (and writes it to ``stream`` if given)."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(JOB_COLUMNS)
    for j in jobs:
        w.writerow([j.id, j.release, j.deadline, repr(j.work), repr(j.max_rate), repr(j.weight)])
    text = buf.getvalue()
    if stream is not None:
        stream.write(text)
    return text


def total_work(jobs: Iterable[JobSpec]) -> float:
    return math.fsum(j.work for j in jobs)
