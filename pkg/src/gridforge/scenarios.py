"""Scenario synthesis, series ingestion, and the conservative fixed-load envelope."""
from __future__ import annotations

import csv
import io
import math
import os
from dataclasses import dataclass, replace

import numpy as np

from .model import DomainError, ParseError, Scenario, TimeGrid

# bump whenever the sampling recipe changes; written into run manifests
RNG_VERSION = "pcg64-seedseq-v1"
# mixed into the seed for the out-of-sample stream so it never overlaps the in-sample one
OOS_STREAM_TAG = 0x5EED_0005


@dataclass(frozen=True)
class GeneratorConfig:
    seed: int = 0
    scenario_count: int = 10
    base_load: tuple[float, ...] = ()
    load_noise_rel: float = 0.05
    deploy_mean_reserve: float = 0.3
    deploy_mean_frp_up: float = 0.3
    deploy_mean_frp_down: float = 0.3
    envelope_margin: float = 0.01
    concentration: float = 5.0
    rng_version: str = RNG_VERSION

    def __post_init__(self):
        object.__setattr__(self, "base_load", tuple(float(v) for v in self.base_load))

    def problems(self) -> list[str]:
        out = []
        if self.scenario_count < 1:
            out.append("scenario_count must be >= 1")
        if self.load_noise_rel < 0:
            out.append("load_noise_rel must be >= 0")
        for name in ("deploy_mean_reserve", "deploy_mean_frp_up", "deploy_mean_frp_down"):
            if not 0 <= getattr(self, name) <= 1:
                out.append(f"{name} must lie in [0, 1]")
        if self.envelope_margin < 0:
            out.append("envelope_margin must be >= 0")
        if not self.concentration > 0:
            out.append("concentration must be > 0")
        return out

    def to_dict(self) -> dict:
        return {k: (list(v) if isinstance(v, tuple) else v) for k, v in self.__dict__.items()}

    @classmethod
    def from_dict(cls, data: dict) -> "GeneratorConfig":
        return cls(**data)


def _deployments(rng: np.random.Generator, mean: float, k: float, size: int) -> np.ndarray:
    # Beta with the requested mean; degenerate means return constants
    if mean <= 0.0:
        return np.zeros(size)
    if mean >= 1.0:
        return np.ones(size)
    return np.clip(rng.beta(mean * k, (1.0 - mean) * k, size=size), 0.0, 1.0)


def _draw_one(cfg: GeneratorConfig, base: np.ndarray, seed_words) -> tuple[np.ndarray, ...]:
    rng = np.random.default_rng(np.random.SeedSequence(seed_words))
    T = base.size
    u = rng.uniform(-cfg.load_noise_rel, cfg.load_noise_rel, size=T)
    load = np.maximum(base * (1.0 + u), 0.0)
    k = cfg.concentration
    res = _deployments(rng, cfg.deploy_mean_reserve, k, T)
    up = _deployments(rng, cfg.deploy_mean_frp_up, k, T)
    dn = _deployments(rng, cfg.deploy_mean_frp_down, k, T)
    return load, res, up, dn


def _base(cfg: GeneratorConfig, grid: TimeGrid) -> np.ndarray:
    if len(cfg.base_load) != grid.periods:
        raise DomainError(f"base_load has length {len(cfg.base_load)}, expected {grid.periods}")
    return np.asarray(cfg.base_load, dtype=float)


def generate_scenarios(cfg: GeneratorConfig, grid: TimeGrid, dc_power_cap: float) -> list[Scenario]:
    """Draw ``cfg.scenario_count`` joint load/deployment scenarios and attach the shared envelope.

    Scenario ``s`` uses its own seed sequence built from ``(seed, s)``, so the
    draws do not depend on how many other scenarios are requested.
    """
    bad = cfg.problems()
    if bad:
        raise DomainError("; ".join(bad))
    base = _base(cfg, grid)
    seed = int(cfg.seed) & (2**64 - 1)
    raw = [_draw_one(cfg, base, [seed, s]) for s in range(cfg.scenario_count)]
    scenarios = [Scenario(load, load, res, up, dn) for load, res, up, dn in raw]
    return build_envelope(scenarios, cfg.envelope_margin, dc_power_cap)


def generate_oos_scenarios(cfg: GeneratorConfig, grid: TimeGrid, count: int, seed: int | None = None,
                           vary_load: bool = True) -> list[Scenario]:
    """Fresh scenarios from a stream disjoint from the in-sample one.

    Each scenario's envelope is its own realised load, since only the
    realisation matters when replaying a fixed schedule.
    """
    base = _base(cfg, grid)
    seed = int(cfg.seed if seed is None else seed) & (2**64 - 1)
    stream = seed ^ OOS_STREAM_TAG
    draw_cfg = cfg if vary_load else replace(cfg, load_noise_rel=0.0)
    out = []
    for s in range(count):
        load, res, up, dn = _draw_one(draw_cfg, base, [stream, s, 1])
        out.append(Scenario(load, load, res, up, dn))
    return out


def build_envelope(scenarios: list[Scenario], epsilon: float, dc_power_cap: float) -> list[Scenario]:
    """Overwrite every envelope with the pointwise max load plus ``epsilon * dc_power_cap``."""
    if not scenarios:
        raise DomainError("cannot build an envelope from an empty scenario list")
    T = scenarios[0].periods
    if any(s.periods != T for s in scenarios):
        raise DomainError("scenarios have inconsistent lengths")
    loads = np.array([s.fixed_load for s in scenarios])
    env = tuple(loads.max(axis=0) + epsilon * dc_power_cap)
    return [replace(s, fixed_envelope=env) for s in scenarios]


def ingest_series_csv(source, expected_len: int) -> list[float]:
    """Read a ``t,value`` CSV (1-based periods, any row order) into a list."""
    if isinstance(source, (str, os.PathLike)) and not (isinstance(source, str) and "\n" in source):
        with open(source, newline="") as fh:
            return ingest_series_csv(fh, expected_len)
    if isinstance(source, str):
        source = io.StringIO(source)
    rows = [r for r in csv.reader(source, skipinitialspace=True) if r and any(c.strip() for c in r)]
    if not rows or [c.strip() for c in rows[0]] != ["t", "value"]:
        raise ParseError("header must be t,value")
    values: dict[int, float] = {}
    for k, row in enumerate(rows[1:]):
        if len(row) != 2:
            raise ParseError(f"row {k}: expected 2 fields, got {len(row)}")
        try:
            t = float(row[0])
            if not t.is_integer():
                raise ValueError
            t = int(t)
        except ValueError:
            raise ParseError(f"row {k}: period {row[0]!r} is not an integer") from None
        try:
            val = float(row[1])
        except ValueError:
            raise ParseError(f"row {k}: non-numeric value {row[1]!r}") from None
        if not math.isfinite(val):
            raise ParseError(f"row {k}: non-finite value {row[1]!r}")
        if t in values:
            raise ParseError(f"row {k}: duplicate period t={t}")
        values[t] = val
    if len(values) != expected_len:
        raise ParseError(f"length mismatch: got {len(values)} periods, expected {expected_len}")
    missing = [t for t in range(1, expected_len + 1) if t not in values]
    if missing:
        raise ParseError(f"missing period t={missing[0]}")
    return [values[t] for t in range(1, expected_len + 1)]
