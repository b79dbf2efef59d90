"""Instance JSON documents, dotted overrides, and bundled demo instances."""
from __future__ import annotations

import copy
import hashlib
import json
import os
from dataclasses import asdict
from importlib import resources
from pathlib import Path

from .model import (BessSpec, CostWeights, DvfsConfig, InstanceSpec, InterconnectionLimits,
                    JobSpec, MarketPrices, ParseError, Scenario, TimeGrid, load_job_portfolio)
from .scenarios import GeneratorConfig, generate_scenarios

BUNDLED = ("demo_small", "demo_day")
# keys whose change invalidates synthesized scenarios
_REGENERATE_ON = ("generator", "grid", "dc_power_cap")


def bundled_path(name: str) -> Path:
    return Path(str(resources.files("gridforge") / "data" / f"{name}.json"))


def resolve_instance_path(ref: str | os.PathLike) -> Path:
    """A file path, or the name of a bundled instance."""
    p = Path(ref)
    if p.exists():
        return p
    if str(ref) in BUNDLED:
        return bundled_path(str(ref))
    raise FileNotFoundError(f"no instance file or bundled instance named {str(ref)!r}")


def read_instance_document(ref) -> tuple[dict, Path]:
    path = resolve_instance_path(ref)
    with open(path) as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ParseError(f"{path}: invalid JSON ({exc})") from None
    return doc, path


def load_instance(ref, overrides: dict | None = None) -> InstanceSpec:
    """Load an instance file (or bundled name) and apply dotted overrides."""
    doc, path = read_instance_document(ref)
    if overrides:
        doc = apply_overrides(doc, overrides)
    return instance_from_dict(doc, base_dir=path.parent)


def apply_overrides(doc: dict, overrides: dict) -> dict:
    """Return a copy of ``doc`` with ``{"bess.energy_cap": 36, ...}`` applied.

    Changing generator, grid or power-cap settings of an instance whose
    scenarios came from a generator drops the stored scenarios so they are
    drawn again.
    """
    out = copy.deepcopy(doc)
    for key, value in overrides.items():
        parts = key.split(".")
        node = out
        for part in parts[:-1]:
            if isinstance(node, list):
                node = node[int(part)]
            else:
                node = node.setdefault(part, {})
        last = parts[-1]
        if isinstance(node, list):
            node[int(last)] = value
        else:
            node[last] = value
        if parts[0] in _REGENERATE_ON and "generator" in out:
            out.pop("scenarios", None)
    return out


def parse_override(text: str) -> tuple[str, object]:
    """``key=value`` with the value read as JSON when possible."""
    if "=" not in text:
        raise ValueError(f"override {text!r} is not of the form key=value")
    key, raw = text.split("=", 1)
    key = key.strip()
    if not key:
        raise ValueError(f"override {text!r} has an empty key")
    try:
        value = json.loads(raw)
    except json.JSONDecodeError:
        value = raw
    return key, value


def instance_from_dict(doc: dict, base_dir: Path | None = None) -> InstanceSpec:
    try:
        grid = TimeGrid(**doc["grid"])
        limits = InterconnectionLimits(**doc["limits"])
        if "jobs_csv" in doc:
            src = Path(doc["jobs_csv"])
            if not src.is_absolute() and base_dir is not None:
                src = base_dir / src
            jobs = load_job_portfolio(src)
        else:
            jobs = load_job_portfolio(doc.get("jobs", []))
        dvfs = DvfsConfig(**doc.get("dvfs", {}))
        bess = BessSpec(**doc.get("bess", {}))
        prices = MarketPrices(**doc["prices"])
        weights = CostWeights(**doc.get("weights", {}))
        dc_cap = float(doc["dc_power_cap"])
        generator = GeneratorConfig.from_dict(doc["generator"]) if doc.get("generator") else None
    except (KeyError, TypeError) as exc:
        raise ParseError(f"instance document: missing or unexpected field ({exc})") from None
    if doc.get("scenarios"):
        scenarios = [Scenario(**s) for s in doc["scenarios"]]
    elif generator is not None:
        scenarios = generate_scenarios(generator, grid, dc_cap)
    else:
        raise ParseError("instance document needs either 'scenarios' or 'generator'")
    return InstanceSpec(grid=grid, limits=limits, jobs=tuple(jobs), dvfs=dvfs, bess=bess, prices=prices,
                        weights=weights, scenarios=tuple(scenarios), dc_power_cap=dc_cap,
                        bess_units=doc.get("bess_units", 1), name=doc.get("name", ""),
                        generator=generator, solver=dict(doc.get("solver", {})))


def instance_to_dict(spec: InstanceSpec, include_scenarios: bool = True) -> dict:
    doc = {
        "name": spec.name,
        "grid": asdict(spec.grid),
        "limits": asdict(spec.limits),
        "jobs": [asdict(j) for j in spec.jobs],
        "dvfs": {**asdict(spec.dvfs), "levels": list(spec.dvfs.levels), "bounds": list(spec.dvfs.bounds)},
        "bess": asdict(spec.bess),
        "bess_units": spec.bess_units,
        "prices": {k: list(v) for k, v in asdict(spec.prices).items()},
        "weights": asdict(spec.weights),
        "dc_power_cap": spec.dc_power_cap,
        "solver": dict(spec.solver),
    }
    if spec.generator is not None:
        doc["generator"] = spec.generator.to_dict()
    if include_scenarios or spec.generator is None:
        doc["scenarios"] = [{k: list(v) for k, v in asdict(s).items()} for s in spec.scenarios]
    return doc


def save_instance(spec: InstanceSpec, path, include_scenarios: bool = True) -> None:
    with open(path, "w") as fh:
        json.dump(instance_to_dict(spec, include_scenarios), fh, indent=1)
        fh.write("\n")


def instance_hash(spec: InstanceSpec) -> str:
    blob = json.dumps(instance_to_dict(spec), sort_keys=True).encode()
    return hashlib.sha256(blob).hexdigest()


def appendix_jobs() -> list[JobSpec]:
    """The nine aggregate job classes bundled with the package (340 MWh in total)."""
    return load_job_portfolio(Path(str(resources.files("gridforge") / "data" / "appendix_a_jobs.csv")))
