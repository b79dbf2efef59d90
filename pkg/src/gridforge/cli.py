"""Command-line entry point: ``gridforge <command> --instance ... --out ...``.

Exit codes: 0 success, 1 usage/input/internal error, 2 infeasible instance,
3 solver limit reached before proving optimality.
"""
from __future__ import annotations

import argparse
import json
import logging
import math
import os
import platform
import sys
import time
from pathlib import Path

import numpy as np
import scipy

from . import __version__
from .analytics import (AXES, MEGAPACK_2XL, MEGAPACK_3, Technology, fd_sensitivity, sizing_study,
                        sizing_table, to_json)
from .engine import solve_instance
from .evaluation import oos_evaluate
from .formulation import Schedule, build_model
from .instances import instance_hash, load_instance, parse_override
from .model import ParseError, TimeGrid, validate_instance
from .scenarios import RNG_VERSION, GeneratorConfig, generate_scenarios
from .solver import InternalConsistencyError, SolverOptions

log = logging.getLogger("gridforge")

EXIT_OK, EXIT_ERROR, EXIT_INFEASIBLE, EXIT_LIMIT = 0, 1, 2, 3
TECHNOLOGIES = {t.name: t for t in (MEGAPACK_3, MEGAPACK_2XL)}


class UsageError(Exception):
    pass


def _status_exit(status: str) -> int:
    if status == "optimal":
        return EXIT_OK
    if status == "infeasible":
        return EXIT_INFEASIBLE
    if status in ("gap_limit", "node_limit"):
        return EXIT_LIMIT
    return EXIT_ERROR


def _floats(text: str) -> list[float]:
    try:
        return [float(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise UsageError(f"expected a comma-separated list of numbers, got {text!r}") from None


def _parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--instance", action="append", default=[],
                        help="instance JSON path or bundled name (demo_small, demo_day); repeat for day batches")
    common.add_argument("--out", default="gridforge_out", help="output directory")
    common.add_argument("--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE",
                        help="dotted override, e.g. bess.energy_cap=36 or solver.gap_tol=1e-4")
    common.add_argument("--seed", type=int, help="override generator.seed (scenarios are redrawn)")
    common.add_argument("--jobs", type=int, default=1, help="worker processes for independent solves")

    p = argparse.ArgumentParser(prog="gridforge", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"gridforge {__version__}")
    sub = p.add_subparsers(dest="command", required=True)
    sub.add_parser("solve", parents=[common], help="solve one instance")
    sw = sub.add_parser("sweep", parents=[common], help="finite-difference sweep of a limit")
    sw.add_argument("--axis", choices=AXES, default="load_cap")
    sw.add_argument("--grid", required=True, help="comma-separated limit values, strictly increasing")
    sw.add_argument("--delta", type=float, default=1.0, help="finite-difference step")
    sz = sub.add_parser("sizing", parents=[common], help="battery sizing study")
    sz.add_argument("--tech", action="append", default=[],
                    help="megapack_3, megapack_2xl, or name:power_mw:energy_mwh:unit_cost:round_trip_eff")
    sz.add_argument("--units", default="0,1,2,4", help="comma-separated fleet sizes")
    sz.add_argument("--cycles", default="1", help="comma-separated daily cycle limits")
    sz.add_argument("--rates", default="0.07", help="comma-separated discount rates")
    sz.add_argument("--years", type=int, default=20)
    oo = sub.add_parser("oos", parents=[common], help="out-of-sample replay of a day-ahead schedule")
    oo.add_argument("--samples", type=int, default=500)
    oo.add_argument("--schedule", help="schedule.json to evaluate instead of solving")
    oo.add_argument("--dump-traces", action="store_true", help="write one trace CSV per fresh scenario")
    gs = sub.add_parser("gen-scenarios", parents=[common], help="draw scenarios from a generator config")
    gs.add_argument("--generator", help="JSON with generator fields plus periods, dt, dc_power_cap")
    sub.add_parser("export-lp", parents=[common], help="write the model in LP text format")
    return p


def _overrides(args) -> dict:
    out = {}
    for text in args.overrides:
        try:
            key, value = parse_override(text)
        except ValueError as exc:
            raise UsageError(str(exc)) from None
        out[key] = value
    if args.seed is not None:
        out["generator.seed"] = args.seed
    return out


def _load(ref, args):
    spec = load_instance(ref, _overrides(args))
    res = validate_instance(spec)
    if not res.ok:
        raise UsageError("invalid instance:\n  " + "\n  ".join(res.messages()))
    return spec


def _single(args):
    if len(args.instance) != 1:
        raise UsageError(f"{args.command} needs exactly one --instance")
    return _load(args.instance[0], args)


def _options(spec) -> SolverOptions:
    try:
        return SolverOptions.from_config(spec.solver)
    except (KeyError, ValueError) as exc:
        raise UsageError(f"solver settings: {exc}") from None


def _write_json(path: Path, data) -> None:
    with open(path, "w") as fh:
        json.dump(data, fh, indent=1, default=_json_default)
        fh.write("\n")


def _json_default(o):
    if isinstance(o, (np.floating, np.integer)):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    raise TypeError(f"not JSON serialisable: {type(o).__name__}")


def _manifest(out: Path, args, specs, extra=None) -> None:
    data = {
        "command": args.command,
        "argv": sys.argv[1:],
        "engine_version": __version__,
        "rng_version": RNG_VERSION,
        "instances": [{"ref": ref, "name": s.name, "sha256": instance_hash(s)}
                      for ref, s in zip(args.instance or ["<inline>"], specs)],
        "overrides": _overrides(args),
        "seed": args.seed,
        "generator": [None if s.generator is None else s.generator.to_dict() for s in specs],
        "solver": [_options(s).__dict__ for s in specs],
        "python": platform.python_version(),
        "numpy": np.__version__,
        "scipy": scipy.__version__,
        "created_unix": time.time(),
    }
    data.update(extra or {})
    _write_json(out / "run_manifest.json", data)


# -- commands --------------------------------------------------------------

def cmd_solve(args) -> int:
    spec = _single(args)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    rep = solve_instance(spec, _options(spec), with_duals=True)
    _write_json(out / "schedule.json", None if rep.schedule is None else rep.schedule.to_dict())
    _write_json(out / "report.json", rep.to_dict())
    (out / "summary.txt").write_text(_summary(spec, rep))
    _manifest(out, args, [spec], {"status": rep.status})
    print(_summary(spec, rep), end="")
    return _status_exit(rep.status)


def _summary(spec, rep) -> str:
    lines = [f"instance      {spec.name or '-'}", f"status        {rep.status}"]
    if rep.schedule is None:
        return "\n".join(lines) + "\n"
    br = rep.breakdown
    unfinished = sum(rep.schedule.unfinished.values())
    lines += [
        f"worst case    {rep.objective:.2f}",
        f"bound / gap   {rep.bound:.2f} / {rep.gap:.2e}",
        f"nodes         {rep.nodes}  ({rep.elapsed_s:.1f} s, {rep.backend})",
        f"reserve rev   {br.reserve_revenue:.2f}",
        f"FRP rev       {br.frp_revenue:.2f}",
        f"job cost      {br.job_cost:.2f}",
        f"energy cost   {min(br.energy_cost_s):.2f} .. {max(br.energy_cost_s):.2f}",
        f"unfinished    {unfinished:.3f} MWh",
        f"replay check  {rep.in_sample_violations} in-sample violations",
    ]
    if rep.duals is not None:
        note = "locally valid only (degenerate basis)" if rep.degenerate else "non-degenerate basis"
        lines.append(f"duals         {note}")
    return "\n".join(lines) + "\n"


def cmd_sweep(args) -> int:
    if not args.instance:
        raise UsageError("sweep needs at least one --instance")
    specs = [_load(ref, args) for ref in args.instance]
    grid = _floats(args.grid)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    rep = fd_sensitivity(specs, args.axis, grid, args.delta, _options(specs[0]), jobs=args.jobs)
    (out / "sweep.csv").write_text(rep.to_csv())
    _write_json(out / "sweep.json", rep.to_dict())
    (out / "summary.txt").write_text(rep.to_text())
    _manifest(out, args, specs, {"axis": args.axis, "grid": grid, "delta": args.delta})
    print(rep.to_text(), end="")
    failed = any(not math.isfinite(o) for p in rep.points for o in p.objectives + p.objectives_step)
    return EXIT_LIMIT if failed else EXIT_OK


def _technology(text: str) -> Technology:
    if text in TECHNOLOGIES:
        return TECHNOLOGIES[text]
    parts = text.split(":")
    if len(parts) != 5:
        raise UsageError(f"unknown technology {text!r}")
    try:
        return Technology(parts[0], *(float(x) for x in parts[1:]))
    except ValueError:
        raise UsageError(f"bad technology spec {text!r}") from None


def cmd_sizing(args) -> int:
    if not args.instance:
        raise UsageError("sizing needs at least one --instance")
    specs = [_load(ref, args) for ref in args.instance]
    techs = [_technology(t) for t in (args.tech or ["megapack_3"])]
    units = [int(u) for u in _floats(args.units)]
    if any(u < 0 for u in units):
        raise UsageError("fleet sizes must be >= 0")
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    cells = sizing_study(specs, techs, units, _floats(args.cycles), _floats(args.rates), args.years,
                         _options(specs[0]), jobs=args.jobs)
    (out / "sizing.json").write_text(to_json(cells) + "\n")
    table = sizing_table(cells)
    (out / "summary.txt").write_text(table)
    _manifest(out, args, specs, {"technologies": [t.__dict__ for t in techs]})
    print(table, end="")
    return EXIT_OK if all(c.report is not None for c in cells) else EXIT_LIMIT


def cmd_oos(args) -> int:
    if args.samples < 1:
        raise UsageError("--samples must be >= 1")
    spec = _single(args)
    if spec.generator is None:
        raise UsageError("oos needs an instance with a generator config")
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    schedule = None
    sched_path = Path(args.schedule) if args.schedule else out / "schedule.json"
    if args.schedule or _same_instance(out, spec):
        if sched_path.exists():
            data = json.loads(sched_path.read_text())
            if data is not None:
                schedule = Schedule.from_dict(data)
                log.info("reusing schedule from %s", sched_path)
        elif args.schedule:
            raise UsageError(f"schedule file {sched_path} not found")
    status = "reused"
    if schedule is None:
        rep = solve_instance(spec, _options(spec))
        status = rep.status
        if rep.schedule is None:
            _write_json(out / "oos_report.json", {"status": rep.status, "report": None})
            _manifest(out, args, [spec], {"status": rep.status})
            return _status_exit(rep.status)
        _write_json(out / "schedule.json", rep.schedule.to_dict())
    seed = spec.generator.seed if args.seed is None else args.seed
    report, traces = oos_evaluate(schedule if schedule is not None else rep.schedule, spec, spec.generator,
                                  args.samples, seed=seed, return_traces=True)
    _write_json(out / "oos_report.json", {"status": status, "report": report.to_dict()})
    if args.dump_traces:
        tdir = out / "traces"
        tdir.mkdir(exist_ok=True)
        for k, tr in enumerate(traces, start=1):
            (tdir / f"scenario_{k:04d}.csv").write_text(tr.to_csv())
    lines = [f"{k:28s} {v:.6g}" for k, v in report.to_dict().items()]
    (out / "summary.txt").write_text("\n".join(lines) + "\n")
    _manifest(out, args, [spec], {"samples": args.samples, "oos_seed": seed})
    print("\n".join(lines))
    return EXIT_OK


def _same_instance(out: Path, spec) -> bool:
    try:
        man = json.loads((out / "run_manifest.json").read_text())
        return man["instances"][0]["sha256"] == instance_hash(spec)
    except (OSError, KeyError, IndexError, ValueError):
        return False


def cmd_gen_scenarios(args) -> int:
    out = Path(args.out)
    if args.generator:
        with open(args.generator) as fh:
            raw = json.load(fh)
        try:
            grid = TimeGrid(int(raw.pop("periods")), float(raw.pop("dt", 1.0)))
            cap = float(raw.pop("dc_power_cap"))
        except KeyError as exc:
            raise UsageError(f"generator file lacks {exc}") from None
        if args.seed is not None:
            raw["seed"] = args.seed
        cfg = GeneratorConfig(**raw)
        specs = []
    else:
        spec = _single(args)
        if spec.generator is None:
            raise UsageError("instance has no generator config; pass --generator")
        grid, cap, cfg = spec.grid, spec.dc_power_cap, spec.generator
        specs = [spec]
    scenarios = generate_scenarios(cfg, grid, cap)
    out.mkdir(parents=True, exist_ok=True)
    _write_json(out / "scenarios.json", {"generator": cfg.to_dict(),
                                         "scenarios": [{k: list(v) for k, v in s.__dict__.items()}
                                                       for s in scenarios]})
    _manifest(out, args, specs, {"generator_used": cfg.to_dict()})
    print(f"wrote {len(scenarios)} scenarios to {out / 'scenarios.json'}")
    return EXIT_OK


def cmd_export_lp(args) -> int:
    spec = _single(args)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    ir = build_model(spec)
    ir.write_lp(out / "model.lp")
    _manifest(out, args, [spec], {"variables": ir.n_vars, "constraints": ir.n_rows,
                                  "binaries": int(ir.integer_columns().size)})
    print(f"wrote {out / 'model.lp'} ({ir.n_vars} variables, {ir.n_rows} rows)")
    return EXIT_OK


COMMANDS = {"solve": cmd_solve, "sweep": cmd_sweep, "sizing": cmd_sizing, "oos": cmd_oos,
            "gen-scenarios": cmd_gen_scenarios, "export-lp": cmd_export_lp}


def main(argv=None) -> int:
    level = os.environ.get("GRIDFORGE_LOG", "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING),
                        format="%(levelname)s %(name)s: %(message)s")
    parser = _parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_ERROR if exc.code else EXIT_OK
    try:
        return COMMANDS[args.command](args)
    except (UsageError, ParseError, FileNotFoundError, OSError, ValueError,
            InternalConsistencyError) as exc:
        print(f"gridforge: error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
