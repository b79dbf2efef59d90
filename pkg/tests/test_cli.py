import csv
import json

import pytest

from gridforge.cli import main
from gridforge.instances import bundled_path

HIGH_LOAD = "generator.base_load=[80,84,88,90,86,82]"
HUGE_JOB = 'jobs=[{"id":"huge","release":1,"deadline":2,"work":500,"max_rate":5,"weight":1}]'


def read(path):
    return json.loads(path.read_text())


@pytest.fixture(scope="module")
def solved(tmp_path_factory):
    out = tmp_path_factory.mktemp("solve")
    code = main(["solve", "--instance", "demo_small", "--out", str(out)])
    return code, out


def test_solve_demo_small(solved):
    code, out = solved
    assert code == 0
    sched = read(out / "schedule.json")
    assert all(v == pytest.approx(0.0, abs=1e-7) for v in sched["unfinished"].values())
    report = read(out / "report.json")
    assert report["status"] == "optimal" and report["in_sample_violations"] == 0
    assert set(report["duals"]) == {"load_cap", "ramp_up", "ramp_down"}
    assert "summary.txt" in {p.name for p in out.iterdir()}


def test_manifest_reproduces_run(solved, tmp_path):
    _, out = solved
    man = read(out / "run_manifest.json")
    for key in ("engine_version", "rng_version", "instances", "overrides", "generator", "solver"):
        assert key in man
    again = tmp_path / "again"
    assert main(["solve", "--instance", man["instances"][0]["ref"], "--out", str(again)]) == 0
    assert read(again / "run_manifest.json")["instances"][0]["sha256"] == man["instances"][0]["sha256"]
    assert read(again / "report.json")["objective"] == read(out / "report.json")["objective"]


def test_impossible_work_is_soft(tmp_path):
    assert main(["solve", "--instance", "demo_small", "--out", str(tmp_path), "--set", HUGE_JOB]) == 0
    assert read(tmp_path / "schedule.json")["unfinished"]["huge"] > 0


def test_infeasible_exit_code_and_valid_json(tmp_path):
    assert main(["solve", "--instance", "demo_small", "--out", str(tmp_path), "--set", "limits.load_cap=20"]) == 2
    assert read(tmp_path / "schedule.json") is None
    assert read(tmp_path / "report.json")["status"] == "infeasible"
    assert read(tmp_path / "run_manifest.json")["status"] == "infeasible"


def test_usage_errors(tmp_path):
    assert main(["solve", "--out", str(tmp_path)]) == 1
    assert main(["solve", "--instance", "no_such_instance", "--out", str(tmp_path)]) == 1
    assert main(["solve", "--instance", "demo_small", "--out", str(tmp_path), "--set", "noequals"]) == 1
    assert main(["frobnicate"]) == 1
    assert main(["oos", "--instance", "demo_small", "--out", str(tmp_path), "--samples", "0"]) == 1


def test_limit_exit_code(tmp_path):
    code = main(["solve", "--instance", "demo_small", "--out", str(tmp_path), "--set", "solver.node_limit=1"])
    assert code in (0, 3)
    assert read(tmp_path / "report.json")["status"] in ("optimal", "node_limit")


def test_load_sweep_csv(tmp_path):
    code = main(["sweep", "--instance", "demo_small", "--out", str(tmp_path), "--axis", "load_cap",
                 "--grid", "90,95,100,105", "--set", HIGH_LOAD])
    assert code == 0
    rows = list(csv.DictReader((tmp_path / "sweep.csv").open()))
    assert len(rows) == 4
    fd = [float(r["fd_marginal"]) for r in rows]
    assert all(b <= a + 1e-6 for a, b in zip(fd, fd[1:]))
    assert fd[0] > 0


def test_ramp_sweep_nonbinding_and_delta_echo(tmp_path):
    code = main(["sweep", "--instance", "demo_small", "--out", str(tmp_path), "--axis", "ramp_cap",
                 "--grid", "60,70", "--delta", "2.5"])
    assert code == 0
    data = read(tmp_path / "sweep.json")
    assert data["delta"] == 2.5
    assert read(tmp_path / "run_manifest.json")["delta"] == 2.5
    assert all(abs(p["fd_marginal"]) <= 1e-9 for p in data["points"])


def test_sizing_two_cells(tmp_path):
    code = main(["sizing", "--instance", "demo_small", "--out", str(tmp_path), "--units", "0,1",
                 "--cycles", "1"])
    assert code == 0
    cells = read(tmp_path / "sizing.json")
    assert len(cells) == 2
    assert cells[0]["units"] == 0
    assert cells[0]["value"]["value_added_corrected"] == 0.0 and cells[0]["value"]["net_value"] == 0.0
    assert read(tmp_path / "run_manifest.json")["technologies"][0]["energy_mwh"] == 5.0


def test_oos_reuses_schedule(solved, tmp_path, caplog):
    _, out = solved
    before = (out / "schedule.json").read_text()
    with caplog.at_level("INFO", logger="gridforge"):
        code = main(["oos", "--instance", "demo_small", "--out", str(out), "--samples", "40", "--dump-traces"])
    assert code == 0
    assert any("reusing schedule" in r.message for r in caplog.records)
    assert (out / "schedule.json").read_text() == before
    rep = read(out / "oos_report.json")
    assert rep["status"] == "reused" and rep["report"]["sample_count"] == 40
    assert len(list((out / "traces").glob("scenario_*.csv"))) == 40
    # a fresh directory has nothing to reuse, so it solves
    code = main(["oos", "--instance", "demo_small", "--out", str(tmp_path), "--samples", "5"])
    assert code == 0 and read(tmp_path / "oos_report.json")["status"] == "optimal"


def test_gen_scenarios(tmp_path):
    gen = tmp_path / "gen.json"
    gen.write_text(json.dumps({"periods": 4, "dc_power_cap": 100, "seed": 3, "scenario_count": 2,
                               "base_load": [50, 52, 54, 51]}))
    assert main(["gen-scenarios", "--generator", str(gen), "--out", str(tmp_path / "a")]) == 0
    assert main(["gen-scenarios", "--generator", str(gen), "--out", str(tmp_path / "b")]) == 0
    a = (tmp_path / "a" / "scenarios.json").read_text()
    assert a == (tmp_path / "b" / "scenarios.json").read_text()
    assert len(json.loads(a)["scenarios"]) == 2
    assert main(["gen-scenarios", "--instance", "demo_small", "--seed", "5", "--out", str(tmp_path / "c")]) == 0


def test_export_lp(tmp_path):
    assert main(["export-lp", "--instance", str(bundled_path("demo_small")), "--out", str(tmp_path)]) == 0
    text = (tmp_path / "model.lp").read_text()
    heads = [line for line in text.splitlines() if line[:1].isalpha()]
    assert heads == ["Maximize", "Subject To", "Bounds", "Binaries", "End"]
    assert read(tmp_path / "run_manifest.json")["binaries"] == 6 * 3 + 2 * 6
