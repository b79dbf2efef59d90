import math

import numpy as np
import pytest

from gridforge.analytics import (MEGAPACK_2XL, MEGAPACK_3, SensitivityReport, aggregate_duals, crf,
                                 fd_sensitivity, net_value, sizing_study, soc_depletion_correction,
                                 throughput_efc, value_added, value_report)
from gridforge.engine import solve_instance
from gridforge.model import CostWeights, DomainError, JobSpec
from gridforge.solver import LpSolution
from synth import flat_instance, idle_schedule, random_instance


def test_crf_examples():
    assert crf(1.0, 1) == 2.0
    assert crf(0.07, 20) == pytest.approx(0.094393, abs=1e-5)
    assert crf(0.0, 10) == pytest.approx(0.1)
    with pytest.raises(DomainError):
        crf(-0.1, 10)
    with pytest.raises(DomainError):
        crf(0.05, 0)


def test_depletion_examples():
    assert soc_depletion_correction(0.6, 0.6, 1, 36, 0.9, 50) == 0.0
    assert soc_depletion_correction(0.6, 0.5, 1, 36, 0.9, 50) == pytest.approx(162.0)
    assert soc_depletion_correction(0.6, 0.7, 1, 36, 0.9, 50) == 0.0


def test_value_added_examples():
    zero = value_added([-10.0, -20.0], [-10.0, -20.0], 0.0, 0.0)
    assert (zero.value_added_raw, zero.non_as_raw, zero.value_added_corrected) == (0.0, 0.0, 0.0)
    one = value_added([-223530.0], [-228418.0], 0.0, 0.0)
    assert one.value_added_raw == pytest.approx(4888.0)
    split = value_added([7756.0], [0.0], 3230.0, 0.0)
    assert split.non_as_raw == pytest.approx(4526.0)
    with pytest.raises(DomainError):
        value_added([1.0, 2.0], [1.0], 0.0, 0.0)


def test_value_identity():
    rep = value_added([10.0, 30.0], [2.0, 4.0], [5.0, 7.0], 3.5)
    assert rep.value_added_corrected == rep.value_added_raw - rep.soc_depletion
    assert rep.value_added_corrected == pytest.approx(rep.as_revenue + rep.non_as_corrected, abs=1e-12)


def test_net_value_examples():
    assert net_value(123.0, 0, 1e6, 0.07, 20) == 123.0
    assert net_value(7756.0, 20, 1.0e6, 0.07, 20) == pytest.approx(2584.0, abs=15.0)
    assert net_value(0.0, 1, 365.0, 0.0, 1) == pytest.approx(-1.0)
    rep = value_report([7756.0], [0.0], 0.0, 0.0, units=20, unit_cost=1.0e6, r=0.07, years=20)
    assert rep.net_value == pytest.approx(net_value(7756.0, 20, 1.0e6, 0.07, 20))


def test_throughput_examples():
    spec = flat_instance(2, bess_units=1)
    cycle = idle_schedule(spec, bess_charge=(36.0, 0.0), bess_discharge=(0.0, 36.0))
    assert throughput_efc(cycle, spec.scenarios[0], 36.0) == (72.0, 1.0)
    assert throughput_efc(idle_schedule(spec), spec.scenarios[0], 36.0) == (0.0, 0.0)
    one = flat_instance(1, bess_units=1, deploy=(0.5, 0.0, 0.0))
    thr, efc = throughput_efc(idle_schedule(one, reserve_offer=(12.0,)), one.scenarios[0], 36.0)
    assert thr == pytest.approx(6.0) and efc == pytest.approx(1 / 12)


def test_aggregate_duals_examples():
    assert aggregate_duals({f"load_cap[1,{t}]": 0.0 for t in range(1, 25)}, "load_cap") == 0.0
    duals = {f"load_cap[1,{t}]": 0.0 for t in range(1, 25)}
    duals["load_cap[1,7]"] = 49.0
    assert aggregate_duals(duals, "load_cap") == 49.0
    ramps = {"ramp_up[1,2]": 47.0, "ramp_down[1,9]": 1.0, "load_cap[1,3]": 5.0}
    assert aggregate_duals(ramps, "ramp_cap") == 48.0
    with pytest.raises(DomainError):
        aggregate_duals({"thr[1]": 1.0}, "load_cap")
    with pytest.raises(DomainError):
        aggregate_duals(ramps, "voltage")


def binding_single_period():
    # unfinished work costs twice the energy price, so each MW of cap nets exactly one energy price
    job = JobSpec("j", 1, 1, 10.0, 10.0, 1.0)
    return flat_instance(1, load=50.0, energy_price=10.0, load_cap=54.0, jobs=(job,),
                         weights=CostWeights(c_unfinished=20.0))


def test_fd_constructed_binding_instance():
    rep = fd_sensitivity(binding_single_period(), "load_cap", [54.0], delta=1.0)
    pt = rep.points[0]
    assert pt.fd_marginal == pytest.approx(10.0, abs=1e-9)
    assert pt.dual_agg == pytest.approx(10.0, abs=1e-9)


def test_fd_nonbinding_is_zero():
    spec = binding_single_period()
    rep = fd_sensitivity(spec, "load_cap", [200.0, 300.0], delta=1.0)
    assert rep.fd_marginal == pytest.approx([0.0, 0.0], abs=1e-9)
    assert rep.aggregated_dual == pytest.approx([0.0, 0.0], abs=1e-9)
    ramp = fd_sensitivity(flat_instance(3), "ramp_cap", [10.0, 20.0], delta=0.5)
    assert ramp.fd_marginal == pytest.approx([0.0, 0.0], abs=1e-9)
    assert ramp.to_dict()["delta"] == 0.5


def test_fd_records_failures():
    rep = fd_sensitivity(binding_single_period(), "load_cap", [10.0, 54.0], delta=1.0)
    assert math.isnan(rep.points[0].fd_marginal)
    assert rep.points[0].statuses == ["infeasible"]
    assert rep.points[1].fd_marginal == pytest.approx(10.0)


def test_fd_input_errors():
    spec = binding_single_period()
    with pytest.raises(DomainError):
        fd_sensitivity(spec, "load_cap", [2.0, 1.0])
    with pytest.raises(DomainError):
        fd_sensitivity(spec, "load_cap", [1.0], delta=0.0)


def test_sensitivity_csv_layout():
    rep = fd_sensitivity([binding_single_period()] * 2, "load_cap", [54.0, 55.0], delta=1.0)
    lines = rep.to_csv().strip().splitlines()
    assert lines[0] == "axis_value,obj_mean,obj_std,fd_marginal,dual_agg"
    assert len(lines) == 3
    assert isinstance(rep, SensitivityReport) and rep.points[0].obj_std == 0.0


def test_binding_cap_prices_only_its_period():
    # the job can only run in period 2, where the cap leaves room for half of it
    job = JobSpec("j", 2, 2, 20.0, 20.0, 1.0)
    spec = flat_instance(2, load=50.0, load_cap=60.0, jobs=(job,))
    rep = solve_instance(spec, with_duals=True)
    assert isinstance(rep.duals, LpSolution)
    duals = rep.named_duals("load_cap")
    assert duals["load_cap[1,1]"] == pytest.approx(0.0, abs=1e-9)
    assert duals["load_cap[1,2]"] == pytest.approx(2000.0 - 10.0, abs=1e-6)


def test_efc_within_budget_without_slack():
    for seed in range(5):
        spec = random_instance(np.random.default_rng(400 + seed), T=4, mode="continuous")
        rep = solve_instance(spec)
        b = spec.fleet
        for sc in spec.scenarios:
            thr, efc = throughput_efc(rep.schedule, sc, b.energy_cap)
            ls = rep.primal[rep.ir.col(f"ls[{spec.scenarios.index(sc) + 1}]")]
            if ls <= 1e-9:
                assert efc <= b.cycle_budget + 1e-7


def test_technology_presets():
    assert (MEGAPACK_3.power_mw, MEGAPACK_3.energy_mwh, MEGAPACK_3.unit_cost) == (1.25, 5.0, 1.0e6)
    assert (MEGAPACK_2XL.power_mw, MEGAPACK_2XL.energy_mwh, MEGAPACK_2XL.unit_cost) == (1.9, 3.9, 1.2e6)


def test_sizing_baseline_cell():
    spec = random_instance(np.random.default_rng(9), T=3, mode="continuous")
    cells = sizing_study(spec, [MEGAPACK_3], [0, 1], [1.0], [0.07])
    assert len(cells) == 2
    zero = cells[0].report
    assert zero.value_added_corrected == 0.0 and zero.net_value == 0.0
    assert cells[1].report.units == 1
