import dataclasses
import io

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from gridforge.instances import appendix_jobs, load_instance
from gridforge.model import (BessSpec, DomainError, DvfsConfig, JobSpec, ParseError, Scenario,
                             conservative_fixed_load, dump_job_portfolio, flexible_headroom,
                             load_job_portfolio, total_work, validate_instance)


@pytest.fixture(scope="module")
def day():
    return load_instance("demo_day")


def one_period(envelope, forecast):
    return Scenario((forecast,), (envelope,), (0.0,), (0.0,), (0.0,))


CONT = DvfsConfig("continuous", (), (0.8, 1.2), 1.0, 0.35)


def test_bundled_day_is_valid(day):
    assert day.T == 24
    res = validate_instance(day)
    assert res.ok, res.messages()


def test_deadline_before_release_names_job(day):
    jobs = list(day.jobs)
    jobs[2] = dataclasses.replace(jobs[2], release=10, deadline=4)
    res = validate_instance(dataclasses.replace(day, jobs=tuple(jobs)))
    assert not res.ok
    assert any("jobs[2]" in m and jobs[2].id in m for m in res.messages())


def test_deployment_outside_unit_interval(day):
    sc = day.scenarios[0]
    dep = list(sc.deploy_reserve)
    dep[2] = 1.2
    bad = dataclasses.replace(sc, deploy_reserve=tuple(dep))
    res = validate_instance(dataclasses.replace(day, scenarios=(bad,) + day.scenarios[1:]))
    msgs = res.messages()
    assert any("deploy_reserve[t=3]" in m and "deployment factor outside [0,1]" in m for m in msgs)


def test_envelope_below_load_rejected(day):
    sc = day.scenarios[0]
    env = list(sc.fixed_envelope)
    env[0] = sc.fixed_load[0] - 1.0
    bad = dataclasses.replace(sc, fixed_envelope=tuple(env))
    res = validate_instance(dataclasses.replace(day, scenarios=(bad,)))
    assert any("fixed_envelope[t=1]" in m for m in res.messages())


def test_conservative_fixed_load_examples():
    sc = one_period(85.0, 80.0)
    assert conservative_fixed_load(sc, 1, 1.2, CONT) == pytest.approx(90.6, abs=1e-12)
    assert conservative_fixed_load(sc, 1, 1.0, CONT) == 85.0
    flat = DvfsConfig("continuous", (), (0.8, 1.2), 1.0, 0.0)
    for a in (0.8, 0.95, 1.2):
        assert conservative_fixed_load(sc, 1, a, flat) == 85.0


def test_conservative_fixed_load_domain_errors():
    sc = one_period(85.0, 80.0)
    with pytest.raises(DomainError):
        conservative_fixed_load(sc, 2, 1.0, CONT)
    with pytest.raises(DomainError):
        conservative_fixed_load(sc, 1, 1.5, CONT)
    disc = DvfsConfig("discrete", (0.8, 1.0), (0.8, 1.0), 1.0, 0.35)
    with pytest.raises(DomainError):
        conservative_fixed_load(sc, 1, 0.9, disc)


def test_headroom_examples(day):
    spec = dataclasses.replace(day, dvfs=CONT, dc_power_cap=100.0)
    assert flexible_headroom(spec, one_period(85.0, 80.0), 1, 1.0) == pytest.approx(15.0)
    assert flexible_headroom(spec, one_period(85.0, 80.0), 1, 1.2) == pytest.approx(9.4)
    assert flexible_headroom(spec, one_period(104.0, 100.0), 1, 1.0) == pytest.approx(-4.0)


@settings(max_examples=60, deadline=None)
@given(env=st.floats(10, 150), frac=st.floats(0.1, 1.0), phi=st.floats(0.0, 1.0),
       a=st.floats(0.8, 1.19), ref=st.sampled_from([0.9, 1.0, 1.1]))
def test_fixed_load_is_affine_in_dvfs(env, frac, phi, a, ref):
    forecast = env * frac
    dvfs = DvfsConfig("continuous", (), (0.8, 1.2), ref, phi)
    sc = one_period(env, forecast)
    h = 0.01
    fd = (conservative_fixed_load(sc, 1, a + h, dvfs) - conservative_fixed_load(sc, 1, a, dvfs)) / h
    slope = phi * forecast / ref
    assert fd == pytest.approx(slope, rel=1e-9, abs=1e-9)


@settings(max_examples=60, deadline=None)
@given(env=st.floats(10, 150), frac=st.floats(0.01, 1.0), phi=st.floats(0.01, 1.0),
       a1=st.floats(0.8, 1.2), a2=st.floats(0.8, 1.2))
def test_headroom_non_increasing(day, env, frac, phi, a1, a2):
    dvfs = DvfsConfig("continuous", (), (0.8, 1.2), 1.0, phi)
    spec = dataclasses.replace(day, dvfs=dvfs)
    sc = one_period(env, env * frac)
    lo, hi = sorted((a1, a2))
    assert flexible_headroom(spec, sc, 1, hi) <= flexible_headroom(spec, sc, 1, lo) + 1e-12


def test_appendix_portfolio_total():
    jobs = appendix_jobs()
    assert len(jobs) == 9
    assert total_work(jobs) == 340.0


def test_portfolio_row_and_empty():
    [job] = load_job_portfolio(["ml_training_large, 6, 20, 70, 9, 2.5"])
    assert job == JobSpec("ml_training_large", 6, 20, 70.0, 9.0, 2.5)
    assert load_job_portfolio([]) == []
    assert total_work([]) == 0


def test_portfolio_parse_errors_name_row():
    text = "id,release,deadline,work,max_rate,weight\na,1,2,3,4,5\nb,1,x,3,4,5\n"
    with pytest.raises(ParseError, match="row 1"):
        load_job_portfolio(io.StringIO(text))
    with pytest.raises(ParseError, match="header"):
        load_job_portfolio("id,start,deadline,work,max_rate,weight\na,1,2,3,4,5\n")
    with pytest.raises(ParseError, match="row 0"):
        load_job_portfolio(["a,1,2,3"])


job_strategy = st.builds(
    lambda i, r, span, w, m, wt: JobSpec(i, r, r + span, w, m, wt),
    st.text(alphabet="abcdefghij_-0123456789", min_size=1, max_size=12),
    st.integers(1, 24), st.integers(0, 24),
    st.floats(0, 500, allow_nan=False), st.floats(0.001, 50), st.floats(0, 10))


@settings(max_examples=80, deadline=None)
@given(jobs=st.lists(job_strategy, max_size=8))
def test_portfolio_round_trip(jobs):
    assert load_job_portfolio(dump_job_portfolio(jobs)) == jobs


def test_fleet_scales_energy_and_power():
    b = BessSpec(5.0, 1.25, 1.25, 0.95, 0.95, 0.1, 0.9)
    f = b.fleet(20)
    assert (f.energy_cap, f.charge_cap, f.discharge_cap) == (100.0, 25.0, 25.0)
    assert f.soc_min == b.soc_min and f.eta_charge == b.eta_charge
    z = b.fleet(0)
    assert np.allclose([z.energy_cap, z.charge_cap, z.discharge_cap], 0)
