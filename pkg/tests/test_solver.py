import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from gridforge.ir import ModelError, ModelIR
from gridforge.solver import (SolverOptions, complementary_slackness, dual_objective, dual_sign_violation,
                              fix_integers_resolve, solve_lp, solve_milp)
from oracles import enumerate_milp, random_ir, reference_lp


def textbook():
    ir = ModelIR()
    x = ir.add_var("x")
    y = ir.add_var("y")
    ir.add_constraint("cx", {x: 1}, "<=", 1)
    ir.add_constraint("cy", {y: 1}, "<=", 1)
    ir.set_objective({x: 1, y: 1})
    return ir


def test_textbook_lp():
    sol = solve_lp(textbook())
    assert sol.status == "optimal"
    assert sol.objective == pytest.approx(2.0)
    assert sol.dual("cx") == pytest.approx(1.0)
    assert sol.dual("cy") == pytest.approx(1.0)
    assert sol.value("x") == pytest.approx(1.0)


def test_duplicate_row_is_degenerate():
    ir = ModelIR()
    x = ir.add_var("x")
    ir.add_constraint("a", {x: 1}, "<=", 1)
    ir.add_constraint("b", {x: 1}, "<=", 1)
    ir.set_objective({x: 1})
    sol = solve_lp(ir)
    assert sol.objective == pytest.approx(1.0)
    assert sol.degenerate
    assert sol.dual("a") + sol.dual("b") == pytest.approx(1.0)


def test_infeasible_lp():
    ir = ModelIR()
    x = ir.add_var("x")
    ir.add_constraint("lo", {x: 1}, ">=", 1)
    ir.add_constraint("hi", {x: 1}, "<=", 0)
    ir.set_objective({x: 1})
    assert solve_lp(ir).status == "infeasible"


def test_unbounded_lp():
    ir = ModelIR()
    x = ir.add_var("x")
    ir.add_constraint("lo", {x: 1}, ">=", 1)
    ir.set_objective({x: 1})
    assert solve_lp(ir).status == "unbounded"


def test_ir_rejects_bad_input():
    ir = ModelIR()
    ir.add_var("x")
    with pytest.raises(ModelError):
        ir.add_var("x")
    with pytest.raises(ModelError):
        ir.add_constraint("r", {5: 1.0}, "<=", 1)
    with pytest.raises(ModelError):
        ir.add_constraint("r", {0: 1.0}, "<", 1)


def test_lp_text_export():
    text = textbook().to_lp_text()
    for section in ("Maximize", "Subject To", "Bounds", "End"):
        assert section in text


@settings(max_examples=60, deadline=None)
@given(seed=st.integers(0, 10**6), m=st.integers(1, 25), n=st.integers(1, 25))
def test_random_lp_matches_reference_and_duality(seed, m, n):
    ir = random_ir(np.random.default_rng(seed), m, n)
    sol = solve_lp(ir)
    status, ref = reference_lp(ir)
    assert sol.status == status
    if status != "optimal":
        return
    scale = max(1.0, abs(ref))
    assert abs(sol.objective - ref) <= 1e-6 * scale
    assert ir.max_violation(sol.primal) <= 1e-6
    assert abs(dual_objective(sol) - sol.objective) <= 1e-6 * scale
    assert complementary_slackness(sol) <= 1e-6
    assert dual_sign_violation(sol) <= 1e-9


def small_milp(seed, n_bin):
    rng = np.random.default_rng(seed)
    ir = random_ir(rng, int(rng.integers(3, 12)), int(rng.integers(n_bin, 10)), bounded=True)
    for j in rng.choice(ir.n_vars, n_bin, replace=False):
        v = ir.variables[j]
        v.lb, v.ub, v.integer = 0.0, 1.0, True
    return ir


@pytest.mark.parametrize("seed", range(12))
def test_four_binaries_match_enumeration(seed):
    ir = small_milp(seed, 4)
    res = solve_milp(ir)
    best = enumerate_milp(ir)
    if np.isfinite(best):
        assert res.status == "optimal"
        assert abs(res.objective - best) <= 1e-6 * max(1.0, abs(best))
        x = res.incumbent
        assert ir.max_violation(x) <= 1e-7
        cols = ir.integer_columns()
        assert np.array_equal(x[cols], np.round(x[cols]))
    else:
        assert res.status == "infeasible"


def test_all_binaries_fixed_single_node():
    seeds = (s for s in range(100) if solve_milp(small_milp(s, 3)).status == "optimal")
    ir = small_milp(next(seeds), 3)
    first = solve_milp(ir)
    for j in ir.integer_columns():
        ir.variables[j].lb = ir.variables[j].ub = round(first.incumbent[j])
    milp = solve_milp(ir)
    lp = solve_lp(ir)
    assert milp.status == lp.status == "optimal"
    assert milp.nodes_explored == 1
    assert milp.objective == pytest.approx(lp.objective, abs=1e-9)


def test_infeasible_root_one_node():
    ir = ModelIR()
    z = ir.add_var("z", 0, 1, integer=True)
    x = ir.add_var("x")
    ir.add_constraint("a", {z: 1, x: 1}, ">=", 3)
    ir.add_constraint("b", {x: 1}, "<=", 1)
    ir.set_objective({x: 1})
    res = solve_milp(ir)
    assert res.status == "infeasible"
    assert res.nodes_explored == 1


def test_milp_deterministic():
    ir = small_milp(8, 6)
    a = solve_milp(ir)
    b = solve_milp(ir)
    assert a.objective == b.objective
    assert a.trace == b.trace
    assert np.array_equal(a.incumbent, b.incumbent)


def test_fix_integers_resolve():
    ir = small_milp(5, 4)
    res = solve_milp(ir)
    assert res.status == "optimal"
    lp = fix_integers_resolve(ir, res)
    assert lp.objective == pytest.approx(res.objective, abs=1e-8)
    plain = textbook()
    a = fix_integers_resolve(plain, np.zeros(2))
    b = solve_lp(plain)
    assert a.objective == b.objective and np.allclose(a.duals, b.duals)


def test_highs_backend_agrees():
    ir = small_milp(11, 5)
    a = solve_milp(ir)
    b = solve_milp(ir, SolverOptions(backend="highs_milp"))
    assert a.status == b.status
    if a.status == "optimal":
        assert a.objective == pytest.approx(b.objective, rel=1e-6, abs=1e-6)


def test_options_from_config():
    opts = SolverOptions.from_config({"gap_tol": 1e-4, "node_limit": 10})
    assert opts.gap_tol == 1e-4 and opts.node_limit == 10
    with pytest.raises(KeyError):
        SolverOptions.from_config({"nonsense": 1})
