import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from gridplan.linear import IncrementalLP, LinearModel, solve_lp, solve_mip

from .builders import random_lp, to_model
from .oracles import exhaustive_mip, linprog_box, vertex_lp


def rel_close(a, b, tol=1e-6):
    return abs(a - b) <= tol * max(1.0, abs(b))


class TestSmallExamples:
    def test_bound_active_minimum(self):
        m = LinearModel()
        x = m.add_variable("x", lb=3.0, cost=1.0)
        sol = solve_lp(m)
        assert sol.optimal and sol.x[x] == pytest.approx(3.0) and sol.objective == pytest.approx(3.0)

    def test_degenerate_facet(self):
        m = LinearModel()
        x = m.add_variables("x", 2, ub=1.0, cost=-1.0)
        m.add_constraint({int(x[0]): 1.0, int(x[1]): 1.0}, "<=", 1.0)
        sol = solve_lp(m)
        assert sol.objective == pytest.approx(-1.0)
        assert sol.x.sum() == pytest.approx(1.0)

    def test_infeasible_status(self):
        m = LinearModel()
        x = m.add_variable("x", ub=1.0)
        m.add_constraint({x: 1.0}, ">=", 2.0)
        sol = solve_lp(m)
        assert sol.status == "infeasible" and sol.x is None and math.isnan(sol.objective)

    def test_unbounded_status(self):
        m = LinearModel()
        m.add_variable("x", lb=-np.inf, cost=1.0)
        assert solve_lp(m).status == "unbounded"

    def test_integer_ceiling(self):
        m = LinearModel()
        x = m.add_variable("x", lb=2.3, ub=10, cost=1.0, integer=True)
        sol = solve_mip(m)
        assert sol.optimal and sol.x[x] == pytest.approx(3.0) and sol.mip_gap <= 1e-6

    def test_knapsack(self):
        value, weight = np.array([6.0, 10.0, 12.0]), np.array([1.0, 2.0, 3.0])
        m = LinearModel()
        x = m.add_variables("x", 3, ub=1.0, cost=-value, integer=True)
        m.add_constraints(np.zeros(3, int), x, weight, "<=", [5.0])
        sol = solve_mip(m)
        best = min(-value @ np.array(b) for b in np.ndindex(2, 2, 2) if weight @ np.array(b) <= 5)
        assert sol.objective == pytest.approx(best) == -22.0

    def test_integer_no_rows(self):
        m = LinearModel()
        m.add_variables("x", 3, lb=[-2, 0, 1], ub=[4, 5, 6], cost=[1.0, -1.0, 2.0], integer=True)
        sol = solve_mip(m)
        np.testing.assert_allclose(sol.x, [-2, 5, 1])

    def test_solve_lp_rejects_integers(self):
        m = LinearModel()
        m.add_variable("x", integer=True)
        with pytest.raises(ValueError, match="solve_mip"):
            solve_lp(m)

    def test_bad_sense(self):
        m = LinearModel()
        x = m.add_variable("x")
        with pytest.raises(ValueError, match="sense"):
            m.add_constraint({x: 1.0}, "<", 1.0)

    def test_unknown_variable(self):
        m = LinearModel()
        m.add_variable("x")
        with pytest.raises(ValueError, match="unknown variable"):
            m.add_constraint({5: 1.0}, "<=", 1.0)

    def test_lp_text(self):
        m = LinearModel("t")
        x = m.add_variables("x", 2, ub=4.0, cost=[1.0, 2.0])
        m.add_constraint({int(x[0]): 1.0, int(x[1]): 1.0}, ">=", 1.0)
        text = m.to_lp_string()
        assert text.startswith("\\ t\nMinimize") and "Subject To" in text and text.endswith("End\n")

    def test_var_block(self):
        m = LinearModel()
        m.add_variable("a")
        b = m.add_variables("b", (2, 3))
        np.testing.assert_array_equal(m.var_block("b"), b)
        assert m.var_names()[1] == "b[0,0]"


class TestOracles:
    """LP and MIP objectives against vertex and exhaustive enumeration."""

    @pytest.mark.parametrize("seed", range(30))
    def test_lp_vs_vertices(self, seed):
        rng = np.random.default_rng(seed)
        n, m = int(rng.integers(2, 7)), int(rng.integers(1, 5))
        data = random_lp(rng, n, m)
        sol = solve_lp(to_model(*data[:-1]))
        ref, _ = vertex_lp(*data[:-1])
        assert sol.optimal
        assert rel_close(sol.objective, ref)

    def test_ten_variables(self):
        rng = np.random.default_rng(99)
        data = random_lp(rng, 10, 3)
        ref, _ = vertex_lp(*data[:-1])
        assert rel_close(solve_lp(to_model(*data[:-1])).objective, ref)

    @pytest.mark.parametrize("seed", range(25))
    def test_mip_vs_enumeration(self, seed):
        rng = np.random.default_rng(1000 + seed)
        n, m = int(rng.integers(2, 6)), int(rng.integers(1, 4))
        data = random_lp(rng, n, m, integer=True)
        sol = solve_mip(to_model(*data))
        ref, _ = exhaustive_mip(*data)
        assert sol.optimal
        assert rel_close(sol.objective, ref)
        ints = data[-1]
        assert np.all(np.abs(sol.x[ints] - np.round(sol.x[ints])) <= 1e-6)


def _lp_case(seed):
    rng = np.random.default_rng(seed)
    return random_lp(rng, int(rng.integers(2, 9)), int(rng.integers(1, 7)))


class TestProperties:
    @settings(max_examples=60, deadline=None)
    @given(st.integers(0, 10**6))
    def test_duality_gap_and_feasibility(self, seed):
        data = _lp_case(seed)
        model = to_model(*data[:-1])
        sol = solve_lp(model)
        assert sol.optimal
        assert abs(sol.objective - sol.dual_objective) <= 1e-6 * (1 + abs(sol.objective))
        assert model.max_violation(sol.x) <= 1e-6

    @settings(max_examples=40, deadline=None)
    @given(st.integers(0, 10**6))
    def test_matches_linprog(self, seed):
        data = _lp_case(seed)
        ref, _ = linprog_box(*data[:-1])
        assert rel_close(solve_lp(to_model(*data[:-1])).objective, ref)

    @settings(max_examples=40, deadline=None)
    @given(st.integers(0, 10**6))
    def test_mip_bounded_by_relaxation(self, seed):
        rng = np.random.default_rng(seed)
        data = random_lp(rng, int(rng.integers(2, 7)), int(rng.integers(1, 5)), integer=True)
        model = to_model(*data)
        mip = solve_mip(model)
        lp = solve_lp(model.relaxed())
        assert mip.optimal and lp.optimal
        assert mip.objective >= lp.objective - 1e-6
        assert model.max_violation(mip.x) <= 1e-6

    @settings(max_examples=20, deadline=None)
    @given(st.integers(0, 10**6))
    def test_deterministic(self, seed):
        rng = np.random.default_rng(seed)
        data = random_lp(rng, 5, 3, integer=True)
        a, b = solve_mip(to_model(*data)), solve_mip(to_model(*data))
        assert a.status == b.status and a.objective == b.objective
        np.testing.assert_array_equal(a.x, b.x)


class TestIncremental:
    def test_rebounding_matches_fresh_solve(self):
        rng = np.random.default_rng(7)
        c, A, lo, hi, lb, ub, _ = random_lp(rng, 6, 4)
        model = to_model(c, A, lo, hi, lb, ub)
        lp = IncrementalLP(model)
        lp.solve()
        for _ in range(10):
            new_ub = ub + rng.uniform(-0.5, 0.5, size=ub.shape)
            new_ub = np.maximum(new_ub, lb)
            lp.set_col_bounds(np.arange(6), lb, new_ub)
            warm = lp.solve()
            fresh = solve_lp(to_model(c, A, lo, hi, lb, new_ub))
            assert warm.status == fresh.status
            if fresh.optimal:
                assert warm.objective == pytest.approx(fresh.objective, rel=1e-9, abs=1e-9)

    def test_set_all_bounds(self):
        m = LinearModel()
        x = m.add_variables("x", 2, cost=[1.0, 1.0])
        r = m.add_constraint({int(x[0]): 2.0, int(x[1]): 1.0}, ">=", 4.0)
        lp = IncrementalLP(m)
        assert lp.solve().objective == pytest.approx(2.0)
        lp.set_all_bounds(np.zeros(2), np.array([1.0, np.inf]), np.array([6.0]), np.array([np.inf]))
        sol = lp.solve()
        assert sol.objective == pytest.approx(5.0)
        assert r == 0
