import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import random_instance
from stocsched.core import Pmf, SurvivalCurve, make_instance
from stocsched.errors import DimensionMismatchError, MissingDeadlinesError
from stocsched.instances import gap_lp_assignment, gen_example, gen_hard_alg, gen_integrality_gap, gen_synthetic
from stocsched.lp import (
    LpSolution,
    LpStatus,
    build_lp,
    build_lp_deadline,
    build_lp_sched,
    check_feasibility,
    lp_objective,
    solve_lp,
    with_cardinality,
    with_knapsack,
    write_lp_file,
)


def _solve(inst, mode="base"):
    return solve_lp(build_lp(inst, mode))


def cvxopt_objective(model):
    """Independent re-solve with cvxopt's interior-point LP solver."""
    cvxopt = pytest.importorskip("cvxopt")
    cvxopt.solvers.options["show_progress"] = False
    A = model.matrix.toarray()
    scale = 1.0 / np.maximum(np.abs(A).max(axis=0), 1e-300)
    A = A * scale
    nv = model.num_vars
    G = np.vstack([A, -np.eye(nv)])
    h = np.concatenate([model.rhs, np.zeros(nv)])
    sol = cvxopt.solvers.lp(
        cvxopt.matrix(-(model.objective * scale)), cvxopt.matrix(G), cvxopt.matrix(h)
    )
    assert sol["status"] == "optimal"
    return -sol["primal objective"]


# --- model shape ------------------------------------------------------------------

def test_row_counts_and_eliminated_variables():
    inst = make_instance([1, 2], [Pmf.point(1), Pmf.point(2)], [[1, 0.5, 0, 0], [1] * 4], horizon=4)
    model = build_lp_sched(inst)
    assert model.count("JobOnce") == 2
    assert model.count("ServerBusy") == 4
    # job 0 has p(3) = p(4) = 0, so only 2 + 4 variables remain
    assert model.num_vars == 6


def test_single_job_trivial():
    inst = make_instance([1], [Pmf.point(1)], [[1]], horizon=1)
    sol = _solve(inst)
    assert sol.status == LpStatus.OPTIMAL
    assert sol.objective == pytest.approx(1.0, abs=1e-9)


def test_two_jobs_single_period():
    curve = SurvivalCurve.until(1, 2)
    inst = make_instance([1, 1], [Pmf.point(1)] * 2, [curve, curve], horizon=2)
    assert _solve(inst).objective == pytest.approx(1.0, abs=1e-9)


@pytest.mark.parametrize("n", [1, 4, 10, 100])
def test_hard_instance_lp_is_one(n):
    assert _solve(gen_hard_alg(n)).objective == pytest.approx(1.0, abs=1e-7)


def test_gap_assignment_feasible_and_at_least_m_plus_one_minus_slack():
    n, m = 400, 4
    inst = gen_integrality_gap(n, m)
    x = gap_lp_assignment(n, m)
    assert check_feasibility(inst, x).feasible
    # the explicit assignment collects 1 + m(n-1)/n ~ m + 1
    assert lp_objective(inst, x) == pytest.approx(1 + m * (n - 1) / n, abs=1e-9)
    assert _solve(inst).objective >= lp_objective(inst, x) - 1e-7


# --- deadline variant ---------------------------------------------------------------

def test_deadline_requires_deadlines():
    inst = make_instance([1], [Pmf.point(1)], [[1]], horizon=1)
    with pytest.raises(MissingDeadlinesError):
        build_lp_deadline(inst)


def test_infeasible_deadline_gives_zero():
    inst = make_instance([1], [Pmf.point(2)], [[1, 1]], horizon=2, deadlines=(2,))
    sol = _solve(inst, "deadline")
    assert sol.objective == pytest.approx(0.0, abs=1e-9)


def test_deadline_example_lp_at_least_one():
    assert _solve(gen_example("deadline"), "deadline").objective >= 1 - 1e-7


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 10**6))
def test_nonbinding_deadlines_equal_base(seed):
    rng = np.random.default_rng(seed)
    inst = random_instance(rng)
    big = tuple([inst.horizon + 10] * inst.n)
    with_dl = make_instance(
        inst.values.tolist(), [j.service for j in inst.jobs], [j.departure for j in inst.jobs],
        horizon=inst.horizon, deadlines=big,
    )
    assert _solve(with_dl, "deadline").objective == pytest.approx(_solve(inst).objective, abs=1e-9)


# --- knapsack / cardinality -----------------------------------------------------------

def test_slack_knapsack_leaves_objective():
    rng = np.random.default_rng(3)
    inst = random_instance(rng, n=3, H=5)
    base = build_lp_sched(inst)
    slack = with_knapsack(base, [1.0] * 3, 3.0)
    assert solve_lp(slack).objective == pytest.approx(solve_lp(base).objective, abs=1e-8)


def test_cardinality_zero():
    rng = np.random.default_rng(4)
    inst = random_instance(rng, n=3, H=5)
    assert solve_lp(with_cardinality(build_lp_sched(inst), 0)).objective == pytest.approx(0.0, abs=1e-9)


def test_unit_knapsack_single_period_matches_base():
    curve = SurvivalCurve.until(1, 1)
    inst = make_instance([1, 2], [Pmf.point(1)] * 2, [curve, curve], horizon=1, weights=(1.0, 1.0), capacity=1.0)
    assert _solve(inst, "knapsack").objective == pytest.approx(_solve(inst).objective, abs=1e-9)


def test_knapsack_dimension_check():
    inst = make_instance([1], [Pmf.point(1)], [[1]], horizon=1)
    with pytest.raises(DimensionMismatchError):
        with_knapsack(build_lp_sched(inst), [1.0, 2.0], 1.0)


# --- solver agreement -------------------------------------------------------------------

@pytest.mark.parametrize("seed", [1, 2, 3])
def test_synthetic_matches_cvxopt(seed):
    model = build_lp(gen_synthetic(5, seed))
    sol = solve_lp(model)
    assert sol.status == LpStatus.OPTIMAL
    assert sol.max_residual <= 1e-7
    assert sol.objective == pytest.approx(cvxopt_objective(model), abs=1e-5)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10**6), st.sampled_from(["base", "knapsack", "cardinality"]))
def test_random_models_match_cvxopt(seed, mode):
    rng = np.random.default_rng(seed)
    inst = random_instance(rng)
    n = inst.n
    inst = make_instance(
        inst.values.tolist(), [j.service for j in inst.jobs], [j.departure for j in inst.jobs],
        horizon=inst.horizon, weights=tuple(rng.uniform(0.1, 2, n).tolist()), capacity=1.5, cardinality=1,
    )
    model = build_lp(inst, mode)
    sol = solve_lp(model)
    assert sol.status == LpStatus.OPTIMAL
    assert np.all(sol.x >= -1e-9)
    assert check_feasibility(inst, sol.x, mode).feasible
    assert sol.objective == pytest.approx(cvxopt_objective(model), abs=1e-6)


# --- feasibility certificate ---------------------------------------------------------------

def test_feasibility_examples():
    curve = SurvivalCurve.until(1, 1)
    inst = make_instance([1, 1], [Pmf.point(1)] * 2, [curve, curve], horizon=1)
    zero = check_feasibility(inst, np.zeros((2, 1)))
    assert zero.feasible and zero.max_residual == 0.0
    bad = check_feasibility(inst, np.ones((2, 1)))
    assert bad.server_residuals[0] == pytest.approx(1.0)
    assert not bad.feasible
    with pytest.raises(DimensionMismatchError):
        check_feasibility(inst, np.zeros((3, 1)))


# --- scaling ---------------------------------------------------------------------------------

@settings(max_examples=20, deadline=None)
@given(st.integers(0, 10**6), st.floats(0.1, 50))
def test_value_scaling_equivariance(seed, c):
    rng = np.random.default_rng(seed)
    inst = random_instance(rng)
    scaled = make_instance(
        (inst.values * c).tolist(), [j.service for j in inst.jobs], [j.departure for j in inst.jobs],
        horizon=inst.horizon,
    )
    a, b = _solve(inst), _solve(scaled)
    assert b.objective == pytest.approx(c * a.objective, rel=1e-7, abs=1e-9)
    # the unscaled optimum stays feasible and optimal for the scaled problem
    assert check_feasibility(scaled, a.x).feasible
    assert lp_objective(scaled, a.x) == pytest.approx(b.objective, rel=1e-7, abs=1e-9)


# --- serialization -------------------------------------------------------------------------

def test_solution_json_round_trip(tmp_path):
    sol = _solve(gen_example("greedy_iid"))
    sol.save(tmp_path / "lp.json")
    data = json.loads((tmp_path / "lp.json").read_text())
    assert set(data) == {"objective", "x", "status", "max_residual"}
    assert data["status"] == "Optimal"
    again = LpSolution.load(tmp_path / "lp.json")
    assert again.objective == sol.objective
    assert np.array_equal(again.x, sol.x)


def test_lp_file_export(tmp_path):
    model = build_lp(gen_example("greedy_iid"))
    write_lp_file(model, tmp_path / "m.lp")
    text = (tmp_path / "m.lp").read_text()
    assert text.splitlines()[1] == "Maximize"
    assert "Subject To" in text and text.rstrip().endswith("End")
    assert text.count("JobOnce") == 2 and text.count("ServerBusy") == 2
