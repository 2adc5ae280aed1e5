"""Acceptance suite.

Each test checks one numbered criterion at its stated tolerance and records a
PASS/FAIL line; the lines are collected in a terminal summary section.
"""

import csv
import math
import time

import numpy as np
import pytest

from conftest import random_instance, random_pmf, record_criterion
from stocsched.attenuation import estimate_f
from stocsched.cli import main
from stocsched.core import Pmf, geometric_survival, make_instance
from stocsched.engine import simulate_many
from stocsched.instances import (
    CategoryProfile,
    EmpiricalProfile,
    HARD_ALG_LIMIT,
    gap_increasing_type_priority,
    gap_opt_formula,
    gen_example,
    gen_hard_alg,
    gen_integrality_gap,
    hard_alg_value,
    ingest_call_center,
    pmf_rmse,
    sample_call_records,
    write_call_records,
)
from stocsched.lp import build_lp, solve_lp
from stocsched.oracle import evaluate_policy_exact, exact_f, greedy_markov, solve_mdp
from stocsched.policies import PolicySpec, consideration_value

CONSIDERATION_BOUND = 0.5 * (1 - 1 / math.e)


def _tiny_instances(count=20, seed=505):
    rng = np.random.default_rng(seed)
    return [random_instance(rng, n_max=3, H_max=5) for _ in range(count)]


# --- 1 ------------------------------------------------------------------------------

def test_c1_lp_upper_bound():
    rng = np.random.default_rng(101)
    t0 = time.perf_counter()
    worst, idle = np.inf, 0
    for _ in range(50):
        inst = random_instance(rng, n_max=6, H_max=8)
        mdp = solve_mdp(inst, record_actions=False)
        idle += mdp.idle_states
        worst = min(worst, solve_lp(build_lp(inst)).objective - mdp.value)
    elapsed = time.perf_counter() - t0
    ok = worst >= -1e-6 and elapsed < 60
    record_criterion(1, ok, f"min(LP - MDP) = {worst:.3g} over 50 instances in {elapsed:.1f}s; "
                            f"states where idling is strictly optimal: {idle}")
    assert ok


# --- 2 ------------------------------------------------------------------------------

def test_c2_greedy_half_iid():
    rng = np.random.default_rng(202)
    worst = np.inf
    for _ in range(50):
        inst = random_instance(rng, n_max=6, H_max=8, iid=True)
        opt = solve_mdp(inst, record_actions=False).value
        g = evaluate_policy_exact(inst, greedy_markov(inst))
        worst = min(worst, g - 0.5 * opt)
    ex = gen_example("greedy_iid", eps=0.1)
    ratio = evaluate_policy_exact(ex, greedy_markov(ex)) / solve_mdp(ex).value
    ok = worst >= -1e-9 and abs(ratio - 1.1 / 2.1) <= 1e-12
    record_criterion(2, ok, f"min(Greedy - OPT/2) = {worst:.3g}; example ratio error {abs(ratio - 1.1 / 2.1):.1e}")
    assert ok


# --- 3 ------------------------------------------------------------------------------

def test_c3_hard_instance():
    n = 100
    inst = gen_hard_alg(n)
    x = np.zeros((n, inst.horizon))
    x[:, 0] = 1.0 / n
    spec = PolicySpec("simalg", lp=x, table=np.ones_like(x))
    stats = simulate_many(inst, spec, reps=100_000, seed=3)
    target = 1 - (1 - 1 / 200) ** 100
    closed = [hard_alg_value(k) for k in (10, 100, 1000)]
    monotone = all(a > b > HARD_ALG_LIMIT for a, b in zip(closed, closed[1:]))
    ok = abs(stats.mean - target) <= 0.005 and monotone and abs(HARD_ALG_LIMIT - 0.39347) < 1e-5
    record_criterion(3, ok, f"mean {stats.mean:.4f} vs {target:.4f}; closed forms {np.round(closed, 5).tolist()}")
    assert ok


# --- 4 ------------------------------------------------------------------------------

@pytest.mark.xfail(strict=True, reason="the LP optimum of this family is m + 1 - m/n = 4.99 < 5 (see notes)")
def test_c4_gap_lp_value():
    inst = gen_integrality_gap(400, 4)
    obj = solve_lp(build_lp(inst)).objective
    ok = obj >= 5 - 1e-6
    record_criterion(4, ok, f"LP objective {obj:.6f} (required >= 5 - 1e-6; exact optimum is 4.99)")
    assert ok


def test_c4_gap_policy_value():
    n, m = 400, 4
    inst = gen_integrality_gap(n, m)
    t0 = time.perf_counter()
    spec = PolicySpec("priority", priority=gap_increasing_type_priority(n, m))
    stats = simulate_many(inst, spec, reps=10_000, seed=4)
    elapsed = time.perf_counter() - t0
    target = gap_opt_formula(n, m)
    ok = abs(stats.mean - target) <= stats.ci95 and elapsed < 30
    record_criterion(4, ok, f"policy mean {stats.mean:.4f} +/- {stats.ci95:.4f} vs {target:.4f} in {elapsed:.1f}s")
    assert ok


# --- 5 and 6 ----------------------------------------------------------------------------

def test_c5_feasibility_and_free_server():
    worst_prob, worst_free = 0.0, 1.0
    for inst in _tiny_instances():
        res = exact_f(inst, solve_lp(build_lp(inst)))
        worst_prob = max(worst_prob, res.max_raw_prob)
        worst_free = min(worst_free, float(res.server_free.min()))
    ok = worst_prob <= 1 + 1e-9 and worst_free >= 0.5 - 1e-9
    record_criterion(5, ok, f"max x/(2pf) = {worst_prob:.6f}; min Pr(free) = {worst_free:.6f} over 20 instances")
    assert ok


def test_c6_approximation_bound():
    worst = np.inf
    for inst in _tiny_instances():
        lp = solve_lp(build_lp(inst))
        res = exact_f(inst, lp)
        worst = min(worst, res.value - CONSIDERATION_BOUND * lp.objective)
    ok = worst >= -1e-9
    record_criterion(6, ok, f"min(ALG - 0.31606 LP) = {worst:.4f} over 20 instances")
    assert ok


# --- 7 ------------------------------------------------------------------------------

def test_c7_best_of_set_inequality():
    rng = np.random.default_rng(707)
    worst = np.inf
    for _ in range(1000):
        k = int(rng.integers(1, 16))
        alpha = rng.random(k)
        alpha *= rng.random() / alpha.sum()
        v = rng.exponential(3.0, k)
        worst = min(worst, consideration_value(alpha, v) - (1 - 1 / math.e) * float(alpha @ v))
    ok = worst >= -1e-12
    record_criterion(7, ok, f"min slack {worst:.3g} over 1000 draws")
    assert ok


# --- 8 ------------------------------------------------------------------------------

def test_c8_attenuation_convergence():
    rng = np.random.default_rng(2024)
    summaries, ok = [], True
    for _ in range(5):
        n, H = int(rng.integers(2, 4)), int(rng.integers(4, 6))
        inst = make_instance(
            rng.uniform(1, 5, n).round(3).tolist(),
            [random_pmf(rng, 3) for _ in range(n)],
            [geometric_survival(float(rng.uniform(0.7, 1.0)), H) for _ in range(n)],
            horizon=H,
        )
        lp = solve_lp(build_lp(inst))
        exact = exact_f(inst, lp).f
        medians = []
        for M in (100, 1_000, 10_000):
            errs = [np.abs(estimate_f(inst, lp, 0.0, M, seed=s).f - exact).max() for s in range(20)]
            medians.append(float(np.median(errs)))
        ok &= medians[0] > medians[1] > medians[2] and medians[2] <= 0.03
        summaries.append("/".join(f"{m:.3f}" for m in medians))
    record_criterion(8, ok, "median sup-errors at M=1e2/1e3/1e4: " + ", ".join(summaries))
    assert ok


# --- 9 ------------------------------------------------------------------------------

def test_c9_deadline_example():
    inst = gen_example("deadline")
    g = evaluate_policy_exact(inst, greedy_markov(inst), "deadline")
    opt = solve_mdp(inst, "deadline").value
    sim = simulate_many(inst, PolicySpec("greedy"), "deadline", reps=100, seed=9)
    ok = g == 0.0 and opt == 1.0 and sim.mean == 0.0
    record_criterion(9, ok, f"deadline example: Greedy {g}, MDP {opt}")
    assert ok


def test_c9_knapsack_failure_rate():
    rng = np.random.default_rng(909)
    worst, ok = -np.inf, True
    for i in range(10):
        n, H = 10, 20
        base = random_instance(rng, n=n, H=H)
        w = rng.uniform(0.1, 1.0, n).round(3)
        W = 3.0
        inst = make_instance(
            base.values.tolist(), [j.service for j in base.jobs], [j.departure for j in base.jobs],
            horizon=H, weights=tuple(w.tolist()), capacity=W,
        )
        lp = solve_lp(build_lp(inst, "knapsack"))
        table = estimate_f(inst, lp, 0.0, 500, seed=i)
        stats = simulate_many(inst, PolicySpec("simalg", lp=lp, table=table), "knapsack-analysis", 4000, seed=i)
        bound = math.exp(-W**2 / (2 * n * w.max() ** 2))
        sigma = math.sqrt(max(bound * (1 - bound), 1e-12) / stats.reps)
        worst = max(worst, stats.failure_rate - bound - 3 * sigma)
        ok &= stats.failure_rate <= bound + 3 * sigma
    record_criterion(9, ok, f"knapsack failure rate minus (bound + 3 sigma), worst = {worst:.4f}")
    assert ok


def test_c9_cardinality_strict():
    rng = np.random.default_rng(919)
    worst = 0
    for i in range(10):
        base = random_instance(rng, n=6, H=10)
        k = int(rng.integers(1, 4))
        inst = make_instance(
            base.values.tolist(), [j.service for j in base.jobs], [j.departure for j in base.jobs],
            horizon=10, cardinality=k,
        )
        lp = solve_lp(build_lp(inst, "cardinality"))
        for kind in ("greedy", "ur", "safe", "conset", "simalg"):
            spec = PolicySpec(kind, lp=lp if kind in ("safe", "conset", "simalg") else None,
                              table=np.ones((6, 10)) if kind == "simalg" else None)
            worst = max(worst, simulate_many(inst, spec, "cardinality", 500, seed=i).max_started - k)
    ok = worst <= 0
    record_criterion(9, ok, f"cardinality: max(started - k) = {worst}")
    assert ok


# --- 10 ------------------------------------------------------------------------------

def test_c10_protocol(tmp_path, capsys):
    ns = [str(n) for n in range(5, 55, 5)]
    t0 = time.perf_counter()
    code = main(["bench", "--gen", "syn", "--n", *ns, "--reps", "100", "--out", str(tmp_path)])
    elapsed = time.perf_counter() - t0
    capsys.readouterr()
    lines = (tmp_path / "values.csv").read_text().splitlines()
    rows = list(csv.reader(lines[1:]))
    header, body = rows[0], rows[1:]
    shape_ok = all(c in header for c in ("LP", "SimAlg", "ConSet", "Safe", "Greedy", "UR")) and len(body) == 10
    order_ok = True
    for row in body:
        rec = dict(zip(header, row))
        lp = float(rec["LP"])
        order_ok &= all(float(rec[p]) <= lp * (1 + 1e-6) for p in ("SimAlg", "ConSet", "Safe", "Greedy", "UR"))
        if rec["MDP"] != "NA":
            order_ok &= float(rec["MDP"]) <= lp + 1e-6
    ratio_rows = list(csv.reader((tmp_path / "ratios.csv").read_text().splitlines()[2:]))
    order_ok &= all(float(r) <= 1 + 1e-6 for row in ratio_rows for r in row[1:])
    ok = code == 0 and elapsed < 600 and shape_ok and order_ok
    record_criterion(10, ok, f"bench over n=5..50 in {elapsed:.1f}s; shape {shape_ok}; ordering {order_ok}")
    assert ok


def test_c10_ingestion_round_trip(tmp_path):
    def cat(svc, surv, freq, value):
        return CategoryProfile(Pmf.from_mapping(svc), surv, freq, value)

    truth = EmpiricalProfile({
        "new": cat({1: 0.45, 2: 0.3, 3: 0.15, 6: 0.1}, (1.0, 0.8, 0.5, 0.3, 0.1, 0.0), 0.5, 1.0),
        "regular": cat({1: 0.2, 2: 0.5, 4: 0.3}, (1.0, 0.9, 0.6, 0.2, 0.0), 0.35, 2.0),
        "priority": cat({2: 0.7, 5: 0.3}, (1.0, 0.95, 0.7, 0.0), 0.15, 8.0),
    })
    write_call_records(sample_call_records(truth, 100_000, seed=10), tmp_path / "calls.csv")
    got = ingest_call_center(tmp_path / "calls.csv")
    worst = max(pmf_rmse(truth.categories[c].service, got.categories[c].service) for c in truth.categories)
    ok = worst <= 0.01
    record_criterion(10, ok, f"ingestion round trip worst service RMSE {worst:.4f} on 1e5 rows")
    assert ok
