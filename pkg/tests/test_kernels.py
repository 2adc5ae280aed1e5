import os
import subprocess
import sys

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import random_instance
from stocsched import kernels
from stocsched.attenuation import estimate_f
from stocsched.core import make_instance
from stocsched.engine import simulate_many
from stocsched.lp import build_lp, solve_lp
from stocsched.policies import PolicySpec

needs_compiled = pytest.mark.skipif("cython" not in kernels.available_backends(), reason="extension not built")

KINDS = ["greedy", "ur", "safe", "conset", "simalg"]
MODES = ["base", "deadline", "knapsack", "knapsack-analysis", "cardinality"]


def _setup(seed):
    rng = np.random.default_rng(seed)
    inst = random_instance(rng, n_max=5, H_max=8)
    n = inst.n
    inst = make_instance(
        inst.values.tolist(), [j.service for j in inst.jobs], [j.departure for j in inst.jobs],
        horizon=inst.horizon,
        deadlines=tuple(int(b) for b in rng.integers(1, inst.horizon + 3, n)),
        weights=tuple(rng.uniform(0.2, 1.5, n).round(3).tolist()),
        capacity=1.5,
        cardinality=2,
    )
    lp = solve_lp(build_lp(inst))
    table = rng.uniform(0.3, 1.0, (n, inst.horizon))
    return inst, lp, table


def _spec(kind, lp, table):
    return PolicySpec(kind, lp=lp if kind in ("safe", "conset", "simalg") else None,
                      table=table if kind == "simalg" else None)


def test_python_backend_always_available():
    assert "python" in kernels.available_backends()
    assert kernels.get_backend("python") is not None
    with pytest.raises(ValueError):
        kernels.get_backend("fortran")


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 10**6), st.sampled_from(KINDS), st.sampled_from(MODES))
def test_kernel_matches_reference_path(seed, kind, mode):
    inst, lp, table = _setup(seed)
    spec = _spec(kind, lp, table)
    fast = simulate_many(inst, spec, mode, reps=30, seed=seed, backend="python")
    ref = simulate_many(inst, spec, mode, reps=30, seed=seed, reference=True)
    assert np.array_equal(fast.totals, ref.totals)
    assert np.array_equal(fast.free_frequency, ref.free_frequency)
    assert fast.failure_rate == ref.failure_rate
    assert fast.max_started == ref.max_started


@needs_compiled
@settings(max_examples=60, deadline=None)
@given(st.integers(0, 10**6), st.sampled_from(KINDS), st.sampled_from(MODES))
def test_backends_bit_identical(seed, kind, mode):
    inst, lp, table = _setup(seed)
    spec = _spec(kind, lp, table)
    a = simulate_many(inst, spec, mode, reps=50, seed=seed, backend="python")
    b = simulate_many(inst, spec, mode, reps=50, seed=seed, backend="cython")
    assert np.array_equal(a.totals, b.totals)
    assert np.array_equal(a.free_frequency, b.free_frequency)
    assert a.failure_rate == b.failure_rate and a.max_started == b.max_started


@needs_compiled
@settings(max_examples=20, deadline=None)
@given(st.integers(0, 10**6), st.sampled_from([0.0, 0.1]))
def test_attenuation_backends_identical(seed, eps):
    inst, lp, _ = _setup(seed)
    a = estimate_f(inst, lp, eps, M=200, seed=seed, backend="python")
    b = estimate_f(inst, lp, eps, M=200, seed=seed, backend="cython")
    assert np.array_equal(a.f, b.f)
    assert np.array_equal(a.num, b.num) and np.array_equal(a.den, b.den)


def test_pure_python_switch():
    code = "from stocsched import kernels; print(kernels.BACKEND)"
    env = dict(os.environ, STOCSCHED_PURE_PYTHON="1")
    out = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True, text=True, check=True)
    assert out.stdout.strip() == "python"
    env.pop("STOCSCHED_PURE_PYTHON")
    out = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True, text=True, check=True)
    expected = "cython" if "cython" in kernels.available_backends() else "python"
    assert out.stdout.strip() == expected
