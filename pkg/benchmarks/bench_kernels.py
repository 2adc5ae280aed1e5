"""Compare the compiled and pure-Python simulation kernels.

Usage::

    python3 benchmarks/bench_kernels.py [--n 20] [--reps 2000] [--sims 2000]

Both backends consume identical random streams, so the script also asserts
that they return the same numbers.
"""

import argparse
import time

import numpy as np

from stocsched import kernels
from stocsched.attenuation import estimate_f
from stocsched.engine import simulate_many
from stocsched.instances import gen_synthetic
from stocsched.lp import build_lp, solve_lp
from stocsched.policies import PolicySpec


def _time(fn, repeat=3):
    best, out = float("inf"), None
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn()
        best = min(best, time.perf_counter() - t0)
    return best, out


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--n", type=int, default=20)
    ap.add_argument("--reps", type=int, default=2000)
    ap.add_argument("--sims", type=int, default=500)
    ap.add_argument("--seed", type=int, default=1)
    args = ap.parse_args()

    backends = kernels.available_backends()
    if "cython" not in backends:
        print("compiled kernels not built; only the Python backend is available")
    inst = gen_synthetic(args.n, args.seed)
    sol = solve_lp(build_lp(inst))
    f = np.ones((inst.n, inst.horizon))

    print(f"instance: {inst.n} jobs, horizon {inst.horizon}")
    print(f"{'task':<28}" + "".join(f"{b:>12}" for b in backends) + f"{'speedup':>10}")
    for label, kind in [("simulate greedy", "greedy"), ("simulate conset", "conset"), ("simulate simalg", "simalg")]:
        spec = PolicySpec(kind, lp=sol if kind != "greedy" else None, table=f if kind == "simalg" else None)
        times, means = {}, {}
        for b in backends:
            times[b], st = _time(lambda b=b: simulate_many(inst, spec, "base", args.reps, args.seed, backend=b))
            means[b] = st.totals
        _report(f"{label} x{args.reps}", backends, times)
        if len(backends) == 2:
            assert np.array_equal(means["python"], means["cython"]), "backends disagree"

    times, tabs = {}, {}
    for b in backends:
        times[b], tabs[b] = _time(lambda b=b: estimate_f(inst, sol, 0.1, args.sims, args.seed, backend=b), repeat=1)
    _report(f"estimate_f M={args.sims}", backends, times)
    if len(backends) == 2:
        assert np.array_equal(tabs["python"].f, tabs["cython"].f), "backends disagree"


def _report(label, backends, times):
    row = f"{label:<28}" + "".join(f"{times[b] * 1000:>10.1f}ms" for b in backends)
    if len(backends) == 2:
        row += f"{times['python'] / times['cython']:>9.1f}x"
    print(row)


if __name__ == "__main__":
    main()
