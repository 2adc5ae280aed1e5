"""Discrete-time replicated simulator.

Per replication the departure and service times are drawn up front from the
replication's own stream; then for ``t = 1..H`` the policy is queried whenever
the server is free and some job is available.  Started jobs never depart.

Modes:

``base``               value credited on start
``deadline``           credited only if ``t + S_j <= B_j``
``knapsack``           jobs that would overflow the capacity are not offered
``knapsack-analysis``  jobs run regardless; an overflowing replication is a failure worth 0
``cardinality``        at most ``k`` starts
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from . import kernels
from ._rng import DOMAIN_SIM, RNG_NAME, stream
from .core import Instance
from .errors import ConfigurationError, ContractViolationError
from .policies import CompiledPolicy, PolicyContext, PolicySpec

MODES = {
    "base": kernels.MODE_BASE,
    "deadline": kernels.MODE_DEADLINE,
    "knapsack": kernels.MODE_KNAPSACK,
    "knapsack-analysis": kernels.MODE_KNAPSACK_ANALYSIS,
    "cardinality": kernels.MODE_CARDINALITY,
}
WEIGHT_TOL = 1e-12


@dataclass(frozen=True)
class RunEntry:
    job: int
    start: int
    service: int
    credited: bool


@dataclass
class RunRecord:
    total: float
    runs: list[RunEntry]
    failed: bool
    free: np.ndarray  # bool per time step

    @property
    def started(self) -> int:
        return len(self.runs)


@dataclass(frozen=True)
class SimStats:
    reps: int
    mean: float
    std: float
    ci95: float
    free_frequency: np.ndarray
    totals: np.ndarray = field(repr=False)
    failure_rate: float = 0.0
    max_started: int = 0
    seed: int | None = None
    rng: str = RNG_NAME

    @classmethod
    def from_arrays(cls, totals, free_counts, failed, started, seed=None) -> "SimStats":
        totals = np.asarray(totals, dtype=float)
        reps = len(totals)
        mean = math.fsum(totals.tolist()) / reps
        std = float(np.sqrt(math.fsum(((totals - mean) ** 2).tolist()) / (reps - 1))) if reps > 1 else 0.0
        return cls(
            reps=reps,
            mean=mean,
            std=std,
            ci95=1.96 * std / math.sqrt(reps),
            free_frequency=np.asarray(free_counts, dtype=float) / reps,
            totals=totals,
            failure_rate=float(np.mean(failed)) if reps else 0.0,
            max_started=int(np.max(started)) if reps else 0,
            seed=seed,
        )


def _mode_code(mode: str, instance: Instance) -> int:
    if mode not in MODES:
        raise ConfigurationError(f"unknown mode {mode!r}; choose from {sorted(MODES)}")
    if mode == "deadline" and instance.deadlines is None:
        raise ConfigurationError("deadline mode needs deadlines")
    if mode.startswith("knapsack") and (instance.weights is None or instance.capacity is None):
        raise ConfigurationError("knapsack modes need weights and capacity")
    if mode == "cardinality" and instance.cardinality is None:
        raise ConfigurationError("cardinality mode needs a cardinality")
    return MODES[mode]


def _kernel_inputs(instance: Instance):
    n = instance.n
    support, cdf = instance.service_table
    deadlines = np.asarray(instance.deadlines if instance.deadlines is not None else [0] * n, dtype=np.int64)
    weights = np.asarray(instance.weights if instance.weights is not None else [0.0] * n, dtype=float)
    return (
        np.ascontiguousarray(instance.survival),
        np.ascontiguousarray(support),
        np.ascontiguousarray(cdf),
        np.ascontiguousarray(instance.values),
        deadlines,
        weights,
        float(instance.capacity or 0.0),
        int(instance.cardinality or 0),
    )


def _as_policy(policy, instance: Instance):
    if isinstance(policy, PolicySpec):
        return policy.compile(instance)
    return policy


class _Callable:
    def __init__(self, fn):
        self.fn = fn

    def new_run(self):
        return self

    def decide(self, ctx):
        return self.fn(ctx)


def simulate_once(instance: Instance, policy, mode: str = "base", rng: np.random.Generator | None = None) -> RunRecord:
    """One replication through the Python reference path, fully logged.

    ``policy`` is a :class:`PolicySpec`, a compiled policy, any object with
    ``new_run()`` returning something with ``decide(ctx)``, or a plain
    ``decide(ctx)`` callable.
    """
    code = _mode_code(mode, instance)
    rng = rng if rng is not None else np.random.default_rng()
    policy = _as_policy(policy, instance)
    if callable(policy) and not hasattr(policy, "new_run"):
        policy = _Callable(policy)
    run_state = policy.new_run()
    spec = getattr(policy, "spec", None)

    n, H = instance.n, instance.horizon
    surv = instance.survival
    support, cdf = instance.service_table
    dep = rng.random(n)
    svc = rng.random(n)
    run = [False] * n
    free = np.zeros(H, dtype=bool)
    runs: list[RunEntry] = []
    busy_until = 0
    used = 0.0
    failed = False
    t = 1
    while t <= H:
        if busy_until >= t:
            t += 1
            continue
        free[t - 1] = True
        alive = [j for j in range(n) if not run[j] and dep[j] < surv[j, t - 1]]
        if not alive:
            free[t:] = True
            break
        avail = tuple(
            j for j in alive
            if not (code == kernels.MODE_KNAPSACK and used + instance.weights[j] > instance.capacity + WEIGHT_TOL)
            and not (code == kernels.MODE_CARDINALITY and len(runs) >= instance.cardinality)
        )
        if not avail:
            t += 1
            continue
        ctx = PolicyContext(
            t=t,
            available=avail,
            instance=instance,
            rng=rng,
            lp=getattr(spec, "lp", None),
            table=getattr(spec, "table", None),
        )
        choice = run_state.decide(ctx)
        if choice is None:
            t += 1
            continue
        choice = int(choice)
        if choice not in avail:
            raise ContractViolationError(f"policy chose job {choice} at t={t}; available: {avail}")
        k = int(np.argmax(svc[choice] < cdf[choice])) if svc[choice] < cdf[choice, -1] else cdf.shape[1] - 1
        s = int(support[choice, k])
        run[choice] = True
        if hasattr(run_state, "notify_run"):
            run_state.notify_run(choice)
        credited = True
        if code == kernels.MODE_DEADLINE:
            credited = t + s <= instance.deadlines[choice]
        if code in (kernels.MODE_KNAPSACK, kernels.MODE_KNAPSACK_ANALYSIS):
            used += instance.weights[choice]
            if used > instance.capacity + WEIGHT_TOL:
                failed = True
        runs.append(RunEntry(choice, t, s, credited))
        busy_until = t + s - 1
        t += 1
    if failed and code == kernels.MODE_KNAPSACK_ANALYSIS:
        runs = [RunEntry(r.job, r.start, r.service, False) for r in runs]
    total = 0.0
    for r in runs:
        if r.credited:
            total += instance.values[r.job]
    return RunRecord(total, runs, failed, free)


def replication_rng(seed: int, rep: int) -> np.random.Generator:
    return stream(seed, DOMAIN_SIM, rep)


def simulate_many(
    instance: Instance,
    policy,
    mode: str = "base",
    reps: int = 100,
    seed: int = 0,
    backend: str | None = None,
    reference: bool = False,
) -> SimStats:
    """Replicate ``reps`` times with independent per-replication streams.

    Built-in policies go through the kernel backend (``backend`` picks
    ``"cython"`` or ``"python"``; default is the active one).  Custom policies,
    or ``reference=True``, use :func:`simulate_once`.
    """
    if reps < 1:
        raise ConfigurationError("reps must be >= 1")
    code = _mode_code(mode, instance)
    policy = _as_policy(policy, instance)
    if isinstance(policy, CompiledPolicy) and not reference:
        impl = kernels.get_backend(backend)
        surv, support, cdf, values, deadlines, weights, capacity, card_k = _kernel_inputs(instance)
        totals, failed, started, free_counts = impl.simulate_batch(
            policy.code, policy.param, policy.priority, surv, support, cdf, values,
            deadlines, weights, capacity, code, card_k, int(seed), 0, int(reps),
        )
        return SimStats.from_arrays(totals, free_counts, failed, started, seed)

    totals = np.zeros(reps)
    failed = np.zeros(reps, dtype=bool)
    started = np.zeros(reps, dtype=np.int64)
    free_counts = np.zeros(instance.horizon, dtype=np.int64)
    for r in range(reps):
        rec = simulate_once(instance, policy, mode, replication_rng(seed, r))
        totals[r] = rec.total
        failed[r] = rec.failed
        started[r] = rec.started
        free_counts += rec.free
    return SimStats.from_arrays(totals, free_counts, failed, started, seed)


def server_free_profile(stats: SimStats) -> np.ndarray:
    """Empirical ``Pr(server free at t)`` for ``t = 1..H``."""
    return np.asarray(stats.free_frequency, dtype=float)


PolicyFn = Callable[[PolicyContext], "int | None"]
