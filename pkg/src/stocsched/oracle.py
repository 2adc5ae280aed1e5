"""Exact computations on small instances.

Three dynamic programs share the same state at decision times: the time ``t``,
the bitmask of jobs that are still present and have not been run, and (for the
knapsack and cardinality modes) the budget already used.  Busy periods are
skipped by jumping from ``t`` to ``t + s`` directly, so ``busy_until`` never
needs to be stored for the optimisation problems.

* :func:`solve_mdp` computes the optimal online value (idling allowed).
* :func:`evaluate_policy_exact` evaluates any Markov policy on that state.
* :func:`exact_f` propagates the consideration process forward and returns the
  exact attenuation table together with the exact value of the algorithm.

Departures between ``t`` and ``t'`` are handled with a per-job mask transform:
a present job ``i`` is still present at ``t'`` with probability
``p_i(t') / p_i(t)``, independently of the others.
"""

from __future__ import annotations

import itertools
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Mapping

import numpy as np

from .core import Instance
from .errors import ConfigurationError, StateSpaceLimitExceeded
from .policies import _lp_x

MAX_JOBS = 12
DEFAULT_STATE_LIMIT = 5_000_000
EXACT_F_MAX_JOBS = 4
EXACT_F_MAX_HORIZON = 8
WEIGHT_TOL = 1e-12
TIE_TOL = 1e-12

MDP_MODES = ("base", "deadline", "knapsack", "knapsack-analysis", "cardinality")


@dataclass(frozen=True)
class MdpState:
    """Decision-time state.

    ``alive`` lists present, unrun jobs; ``available`` drops those a strict
    budget no longer admits.  ``budget`` is the used weight (knapsack) or the
    number of started jobs (cardinality), ``0`` otherwise.
    """

    t: int
    alive: tuple[int, ...]
    available: tuple[int, ...]
    budget: float = 0

    @property
    def mask(self) -> int:
        m = 0
        for j in self.alive:
            m |= 1 << j
        return m


@dataclass(frozen=True, eq=False)
class MdpSolution:
    value: float
    actions: Mapping[tuple, int | None] = field(repr=False, default_factory=dict)
    idle_states: int = 0
    state_count: int = 0

    def action(self, t: int, alive, budget: float = 0) -> int | None:
        mask = alive if isinstance(alive, int) else sum(1 << j for j in alive)
        return self.actions.get((t, mask, _bkey(budget)))

    def to_dict(self) -> dict:
        table = {
            f"t={t};alive={_mask_str(mask)};budget={b:g}": ("idle" if a is None else a)
            for (t, mask, b), a in sorted(self.actions.items(), key=lambda kv: (kv[0][0], kv[0][2], kv[0][1]))
        }
        return {"value": self.value, "idle_states": self.idle_states, "actions": table}

    def dump(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=1), encoding="utf-8")


def _mask_str(mask: int) -> str:
    return "{" + ",".join(str(j) for j in range(mask.bit_length()) if mask >> j & 1) + "}"


def _bkey(b: float):
    return round(float(b), 9)


class _Model:
    """Shared transition structure of the three dynamic programs."""

    def __init__(self, instance: Instance, mode: str, limit: int):
        if mode not in MDP_MODES:
            raise ConfigurationError(f"unknown mode {mode!r}")
        n, H = instance.n, instance.horizon
        if n > MAX_JOBS:
            raise StateSpaceLimitExceeded(f"exact oracle supports at most {MAX_JOBS} jobs, got {n}")
        self.instance, self.n, self.H = instance, n, H
        # A budget-aware policy never overflows a deterministic capacity, so the
        # failure accounting cannot change the optimum.
        self.mode = "knapsack" if mode == "knapsack-analysis" else mode
        if self.mode == "deadline" and instance.deadlines is None:
            raise ConfigurationError("deadline mode needs deadlines")
        if self.mode == "knapsack" and (instance.weights is None or instance.capacity is None):
            raise ConfigurationError("knapsack mode needs weights and capacity")
        if self.mode == "cardinality" and instance.cardinality is None:
            raise ConfigurationError("cardinality mode needs a cardinality")
        self.budgets = self._budgets()
        self.budget_set = set(self.budgets)
        states = H * (1 << n) * len(self.budgets)
        if states > limit:
            raise StateSpaceLimitExceeded(f"{states} states exceed the limit {limit}")
        self.state_count = states
        self.surv = instance.survival
        self.values = instance.values
        self.services = [
            [(int(s), float(p)) for s, p in zip(job.service.support, job.service.probs) if p > 0]
            for job in instance.jobs
        ]
        self.masks = np.arange(1 << n)

    def _budgets(self):
        if self.mode == "knapsack":
            w, W = self.instance.weights, self.instance.capacity
            sums = {0.0}
            for wj in w:
                sums |= {s + wj for s in sums if s + wj <= W + WEIGHT_TOL}
            return sorted({_bkey(s) for s in sums})
        if self.mode == "cardinality":
            return list(range(self.instance.cardinality + 1))
        return [0]

    def fits(self, j: int, b) -> bool:
        if self.mode == "knapsack":
            return b + self.instance.weights[j] <= self.instance.capacity + WEIGHT_TOL
        if self.mode == "cardinality":
            return b < self.instance.cardinality
        return True

    def after(self, j: int, b):
        if self.mode == "knapsack":
            return _bkey(b + self.instance.weights[j])
        if self.mode == "cardinality":
            return b + 1
        return b

    def reward(self, j: int, t: int) -> float:
        v = self.values[j]
        if self.mode == "deadline":
            return v * self.instance.jobs[j].service.cdf(self.instance.deadlines[j] - t)
        return v

    def keep_prob(self, t: int, t2: int) -> np.ndarray:
        """Per-job probability to be present at ``t2`` given present at ``t``."""
        p_now = self.surv[:, t - 1]
        p_then = self.surv[:, t2 - 1]
        return np.divide(p_then, p_now, out=np.zeros(self.n), where=p_now > 0)

    def survive(self, V: np.ndarray, t: int, t2: int) -> np.ndarray:
        """``out[mask] = E[V(survivors of mask at t2)]`` for jobs present at ``t``."""
        if t2 > self.H:
            return np.zeros(1 << self.n)
        q = self.keep_prob(t, t2)
        n = self.n
        W = V.reshape((2,) * n).copy() if n else V.copy()
        for j in range(n):
            if q[j] == 1.0:
                continue
            ax = n - 1 - j
            lo = [slice(None)] * n
            hi = [slice(None)] * n
            lo[ax], hi[ax] = 0, 1
            W[tuple(hi)] = q[j] * W[tuple(hi)] + (1.0 - q[j]) * W[tuple(lo)]
        return W.reshape(-1)

    def present(self, t: int) -> int:
        return sum(1 << j for j in range(self.n) if self.surv[j, t - 1] > 0)

    def initial_mask(self) -> int:
        return self.present(1)


def _backward(model: _Model, choose: Callable):
    """Generic backward pass; ``choose(t, b, Q)`` picks a value per mask from the action values."""
    n, H = model.n, model.H
    N = 1 << n
    V = {t: {} for t in range(1, H + 2)}
    for b in model.budgets:
        V[H + 1][b] = np.zeros(N)
    for t in range(H, 0, -1):
        cache = {}

        def future(t2, b2):
            key = (t2, b2)
            if key not in cache:
                cache[key] = model.survive(V[t2][b2], t, t2) if t2 <= H else np.zeros(N)
            return cache[key]

        for b in model.budgets:
            idle = future(t + 1, b)
            Q = {}
            for j in range(n):
                if not model.fits(j, b):
                    continue
                b2 = model.after(j, b)
                if b2 not in model.budget_set:
                    # only reachable if j had been run already
                    continue
                cont = np.zeros(N)
                for s, ps in model.services[j]:
                    cont += ps * future(t + s, b2)
                q = np.full(N, -np.inf)
                has = (model.masks >> j) & 1 == 1
                q[has] = model.reward(j, t) + cont[model.masks[has] ^ (1 << j)]
                Q[j] = q
            V[t][b] = choose(t, b, idle, Q)
    return V


def solve_mdp(instance: Instance, mode: str = "base", limit: int = DEFAULT_STATE_LIMIT,
              record_actions: bool = True) -> MdpSolution:
    """Optimal expected value of an online policy, by backward induction.

    ``knapsack-analysis`` is solved as ``knapsack``: an optimal policy knows the
    used weight and never starts a job that overflows.
    """
    model = _Model(instance, mode, limit)
    actions: dict = {}
    idle_count = 0

    def choose(t, b, idle, Q):
        nonlocal idle_count
        job_best = np.full(len(idle), -np.inf)
        job_arg = np.full(len(idle), -1)
        for j in sorted(Q):
            better = Q[j] > job_best + TIE_TOL
            job_best = np.where(better, Q[j], job_best)
            job_arg[better] = j
        # run a job unless idling is strictly better
        use_idle = idle > job_best + TIE_TOL
        present = model.present(t)
        relevant = (model.masks & ~present) == 0
        idle_count += int(np.sum(use_idle & np.isfinite(job_best) & relevant))
        if record_actions:
            arg = np.where(use_idle, -1, job_arg)
            for mask in np.flatnonzero(relevant)[1:]:
                a = int(arg[mask])
                actions[(t, int(mask), _bkey(b))] = None if a < 0 else a
        return np.maximum(idle, job_best)

    V = _backward(model, choose)
    value = float(V[1][model.budgets[0]][model.initial_mask()])
    return MdpSolution(value, actions, idle_count, model.state_count)


def evaluate_policy_exact(instance: Instance, policy: Callable[[MdpState], object], mode: str = "base",
                          limit: int = DEFAULT_STATE_LIMIT) -> float:
    """Exact expected value of a Markov policy.

    ``policy(state)`` returns a job id, ``None`` (idle), or a mapping from
    actions to probabilities for randomized policies.
    """
    if mode == "knapsack-analysis":
        raise ConfigurationError("exact evaluation supports strict knapsack accounting only")
    model = _Model(instance, mode, limit)

    def choose(t, b, idle, Q):
        present = model.present(t)
        out = np.zeros(len(idle))
        for mask in range(1, len(idle)):
            if mask & ~present:
                continue
            alive = tuple(j for j in range(model.n) if mask >> j & 1)
            avail = tuple(j for j in alive if model.fits(j, b))
            if not avail:
                out[mask] = idle[mask]
                continue
            act = policy(MdpState(t, alive, avail, b))
            dist = act if isinstance(act, Mapping) else {act: 1.0}
            val = 0.0
            for a, pa in dist.items():
                if pa == 0:
                    continue
                if a is None:
                    val += pa * idle[mask]
                elif a in avail:
                    # a missing entry marks a budget/mask pair that cannot occur
                    val += pa * Q[a][mask] if a in Q else 0.0
                else:
                    raise ConfigurationError(f"policy chose unavailable job {a} at t={t}")
            out[mask] = val
        return out

    V = _backward(model, choose)
    return float(V[1][model.budgets[0]][model.initial_mask()])


def greedy_markov(instance: Instance) -> Callable[[MdpState], int | None]:
    """Greedy as a Markov policy: highest value, lowest id on ties."""
    v = instance.values

    def decide(state: MdpState):
        best, choice = -np.inf, None
        for j in state.available:
            if v[j] > best:
                best, choice = v[j], j
        return choice

    return decide


def priority_markov(priority) -> Callable[[MdpState], int | None]:
    """Static-order policy: highest key first, lowest id on ties."""
    key = np.asarray(priority, dtype=float)

    def decide(state: MdpState):
        best, choice = -np.inf, None
        for j in state.available:
            if key[j] > best:
                best, choice = key[j], j
        return choice

    return decide


def uniform_markov(state: MdpState):
    k = len(state.available)
    return {j: 1.0 / k for j in state.available}


def safe_markov(x) -> Callable[[MdpState], object]:
    x = np.asarray(getattr(x, "x", x), dtype=float)

    def decide(state: MdpState):
        w = {j: max(x[j, state.t - 1], 0.0) for j in state.available}
        tot = sum(w.values())
        if tot <= 0:
            return None
        return {j: wj / tot for j, wj in w.items()}

    return decide


@dataclass(frozen=True)
class ExactAlgResult:
    """Exact forward analysis of the consideration algorithm."""

    f: np.ndarray
    server_free: np.ndarray
    value: float
    max_raw_prob: float
    raw_probs: np.ndarray = field(repr=False, default=None)


def exact_f(instance: Instance, lp, atten_const: float = 2.0) -> ExactAlgResult:
    """Exact attenuation table by forward propagation.

    The state at time ``t`` is ``(U, busy_until)``, where ``U`` holds the jobs
    that are present and were never considered.  At a free step every job of
    ``U`` joins the consideration set with probability
    ``x[j,t] / (c p_j(t) f[j,t])`` (clamped), using the ``f`` row of the same
    time, which is known before the draws.  Then
    ``f[j,t] = Pr(j in U, server free) / p_j(t)``.
    """
    n, H = instance.n, instance.horizon
    if n > EXACT_F_MAX_JOBS or H > EXACT_F_MAX_HORIZON:
        raise StateSpaceLimitExceeded(
            f"exact_f supports n <= {EXACT_F_MAX_JOBS} and H <= {EXACT_F_MAX_HORIZON}"
        )
    x = _lp_x(lp, n, H)
    p = instance.survival
    v = instance.values
    services = [
        [(int(s), float(q)) for s, q in zip(job.service.support, job.service.probs) if q > 0]
        for job in instance.jobs
    ]
    f = np.ones((n, H))
    free = np.zeros(H)
    raw = np.zeros((n, H))
    value = 0.0
    dist: dict[tuple[int, int], float] = {((1 << n) - 1, 0): 1.0}

    for t in range(1, H + 1):
        joint = np.zeros(n)
        for (U, busy), pr in dist.items():
            if busy < t:
                free[t - 1] += pr
                for j in range(n):
                    if U >> j & 1:
                        joint[j] += pr
        for j in range(n):
            f[j, t - 1] = joint[j] / p[j, t - 1] if p[j, t - 1] > 0 else 1.0
        f[:, t - 1] = np.minimum(f[:, t - 1], 1.0)
        denom = atten_const * p[:, t - 1] * f[:, t - 1]
        r = np.divide(x[:, t - 1], denom, out=np.zeros(n), where=denom > 0)
        r[(denom <= 0) & (x[:, t - 1] > 0)] = np.inf
        raw[:, t - 1] = r
        pi = np.clip(r, 0.0, 1.0)

        after: dict[tuple[int, int], float] = {}
        for (U, busy), pr in dist.items():
            if busy >= t:
                _add(after, (U, busy), pr)
                continue
            members = [j for j in range(n) if U >> j & 1]
            for picks in itertools.product((0, 1), repeat=len(members)):
                pc = pr
                C = []
                for j, c in zip(members, picks):
                    pc *= pi[j] if c else 1.0 - pi[j]
                    if c:
                        C.append(j)
                if pc == 0.0:
                    continue
                if not C:
                    _add(after, (U, busy), pc)
                    continue
                run = max(C, key=lambda j: (v[j], -j))
                value += pc * v[run]
                U2 = U
                for j in C:
                    U2 &= ~(1 << j)
                for s, ps in services[run]:
                    _add(after, (U2, min(t + s - 1, H)), pc * ps)
        if t == H:
            break
        keep = np.divide(p[:, t], p[:, t - 1], out=np.zeros(n), where=p[:, t - 1] > 0)
        dist = {}
        for (U, busy), pr in after.items():
            members = [j for j in range(n) if U >> j & 1]
            for picks in itertools.product((0, 1), repeat=len(members)):
                pc = pr
                U2 = 0
                for j, c in zip(members, picks):
                    pc *= keep[j] if c else 1.0 - keep[j]
                    if c:
                        U2 |= 1 << j
                if pc > 0.0:
                    _add(dist, (U2, busy), pc)

    finite = raw[np.isfinite(raw)]
    max_raw = float(finite.max()) if finite.size else 0.0
    if np.any(np.isinf(raw)):
        max_raw = float("inf")
    return ExactAlgResult(f, free, value, max_raw, raw)


def _add(d: dict, key, pr: float) -> None:
    d[key] = d.get(key, 0.0) + pr
