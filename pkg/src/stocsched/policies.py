"""Scheduling policies.

Every built-in policy reduces to one of four kernel kinds:

* priority  -- run the available job with the highest static key (Greedy uses the values)
* uniform   -- uniformly random available job (UR)
* weighted  -- categorical draw with weights ``x*[j, t]`` (Safe)
* consider  -- independent consideration set with per-(job, time) probabilities,
  highest value wins (ConSet, SimAlg)

For the consideration kinds the probability table only depends on ``(j, t)``,
so it is computed once per instance and shared by the kernels and the
Python reference path.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import kernels
from .core import Instance
from .errors import ConfigurationError

POLICY_NAMES = ("greedy", "ur", "safe", "conset", "simalg")
DISPLAY_NAMES = {
    "greedy": "Greedy",
    "ur": "UR",
    "safe": "Safe",
    "conset": "ConSet",
    "simalg": "SimAlg",
    "priority": "Priority",
}


@dataclass(frozen=True)
class PolicyContext:
    t: int
    available: tuple[int, ...]
    instance: Instance
    rng: np.random.Generator
    lp: object = None
    table: object = None
    server_free: bool = True


@dataclass(frozen=True, eq=False)
class PolicySpec:
    """Immutable policy template.

    ``epsilon`` switches SimAlg into its sampled-table mode: entries of ``x*``
    below ``epsilon / (n**2 T v_j)`` are ignored and probabilities are scaled by
    ``(1 - epsilon)**2``.  ``epsilon = 0`` uses the table as exact.
    """

    kind: str
    lp: object = None
    table: object = None
    epsilon: float = 0.0
    atten_const: float = 2.0
    priority: Sequence[float] | None = None
    label: str | None = None

    def __post_init__(self):
        if self.kind not in POLICY_NAMES + ("priority",):
            raise ConfigurationError(f"unknown policy {self.kind!r}")
        if self.kind in ("safe", "conset", "simalg") and self.lp is None:
            raise ConfigurationError(f"{self.kind} needs an LP solution")
        if self.kind == "simalg" and self.table is None:
            raise ConfigurationError("simalg needs an attenuation table")
        if self.kind == "priority" and self.priority is None:
            raise ConfigurationError("priority policy needs a priority vector")

    @property
    def name(self) -> str:
        return self.label or DISPLAY_NAMES[self.kind]

    def compile(self, instance: Instance) -> "CompiledPolicy":
        n, H = instance.n, instance.horizon
        param = np.zeros((n, H))
        prio = np.zeros(n)
        if self.kind == "greedy":
            code, prio = kernels.KIND_PRIORITY, instance.values.copy()
        elif self.kind == "priority":
            code, prio = kernels.KIND_PRIORITY, np.asarray(self.priority, dtype=float)
        elif self.kind == "ur":
            code = kernels.KIND_UNIFORM
        elif self.kind == "safe":
            code, param = kernels.KIND_WEIGHTED, _lp_x(self.lp, n, H)
        elif self.kind == "conset":
            code, param = kernels.KIND_CONSIDER, conset_probabilities(instance, _lp_x(self.lp, n, H))
        else:
            code = kernels.KIND_CONSIDER
            param = simalg_probabilities(
                instance, _lp_x(self.lp, n, H), _table_f(self.table, n, H), self.epsilon, self.atten_const
            )
        return CompiledPolicy(self.name, self.kind, code, np.ascontiguousarray(param), np.ascontiguousarray(prio), self)


@dataclass(frozen=True, eq=False)
class CompiledPolicy:
    name: str
    kind: str
    code: int
    param: np.ndarray
    priority: np.ndarray
    spec: PolicySpec | None = field(default=None, repr=False)

    def new_run(self) -> "PolicyRun":
        return PolicyRun(self)


class PolicyRun:
    """Per-replication state; mirrors the kernel decision rules exactly."""

    def __init__(self, policy: CompiledPolicy):
        self.policy = policy
        self.considered: set[int] = set()

    def decide(self, ctx: PolicyContext) -> int | None:
        pol = self.policy
        col = ctx.t - 1
        avail = ctx.available
        if not avail:
            return None
        if pol.code == kernels.KIND_PRIORITY:
            return _argmax_first(avail, pol.priority)
        if pol.code == kernels.KIND_UNIFORM:
            u = ctx.rng.random()
            idx = min(int(u * len(avail)), len(avail) - 1)
            return avail[idx]
        if pol.code == kernels.KIND_WEIGHTED:
            u = ctx.rng.random()
            return _categorical(avail, pol.param[:, col], u)
        eligible = [j for j in avail if j not in self.considered]
        if not eligible:
            return None
        draws = ctx.rng.random(len(eligible))
        chosen = [j for j, u in zip(eligible, draws) if u < pol.param[j, col]]
        self.considered.update(chosen)
        return _argmax_first(chosen, ctx.instance.values)

    def notify_run(self, job: int) -> None:
        self.considered.add(job)


def _argmax_first(jobs, keys):
    best, choice = -np.inf, None
    for j in jobs:
        if keys[j] > best:
            best, choice = keys[j], j
    return choice


def _categorical(jobs, weights, u):
    total = 0.0
    for j in jobs:
        total += weights[j]
    if not total > 0.0:
        return None
    target, acc, choice = u * total, 0.0, None
    for j in jobs:
        w = weights[j]
        if w > 0.0:
            acc += w
            choice = j
            if acc > target:
                break
    return choice


def _lp_x(lp, n, H) -> np.ndarray:
    x = np.asarray(getattr(lp, "x", lp), dtype=float)
    if x.shape != (n, H):
        raise ConfigurationError(f"LP solution has shape {x.shape}, expected {(n, H)}")
    return np.clip(x, 0.0, None)


def _table_f(table, n, H) -> np.ndarray:
    f = np.asarray(getattr(table, "f", table), dtype=float)
    if f.shape != (n, H):
        raise ConfigurationError(f"attenuation table has shape {f.shape}, expected {(n, H)}")
    return f


def conset_probabilities(instance: Instance, x: np.ndarray) -> np.ndarray:
    """``x[j,t] / (p_j(t) (1 - sum_{tau<t} x[j,tau]/p_j(tau)))`` clamped to [0, 1].

    A non-positive denominator gives probability 1 when ``x > 0`` and 0 otherwise.
    """
    p = instance.survival
    ratio = np.divide(x, p, out=np.zeros_like(x), where=p > 0)
    used_before = np.cumsum(ratio, axis=1) - ratio
    denom = p * (1.0 - used_before)
    out = np.divide(x, denom, out=np.zeros_like(x), where=denom > 0)
    out[(denom <= 0) & (x > 0)] = 1.0
    return np.clip(out, 0.0, 1.0)


def small_x_threshold(instance: Instance, epsilon: float) -> np.ndarray:
    """Per-job cut-off ``epsilon / (n**2 T v_j)`` below which ``x*`` is ignored."""
    n, T = instance.n, instance.max_service
    return epsilon / (n**2 * T * instance.values)


def simalg_probabilities(
    instance: Instance,
    x: np.ndarray,
    f: np.ndarray,
    epsilon: float = 0.0,
    atten_const: float = 2.0,
) -> np.ndarray:
    """Consideration probabilities ``x (1-eps)**2 / (c p f)``, clamped to [0, 1]."""
    p = instance.survival
    if epsilon > 0:
        x = np.where(x < small_x_threshold(instance, epsilon)[:, None], 0.0, x)
        scale = (1.0 - epsilon) ** 2
    else:
        scale = 1.0
    denom = atten_const * p * f
    out = np.divide(x * scale, denom, out=np.zeros_like(x), where=denom > 0)
    out[(denom <= 0) & (x > 0)] = 1.0
    return np.clip(out, 0.0, 1.0)


def greedy(instance=None) -> PolicySpec:
    return PolicySpec("greedy")


def uniform_random() -> PolicySpec:
    return PolicySpec("ur")


def make_policy(name: str, lp=None, table=None, epsilon: float = 0.0, atten_const: float = 2.0) -> PolicySpec:
    name = name.lower()
    return PolicySpec(name, lp=lp if name in ("safe", "conset", "simalg") else None,
                      table=table if name == "simalg" else None,
                      epsilon=epsilon, atten_const=atten_const)


def consideration_value(alpha: Sequence[float], values: Sequence[float]) -> float:
    """Expected best value when job ``j`` joins the set independently with prob ``alpha[j]``.

    Jobs are scanned by decreasing value: ``sum_j v_j a_j prod_{i<j} (1 - a_i)``.
    """
    a = np.asarray(alpha, dtype=float)
    v = np.asarray(values, dtype=float)
    order = np.argsort(-v, kind="stable")
    a, v = a[order], v[order]
    none_before = np.concatenate(([1.0], np.cumprod(1.0 - a)[:-1]))
    return float((v * a * none_before).sum())
