"""Time-indexed LP relaxation and its deadline / knapsack / cardinality variants.

Variable ``x[j, t]`` is read as the probability that a policy starts job ``j``
at time ``t``.  Rows:

* ``JobOnce(j)``:    ``sum_t x[j, t] / p_j(t) <= 1``
* ``ServerBusy(t)``: ``sum_{tau <= t} sum_j x[j, tau] * Pr(S_j > t - tau) <= 1``
* ``Knapsack``:      ``sum_{j, t} w_j x[j, t] <= W``
* ``Cardinality``:   ``sum_{j, t} x[j, t] <= k``

Cells with ``p_j(t) = 0`` have no variable.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field, replace
from enum import Enum
from pathlib import Path
from typing import Sequence

import numpy as np
import scipy.sparse as sp
from scipy.optimize import linprog

from .core import Instance
from .errors import DimensionMismatchError, InvalidInstanceError, MissingDeadlinesError

log = logging.getLogger(__name__)

FEAS_TOL = 1e-7


class LpStatus(str, Enum):
    OPTIMAL = "Optimal"
    INFEASIBLE = "Infeasible"
    NUMERICAL_ISSUE = "NumericalIssue"


@dataclass(frozen=True)
class LpModel:
    num_jobs: int
    horizon: int
    var_job: np.ndarray
    var_time: np.ndarray  # 1-based
    objective: np.ndarray
    matrix: sp.csr_matrix
    rhs: np.ndarray
    row_tags: tuple[tuple, ...]
    kind: str = "sched"

    @property
    def num_vars(self) -> int:
        return len(self.var_job)

    def count(self, tag: str) -> int:
        return sum(1 for r in self.row_tags if r[0] == tag)

    def to_matrix(self, values: np.ndarray) -> np.ndarray:
        x = np.zeros((self.num_jobs, self.horizon))
        x[self.var_job, self.var_time - 1] = values
        return x

    def from_matrix(self, x: np.ndarray) -> np.ndarray:
        return np.asarray(x)[self.var_job, self.var_time - 1]


@dataclass(frozen=True)
class LpSolution:
    x: np.ndarray
    objective: float
    status: LpStatus = LpStatus.OPTIMAL
    max_residual: float = 0.0

    def to_dict(self) -> dict:
        return {
            "objective": float(self.objective),
            "x": self.x.tolist(),
            "status": LpStatus(self.status).value,
            "max_residual": float(self.max_residual),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "LpSolution":
        return cls(
            np.asarray(data["x"], dtype=float),
            float(data["objective"]),
            LpStatus(data.get("status", "Optimal")),
            float(data.get("max_residual", 0.0)),
        )

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_dict()), encoding="utf-8")

    @classmethod
    def load(cls, path: str | Path) -> "LpSolution":
        return cls.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


def _check_curves(instance: Instance) -> None:
    for j in instance.jobs:
        if len(j.departure) < instance.horizon:
            raise InvalidInstanceError(f"job {j.id}: survival curve shorter than horizon")


def _assemble(instance, var_job, var_time, objective, last_start, kind):
    n, H = instance.n, instance.horizon
    p = instance.survival
    tails = instance.service_tails
    rows, cols, vals = [], [], []
    tags = []
    for j in range(n):
        idx = np.flatnonzero(var_job == j)
        rows.extend([len(tags)] * len(idx))
        cols.extend(idx)
        vals.extend(1.0 / p[j, var_time[idx] - 1])
        tags.append(("JobOnce", j))
    for t in range(1, H + 1):
        # variables started at tau <= t whose service may still be running at t
        idx = np.flatnonzero((var_time <= t) & (var_time <= last_start[var_job]))
        coef = tails[var_job[idx], t - var_time[idx]]
        keep = coef > 0
        rows.extend([len(tags)] * int(keep.sum()))
        cols.extend(idx[keep])
        vals.extend(coef[keep])
        tags.append(("ServerBusy", t))
    matrix = sp.csr_matrix((vals, (rows, cols)), shape=(len(tags), len(var_job)))
    return LpModel(
        num_jobs=n,
        horizon=H,
        var_job=var_job,
        var_time=var_time,
        objective=objective,
        matrix=matrix,
        rhs=np.ones(len(tags)),
        row_tags=tuple(tags),
        kind=kind,
    )


def build_lp_sched(instance: Instance) -> LpModel:
    _check_curves(instance)
    jj, tt = np.nonzero(instance.survival > 0)
    var_job, var_time = jj.astype(np.int64), (tt + 1).astype(np.int64)
    objective = instance.values[var_job]
    last = np.full(instance.n, instance.horizon)
    return _assemble(instance, var_job, var_time, objective, last, "sched")


def build_lp_deadline(instance: Instance) -> LpModel:
    """Deadline variant: a start at ``t`` pays ``v_j * Pr(S_j <= B_j - t)``."""
    _check_curves(instance)
    if instance.deadlines is None:
        raise MissingDeadlinesError("instance has no deadlines")
    B = np.asarray(instance.deadlines)
    t_grid = np.arange(1, instance.horizon + 1)
    alive = (instance.survival > 0) & (t_grid[None, :] <= B[:, None])
    jj, tt = np.nonzero(alive)
    var_job, var_time = jj.astype(np.int64), (tt + 1).astype(np.int64)
    pay = np.array(
        [instance.jobs[j].service.cdf(int(B[j] - t)) for j, t in zip(var_job, var_time)]
    )
    objective = instance.values[var_job] * pay if len(var_job) else np.zeros(0)
    return _assemble(instance, var_job, var_time, objective, B, "deadline")


def _append_row(model: LpModel, coef: np.ndarray, bound: float, tag: tuple) -> LpModel:
    row = sp.csr_matrix(np.asarray(coef, dtype=float)[None, :])
    return replace(
        model,
        matrix=sp.vstack([model.matrix, row], format="csr"),
        rhs=np.append(model.rhs, float(bound)),
        row_tags=model.row_tags + (tag,),
    )


def with_knapsack(model: LpModel, weights: Sequence[float], capacity: float) -> LpModel:
    w = np.asarray(weights, dtype=float)
    if len(w) != model.num_jobs:
        raise DimensionMismatchError("one weight per job is required")
    return _append_row(model, w[model.var_job], capacity, ("Knapsack",))


def with_cardinality(model: LpModel, k: int) -> LpModel:
    return _append_row(model, np.ones(model.num_vars), k, ("Cardinality",))


def build_lp(instance: Instance, mode: str = "base") -> LpModel:
    """Model for a simulation mode (``base``, ``deadline``, ``knapsack``, ``cardinality``)."""
    if mode == "deadline":
        return build_lp_deadline(instance)
    model = build_lp_sched(instance)
    if mode == "knapsack":
        if instance.weights is None or instance.capacity is None:
            raise InvalidInstanceError("knapsack mode needs weights and capacity")
        model = with_knapsack(model, instance.weights, instance.capacity)
    elif mode == "cardinality":
        if instance.cardinality is None:
            raise InvalidInstanceError("cardinality mode needs a cardinality")
        model = with_cardinality(model, instance.cardinality)
    elif mode != "base":
        raise InvalidInstanceError(f"unknown mode {mode!r}")
    return model


def model_residual(model: LpModel, values: np.ndarray) -> float:
    if model.matrix.shape[0] == 0:
        return float(max(0.0, -values.min(initial=0.0)))
    viol = model.matrix @ values - model.rhs
    return float(max(0.0, viol.max(initial=0.0), -values.min(initial=0.0)))


def solve_lp(model: LpModel) -> LpSolution:
    """Solve with HiGHS and report the optimum as an ``(n, H)`` matrix."""
    if model.num_vars == 0:
        return LpSolution(np.zeros((model.num_jobs, model.horizon)), 0.0)
    # Column equilibration: JobOnce coefficients are 1/p_j(t) and can reach
    # 1e25 for fast-leaving jobs.  Solving in y = x * max|A_col| keeps every
    # coefficient in [0, 1] without changing the feasible set.
    col_max = np.asarray(abs(model.matrix).max(axis=0).todense()).ravel()
    scale = np.divide(1.0, col_max, out=np.ones_like(col_max), where=col_max > 0)
    res = linprog(
        -(model.objective * scale),
        A_ub=model.matrix @ sp.diags(scale),
        b_ub=model.rhs,
        bounds=(0, None),
        method="highs",
        options={"primal_feasibility_tolerance": 1e-10, "dual_feasibility_tolerance": 1e-10},
    )
    if res.status == 2:
        return LpSolution(np.zeros((model.num_jobs, model.horizon)), float("nan"), LpStatus.INFEASIBLE, np.inf)
    if res.status != 0 or res.x is None:
        log.warning("HiGHS returned status %s: %s", res.status, res.message)
        return LpSolution(np.zeros((model.num_jobs, model.horizon)), float("nan"), LpStatus.NUMERICAL_ISSUE, np.inf)
    values = np.clip(res.x, 0.0, None) * scale
    resid = model_residual(model, values)
    if resid > FEAS_TOL:
        # pull the point back inside the feasible region; x = 0 is always feasible
        scale = 1.0 / (1.0 + resid)
        values = values * scale
        resid = model_residual(model, values)
    status = LpStatus.OPTIMAL if resid <= FEAS_TOL else LpStatus.NUMERICAL_ISSUE
    return LpSolution(
        model.to_matrix(values),
        float(model.objective @ values),
        status,
        resid,
    )


@dataclass(frozen=True)
class FeasibilityReport:
    job_residuals: np.ndarray
    server_residuals: np.ndarray
    extra_residuals: dict = field(default_factory=dict)
    support_residual: float = 0.0

    @property
    def max_residual(self) -> float:
        parts = [0.0, self.support_residual, *self.extra_residuals.values()]
        parts.append(float(self.job_residuals.max(initial=0.0)))
        parts.append(float(self.server_residuals.max(initial=0.0)))
        return max(parts)

    @property
    def feasible(self) -> bool:
        return self.max_residual <= FEAS_TOL


def check_feasibility(instance: Instance, x: np.ndarray, mode: str = "base") -> FeasibilityReport:
    """Row violations of ``x`` against the LP built for ``mode``, computed from the instance."""
    x = np.asarray(x, dtype=float)
    n, H = instance.n, instance.horizon
    if x.shape != (n, H):
        raise DimensionMismatchError(f"x has shape {x.shape}, expected {(n, H)}")
    p = instance.survival
    allowed = p > 0
    if mode == "deadline":
        if instance.deadlines is None:
            raise MissingDeadlinesError("instance has no deadlines")
        allowed &= np.arange(1, H + 1)[None, :] <= np.asarray(instance.deadlines)[:, None]
    support_res = float(np.abs(x[~allowed]).max(initial=0.0))
    neg = float(max(0.0, -x.min()))
    xa = np.where(allowed, x, 0.0)
    ratio = np.divide(xa, p, out=np.zeros_like(xa), where=allowed)
    job_res = np.maximum(ratio.sum(axis=1) - 1.0, 0.0)
    tails = instance.service_tails
    load = np.zeros(H)
    for t in range(1, H + 1):
        taus = np.arange(1, t + 1)
        load[t - 1] = float((xa[:, :t] * tails[:, t - taus]).sum())
    server_res = np.maximum(load - 1.0, 0.0)
    extra = {"nonnegativity": neg}
    if mode == "knapsack":
        w = np.asarray(instance.weights)
        extra["knapsack"] = max(0.0, float((w[:, None] * xa).sum()) - instance.capacity)
    elif mode == "cardinality":
        extra["cardinality"] = max(0.0, float(xa.sum()) - instance.cardinality)
    return FeasibilityReport(job_res, server_res, extra, support_res)


def lp_objective(instance: Instance, x: np.ndarray, mode: str = "base") -> float:
    """Objective of a given ``x`` under the base or deadline objective."""
    x = np.asarray(x, dtype=float)
    if mode == "deadline":
        B = instance.deadlines
        coef = np.array(
            [
                [instance.jobs[j].service.cdf(B[j] - t) if t <= B[j] else 0.0 for t in range(1, instance.horizon + 1)]
                for j in range(instance.n)
            ]
        )
        return float((instance.values[:, None] * coef * x).sum())
    return float((instance.values[:, None] * x).sum())


def write_lp_file(model: LpModel, path: str | Path) -> None:
    """Export in CPLEX LP text format for cross-checking with external solvers."""
    names = [f"x_{j}_{t}" for j, t in zip(model.var_job, model.var_time)]

    def expr(coefs, cols):
        terms = [f"{c:+.17g} {names[k]}" for c, k in zip(coefs, cols)]
        return " ".join(terms) if terms else "0 " + (names[0] if names else "dummy")

    lines = ["\\ time-indexed scheduling relaxation", "Maximize"]
    lines.append(" obj: " + expr(model.objective, range(model.num_vars)))
    lines.append("Subject To")
    m = model.matrix.tocsr()
    for r, tag in enumerate(model.row_tags):
        lo, hi = m.indptr[r], m.indptr[r + 1]
        label = "_".join(str(p) for p in tag)
        lines.append(f" {label}: {expr(m.data[lo:hi], m.indices[lo:hi])} <= {model.rhs[r]:.17g}")
    lines.append("Bounds")
    lines.extend(f" {nm} >= 0" for nm in names)
    lines.append("End")
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")
