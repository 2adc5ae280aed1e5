"""Monte-Carlo estimation of the attenuation table.

``f[j, t]`` is the probability that job ``j`` has not been considered before
``t`` and the server is free at ``t``, given that ``j`` is still available at
``t``.  Row ``t`` is estimated from simulations of the consideration process
truncated at ``t``, which only needs rows ``< t``; so rows are filled in order.
"""

from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import kernels
from .core import Instance
from .errors import ConfigurationError, InvalidParameterError
from .lp import LpSolution, lp_objective
from .policies import _lp_x, simalg_probabilities, small_x_threshold

log = logging.getLogger(__name__)

ESTIMATORS = ("conditional", "joint")


@dataclass(frozen=True, eq=False)
class AttenuationTable:
    f: np.ndarray
    M: int
    epsilon: float
    num: np.ndarray | None = field(default=None, repr=False)
    den: np.ndarray | None = field(default=None, repr=False)
    estimator: str = "conditional"

    def __post_init__(self):
        f = np.asarray(self.f, dtype=float)
        if f.ndim != 2:
            raise InvalidParameterError("attenuation table must be a matrix")
        if np.any(f < 0) or np.any(f > 1):
            raise InvalidParameterError("attenuation entries must lie in [0, 1]")
        object.__setattr__(self, "f", f)

    @property
    def fallback(self) -> np.ndarray:
        """Cells that defaulted to 1 because no simulation had the job alive."""
        if self.den is None:
            return np.zeros_like(self.f, dtype=bool)
        mask = self.den == 0
        mask[:, 0] = False
        return mask

    def to_dict(self) -> dict:
        return {"epsilon": self.epsilon, "M": self.M, "f": self.f.tolist()}

    @classmethod
    def from_dict(cls, data: dict) -> "AttenuationTable":
        try:
            return cls(np.asarray(data["f"], dtype=float), int(data["M"]), float(data["epsilon"]))
        except KeyError as exc:
            raise InvalidParameterError(f"attenuation JSON lacks field {exc}") from None

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict()), encoding="utf-8")

    @classmethod
    def load(cls, path) -> "AttenuationTable":
        return cls.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


def default_budget(n: int, T: int, v_max: float, epsilon: float) -> int:
    """Simulations per row: ``ceil(2 n^2 T v_max mu / eps)`` with ``mu = 3 ln(2/delta) / eps^2``, ``delta = eps / (n^2 T)``."""
    if not 0 < epsilon < 1:
        raise InvalidParameterError("epsilon must lie in (0, 1)")
    delta = epsilon / (n**2 * T)
    mu = 3.0 * math.log(2.0 / delta) / epsilon**2
    return math.ceil(2 * n**2 * T * v_max * mu / epsilon)


def threshold_lp(lp: LpSolution, instance: Instance, epsilon: float, mode: str = "base") -> LpSolution:
    """Zero every ``x[j, t] < epsilon / (n^2 T v_j)``; the objective is recomputed under ``mode``."""
    if not 0 < epsilon < 1:
        raise InvalidParameterError("epsilon must lie in (0, 1)")
    x = np.asarray(lp.x, dtype=float)
    x = np.where(x < small_x_threshold(instance, epsilon)[:, None], 0.0, x)
    obj_mode = "deadline" if mode == "deadline" else "base"
    return LpSolution(x, lp_objective(instance, x, obj_mode), lp.status, lp.max_residual)


def estimate_f(
    instance: Instance,
    lp,
    epsilon: float = 0.0,
    M: int = 1000,
    seed: int = 0,
    estimator: str = "conditional",
    atten_const: float = 2.0,
    backend: str | None = None,
) -> AttenuationTable:
    """Estimate the attenuation table row by row.

    Parameters
    ----------
    lp
        An :class:`LpSolution` or a bare ``n x H`` matrix.
    epsilon
        Sampled-mode parameter used inside the simulated process (small-x
        cut-off and ``(1 - eps)^2`` scaling).  ``0`` simulates the exact
        consideration probabilities.
    M
        Simulations per row.
    estimator
        ``"conditional"`` divides by the number of runs where the job is
        alive at ``t``; ``"joint"`` divides by ``M``.
    """
    if M < 1:
        raise ConfigurationError("M must be >= 1")
    if estimator not in ESTIMATORS:
        raise ConfigurationError(f"unknown estimator {estimator!r}; choose from {ESTIMATORS}")
    n, H = instance.n, instance.horizon
    x = _lp_x(lp, n, H)
    impl = kernels.get_backend(backend)
    surv = np.ascontiguousarray(instance.survival)
    support, cdf = instance.service_table
    values = np.ascontiguousarray(instance.values)

    f = np.ones((n, H))
    num = np.zeros((n, H), dtype=np.int64)
    den = np.zeros((n, H), dtype=np.int64)
    for t in range(2, H + 1):
        probs = np.ascontiguousarray(simalg_probabilities(instance, x, f, epsilon, atten_const))
        cnt, alive = impl.attenuation_counts(probs, t, surv, support, cdf, values, int(M), int(seed))
        num[:, t - 1], den[:, t - 1] = cnt, alive
        d = alive if estimator == "conditional" else np.full(n, M)
        row = np.ones(n)
        np.divide(cnt, d, out=row, where=alive > 0)
        f[:, t - 1] = np.clip(row, 0.0, 1.0)
    table = AttenuationTable(f, int(M), float(epsilon), num, den, estimator)
    cells = int(table.fallback.sum())
    if cells:
        log.info("attenuation: %d cells with no alive sample fell back to 1", cells)
    return table
