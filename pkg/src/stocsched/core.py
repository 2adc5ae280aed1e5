"""Probability primitives and the instance model.

A job has a value, a service-time distribution on the positive integers and a
departure survival curve ``p(t) = Pr(D >= t)``.  A job is *available* at time
``t`` when it has not been run yet and ``D >= t``; a job with ``D = 2`` can
still be started at ``t = 2``.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, replace
from functools import cached_property
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from .errors import InvalidInstanceError, InvalidParameterError

PROB_ATOL = 1e-9


@dataclass(frozen=True)
class Pmf:
    """Finite distribution on the positive integers."""

    support: tuple[int, ...]
    probs: tuple[float, ...]

    def __post_init__(self):
        support = tuple(int(s) for s in self.support)
        probs = tuple(float(p) for p in self.probs)
        object.__setattr__(self, "support", support)
        object.__setattr__(self, "probs", probs)
        if not support or len(support) != len(probs):
            raise InvalidParameterError("support and probs must be non-empty and of equal length")
        if support[0] < 1 or any(b <= a for a, b in zip(support, support[1:])):
            raise InvalidParameterError(f"support must be strictly increasing and >= 1: {support}")
        if any(p < 0 or not math.isfinite(p) for p in probs):
            raise InvalidParameterError("probabilities must be finite and non-negative")
        if abs(math.fsum(probs) - 1.0) > PROB_ATOL:
            raise InvalidParameterError(f"probabilities sum to {math.fsum(probs)!r}, not 1")

    @classmethod
    def point(cls, value: int) -> "Pmf":
        return cls((value,), (1.0,))

    @classmethod
    def from_mapping(cls, masses: Mapping[int, float]) -> "Pmf":
        items = sorted((int(k), float(v)) for k, v in masses.items())
        return cls(tuple(k for k, _ in items), tuple(v for _, v in items))

    @property
    def max(self) -> int:
        return self.support[-1]

    def mean(self) -> float:
        return math.fsum(s * p for s, p in zip(self.support, self.probs))

    def pmf(self, s: int) -> float:
        try:
            return self.probs[self.support.index(s)]
        except ValueError:
            return 0.0

    def cdf(self, t: int) -> float:
        """Pr(X <= t)."""
        return min(1.0, math.fsum(p for s, p in zip(self.support, self.probs) if s <= t))

    def tail(self, t: int) -> float:
        """Pr(X > t)."""
        if t < 0:
            raise InvalidParameterError("tail is defined for t >= 0")
        return max(0.0, math.fsum(p for s, p in zip(self.support, self.probs) if s > t))

    def as_dict(self) -> dict:
        return {"support": list(self.support), "probs": list(self.probs)}


def tail(pmf: Pmf, t: int) -> float:
    return pmf.tail(t)


@dataclass(frozen=True)
class SurvivalCurve:
    """Values ``p(1), ..., p(L)`` of ``Pr(D >= t)``."""

    values: tuple[float, ...]

    def __post_init__(self):
        values = tuple(float(v) for v in self.values)
        object.__setattr__(self, "values", values)
        if not values:
            raise InvalidParameterError("survival curve must be non-empty")
        if abs(values[0] - 1.0) > PROB_ATOL:
            raise InvalidParameterError(f"p(1) must be 1, got {values[0]!r}")
        if any(not (0.0 <= v <= 1.0) for v in values):
            raise InvalidParameterError("survival values must lie in [0, 1]")
        if any(b > a + PROB_ATOL for a, b in zip(values, values[1:])):
            raise InvalidParameterError("survival curve must be non-increasing")

    def __len__(self) -> int:
        return len(self.values)

    def __call__(self, t: int) -> float:
        if not 1 <= t <= len(self.values):
            raise IndexError(f"time {t} outside curve of length {len(self.values)}")
        return self.values[t - 1]

    @classmethod
    def from_departure_pmf(cls, pmf: Pmf, length: int) -> "SurvivalCurve":
        """Survival of a departure time with the given distribution."""
        return cls(tuple(1.0 - pmf.cdf(t - 1) for t in range(1, length + 1)))

    @classmethod
    def constant(cls, length: int) -> "SurvivalCurve":
        return cls((1.0,) * length)

    @classmethod
    def until(cls, last: int, length: int) -> "SurvivalCurve":
        """Deterministic departure: present for t <= last, gone afterwards."""
        return cls(tuple(1.0 if t <= last else 0.0 for t in range(1, length + 1)))


def hazard(curve: SurvivalCurve, t: int) -> float:
    """Pr(D = t | D >= t) for ``1 <= t < len(curve)``."""
    if not 1 <= t < len(curve):
        raise InvalidParameterError(f"hazard needs 1 <= t < {len(curve)}, got {t}")
    pt = curve(t)
    if pt == 0.0:
        raise ZeroDivisionError(f"p({t}) = 0, hazard undefined")
    return min(1.0, max(0.0, (pt - curve(t + 1)) / pt))


def geometric_survival(q: float, horizon: int) -> SurvivalCurve:
    """Curve of a job that stays each step with probability ``q``: p(t) = q**(t-1)."""
    if not 0.0 < q <= 1.0:
        raise InvalidParameterError(f"q must lie in (0, 1], got {q}")
    return SurvivalCurve(tuple(q ** (t - 1) for t in range(1, horizon + 1)))


@dataclass(frozen=True)
class Job:
    id: int
    value: float
    service: Pmf
    departure: SurvivalCurve

    def __post_init__(self):
        object.__setattr__(self, "value", float(self.value))
        if not self.value > 0 or not math.isfinite(self.value):
            raise InvalidInstanceError(f"job {self.id}: value must be positive, got {self.value}")


@dataclass(frozen=True)
class Instance:
    jobs: tuple[Job, ...]
    horizon: int | None = None
    name: str = "instance"
    deadlines: tuple[int, ...] | None = None
    weights: tuple[float, ...] | None = None
    capacity: float | None = None
    cardinality: int | None = None

    def __post_init__(self):
        jobs = tuple(self.jobs)
        object.__setattr__(self, "jobs", jobs)
        if not jobs:
            raise InvalidInstanceError("an instance needs at least one job")
        if [j.id for j in jobs] != list(range(len(jobs))):
            raise InvalidInstanceError("job ids must be 0..n-1 in order")
        if self.horizon is None:
            object.__setattr__(self, "horizon", len(jobs) * max(j.service.max for j in jobs))
        if int(self.horizon) < 1:
            raise InvalidInstanceError("horizon must be >= 1")
        object.__setattr__(self, "horizon", int(self.horizon))
        for j in jobs:
            if len(j.departure) < self.horizon:
                raise InvalidInstanceError(
                    f"job {j.id}: survival curve has {len(j.departure)} entries, horizon is {self.horizon}"
                )
        n = len(jobs)
        if self.deadlines is not None:
            dl = tuple(int(b) for b in self.deadlines)
            if len(dl) != n or any(b < 1 for b in dl):
                raise InvalidInstanceError("deadlines need one integer >= 1 per job")
            object.__setattr__(self, "deadlines", dl)
        if self.weights is not None:
            w = tuple(float(x) for x in self.weights)
            if len(w) != n or any(x < 0 for x in w):
                raise InvalidInstanceError("weights need one non-negative entry per job")
            object.__setattr__(self, "weights", w)
        if self.capacity is not None:
            if float(self.capacity) < 0:
                raise InvalidInstanceError("capacity must be >= 0")
            object.__setattr__(self, "capacity", float(self.capacity))
        if self.cardinality is not None:
            if int(self.cardinality) < 0:
                raise InvalidInstanceError("cardinality must be >= 0")
            object.__setattr__(self, "cardinality", int(self.cardinality))

    @property
    def n(self) -> int:
        return len(self.jobs)

    @property
    def max_service(self) -> int:
        return max(j.service.max for j in self.jobs)

    @cached_property
    def values(self) -> np.ndarray:
        return np.array([j.value for j in self.jobs], dtype=float)

    @cached_property
    def survival(self) -> np.ndarray:
        """``(n, horizon)`` matrix with ``survival[j, t-1] = p_j(t)``."""
        return np.array([j.departure.values[: self.horizon] for j in self.jobs], dtype=float)

    @cached_property
    def service_table(self) -> tuple[np.ndarray, np.ndarray]:
        """Padded ``(support, cdf)`` arrays used for inverse-CDF sampling."""
        width = max(len(j.service.support) for j in self.jobs)
        support = np.zeros((self.n, width), dtype=np.int64)
        cdf = np.ones((self.n, width), dtype=float)
        for j in self.jobs:
            k = len(j.service.support)
            support[j.id, :k] = j.service.support
            support[j.id, k:] = j.service.support[-1]
            cdf[j.id, :k] = np.cumsum(j.service.probs)
            cdf[j.id, k - 1 :] = 1.0
        return support, cdf

    @cached_property
    def service_tails(self) -> np.ndarray:
        """``(n, horizon)`` matrix with ``service_tails[j, d] = Pr(S_j > d)``."""
        return np.array(
            [[j.service.tail(d) for d in range(self.horizon)] for j in self.jobs], dtype=float
        )

    def with_horizon(self, horizon: int) -> "Instance":
        return replace(self, horizon=horizon)


def truncate_services(instance: Instance, epsilon: float) -> Instance:
    """Cut every service distribution at a common point ``tau``.

    ``tau`` is the smallest time with ``Pr(S_j > tau) <= epsilon / n**2`` for every
    job.  Mass above ``tau`` is moved onto ``tau`` and the horizon becomes
    ``n * tau`` (capped by the shortest survival curve).
    """
    if not 0.0 < epsilon < 1.0:
        raise InvalidParameterError("epsilon must lie in (0, 1)")
    n = instance.n
    threshold = epsilon / n**2
    tau = 1
    while any(j.service.tail(tau) > threshold for j in instance.jobs):
        tau += 1
    jobs = []
    for j in instance.jobs:
        pmf = j.service
        if pmf.max > tau:
            kept = {s: p for s, p in zip(pmf.support, pmf.probs) if s < tau}
            kept[tau] = math.fsum(p for s, p in zip(pmf.support, pmf.probs) if s >= tau)
            pmf = Pmf.from_mapping({s: p for s, p in kept.items() if p > 0 or s == tau})
        jobs.append(replace(j, service=pmf))
    horizon = min(n * tau, min(len(j.departure) for j in instance.jobs))
    return replace(instance, jobs=tuple(jobs), horizon=horizon)


def regularize_departures(instance: Instance, epsilon: float) -> Instance:
    """Replace each departure ``D`` by ``max(D, G)`` with ``G`` geometric.

    ``Pr(G >= t) = epsilon**(t-1)``, so the new curve is
    ``p'(t) = 1 - (1 - p(t)) * (1 - epsilon**(t-1))`` and stays strictly positive.
    """
    if not 0.0 < epsilon < 1.0:
        raise InvalidParameterError("epsilon must lie in (0, 1)")
    jobs = []
    for j in instance.jobs:
        new = tuple(
            1.0 - (1.0 - p) * (1.0 - epsilon ** (t - 1))
            for t, p in enumerate(j.departure.values, start=1)
        )
        jobs.append(replace(j, departure=SurvivalCurve(new)))
    return replace(instance, jobs=tuple(jobs))


def make_instance(
    values: Sequence[float],
    services: Sequence[Pmf],
    survivals: Sequence[SurvivalCurve | Sequence[float]],
    horizon: int | None = None,
    **extra,
) -> Instance:
    """Build an instance from parallel per-job sequences."""
    jobs = tuple(
        Job(i, v, s, d if isinstance(d, SurvivalCurve) else SurvivalCurve(tuple(d)))
        for i, (v, s, d) in enumerate(zip(values, services, survivals))
    )
    return Instance(jobs, horizon=horizon, **extra)


# --- JSON --------------------------------------------------------------------

def instance_to_dict(instance: Instance) -> dict:
    return {
        "name": instance.name,
        "horizon": instance.horizon,
        "jobs": [
            {
                "id": j.id,
                "value": j.value,
                "service": j.service.as_dict(),
                "departure_survival": list(j.departure.values),
            }
            for j in instance.jobs
        ],
        "deadlines": None if instance.deadlines is None else list(instance.deadlines),
        "weights": None if instance.weights is None else list(instance.weights),
        "capacity": instance.capacity,
        "cardinality": instance.cardinality,
    }


def instance_from_dict(data: Mapping) -> Instance:
    try:
        jobs = tuple(
            Job(
                int(j["id"]),
                float(j["value"]),
                Pmf(tuple(j["service"]["support"]), tuple(j["service"]["probs"])),
                SurvivalCurve(tuple(j["departure_survival"])),
            )
            for j in data["jobs"]
        )
        return Instance(
            jobs,
            horizon=data.get("horizon"),
            name=data.get("name", "instance"),
            deadlines=_opt_tuple(data.get("deadlines")),
            weights=_opt_tuple(data.get("weights")),
            capacity=data.get("capacity"),
            cardinality=data.get("cardinality"),
        )
    except (KeyError, TypeError) as exc:
        raise InvalidInstanceError(f"malformed instance document: {exc!r}") from exc


def _opt_tuple(seq: Iterable | None):
    return None if seq is None else tuple(seq)


def dumps_instance(instance: Instance) -> str:
    return json.dumps(instance_to_dict(instance), indent=1)


def loads_instance(text: str) -> Instance:
    return instance_from_dict(json.loads(text))


def save_instance(instance: Instance, path: str | Path) -> None:
    Path(path).write_text(dumps_instance(instance), encoding="utf-8")


def load_instance(path: str | Path) -> Instance:
    return loads_instance(Path(path).read_text(encoding="utf-8"))
