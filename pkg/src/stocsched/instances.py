"""Instance generators and call-center log ingestion."""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from ._rng import DOMAIN_GEN, stream
from .core import Instance, Pmf, SurvivalCurve, geometric_survival, make_instance
from .errors import EmptyCategoryError, InvalidParameterError, ParseError

SYN_HORIZON = 50
REAL_HORIZON = 50
CATEGORIES = ("new", "regular", "priority")
CATEGORY_VALUES = {"new": 1.0, "regular": 2.0, "priority": 8.0}
OUTCOMES = ("served", "abandoned")
EXAMPLES = ("greedy_iid", "greedy_value", "greedy_ratio", "deadline", "knapsack1", "knapsack2", "knapsack3")

_SHORT = Pmf.from_mapping({1: 0.9, 2: 0.1})


# --- synthetic families ------------------------------------------------------

def synthetic_smax(n: int) -> int:
    return max(3, n // 5)


def gen_synthetic(n: int, seed: int = 0, horizon: int = SYN_HORIZON) -> Instance:
    """Random instance of the synthetic benchmark family.

    Each job stays with a geometric survival ``q^(t-1)``, ``q ~ U(0.2, 1)``; is
    short (``S = 1`` w.p. 0.9, else 2) or long (``S = s_max`` w.p. 0.9, else
    ``s_max - 1``) with equal odds; and has a low, medium or high value
    (w.p. 0.2/0.6/0.2) drawn from U(1,2), U(2,4) or U(4,8).
    """
    if n < 1:
        raise InvalidParameterError("n must be >= 1")
    rng = stream(seed, DOMAIN_GEN, n)
    smax = synthetic_smax(n)
    long = Pmf.from_mapping({smax: 0.9, smax - 1: 0.1})
    values, services, survivals = [], [], []
    for _ in range(n):
        q = rng.uniform(0.2, 1.0)
        is_long = rng.random() < 0.5
        tier = rng.choice(3, p=[0.2, 0.6, 0.2])
        lo, hi = ((1.0, 2.0), (2.0, 4.0), (4.0, 8.0))[tier]
        values.append(float(rng.uniform(lo, hi)))
        services.append(long if is_long else _SHORT)
        survivals.append(geometric_survival(q, horizon))
    return make_instance(values, services, survivals, horizon=horizon, name=f"syn-{n}")


def gen_hard_alg(n: int) -> Instance:
    """``n`` unit jobs with unit service that are only present at ``t = 1``."""
    if n < 1:
        raise InvalidParameterError("n must be >= 1")
    curve = SurvivalCurve.until(1, n)
    return make_instance([1.0] * n, [Pmf.point(1)] * n, [curve] * n, horizon=n, name=f"hard-{n}")


def gap_type(j: int, n: int, m: int) -> int:
    """Type ``k in 1..m`` of job ``j`` in the integrality-gap family."""
    return j // (n // m) + 1


def gen_integrality_gap(n: int, m: int) -> Instance:
    """``m`` equal-size types; type ``k`` has ``S = 2^(k-1)`` and leaves at 1 or at ``2^(k-1) + 1``.

    The survival curve is ``p(1) = 1``, ``p(t) = m/n`` for ``2 <= t <= 2^(k-1) + 1``
    and 0 afterwards.  The horizon is ``2^m``, the end of the last busy window
    of the increasing-type schedule.
    """
    if m < 1 or n < 1 or n % m:
        raise InvalidParameterError("need m >= 1 dividing n")
    H = 2**m
    values, services, survivals = [], [], []
    for j in range(n):
        k = gap_type(j, n, m)
        last = 2 ** (k - 1) + 1
        curve = [1.0] + [m / n if t <= last else 0.0 for t in range(2, H + 1)]
        values.append(1.0)
        services.append(Pmf.point(2 ** (k - 1)))
        survivals.append(curve)
    return make_instance(values, services, survivals, horizon=H, name=f"gap-{n}-{m}")


def gap_lp_assignment(n: int, m: int) -> np.ndarray:
    """The explicit fractional schedule: one type-1 job at ``t = 1``, every other job at ``2^(k-1) + 1`` with weight ``m/n``."""
    x = np.zeros((n, 2**m))
    x[0, 0] = 1.0
    for j in range(1, n):
        k = gap_type(j, n, m)
        x[j, 2 ** (k - 1)] = m / n
    return x


def gap_increasing_type_priority(n: int, m: int) -> np.ndarray:
    """Static priority keys that run lower types first."""
    return np.array([-gap_type(j, n, m) for j in range(n)], dtype=float)


def gap_opt_formula(n: int, m: int) -> float:
    """Closed-form value of the increasing-type schedule."""
    r = m / n
    return 1 + (1 - (1 - r) ** (n // m - 1)) + (m - 1) * (1 - (1 - r) ** (n // m))


def hard_alg_value(n: int) -> float:
    """Success probability ``1 - (1 - 1/(2n))^n`` of the consideration algorithm on :func:`gen_hard_alg`."""
    return 1.0 - (1.0 - 1.0 / (2 * n)) ** n


HARD_ALG_LIMIT = 1.0 - math.exp(-0.5)


# --- worked examples -----------------------------------------------------------

def gen_example(name: str, eps: float = 0.1, n: int = 5, K: int = 10, W: float | None = None) -> Instance:
    """Exact encodings of the small counterexamples.

    ``n`` is used by ``greedy_value``, ``knapsack2`` and ``knapsack3``; ``K`` by
    ``greedy_ratio`` and ``deadline``; ``W`` is the capacity for
    ``knapsack1`` (default 10) and ``knapsack2`` (default ``n + 1``).
    """
    one = Pmf.point(1)
    if name == "greedy_iid":
        return make_instance([1 + eps, 1.0], [one, one], [[1, 1], [1, 0]], horizon=2, name=name)
    if name == "greedy_value":
        H = 2 * n
        others = SurvivalCurve.until(n, H)
        return make_instance(
            [1 + eps] + [1.0] * (n - 1),
            [Pmf.point(n)] + [one] * (n - 1),
            [SurvivalCurve.constant(H)] + [others] * (n - 1),
            horizon=H,
            name=name,
        )
    if name == "greedy_ratio":
        H = 2 * K
        return make_instance(
            [1 + eps, float(K)],
            [one, Pmf.point(K)],
            [SurvivalCurve.constant(H), SurvivalCurve.until(1, H)],
            horizon=H,
            name=name,
        )
    if name == "deadline":
        two = Pmf.point(2)
        H = 4
        curve = SurvivalCurve.until(2, H)
        return make_instance([1 + eps, 1.0], [two, two], [curve, curve], horizon=H, deadlines=(2, K), name=name)
    if name == "knapsack1":
        W = 10.0 if W is None else float(W)
        curve = SurvivalCurve.until(1, 2)
        return make_instance([1.0, W - 1], [one, one], [curve, curve], horizon=2,
                             weights=(1.0, W), capacity=W, name=name)
    if name == "knapsack2":
        W = float(n + 1) if W is None else float(W)
        if W <= n:
            raise InvalidParameterError("knapsack2 needs W > n")
        curve = SurvivalCurve.until(n, n)
        return make_instance([1 + eps] + [1.0] * (n - 1), [one] * n, [curve] * n, horizon=n,
                             weights=(W,) + (1.0,) * (n - 1), capacity=W, name=name)
    if name == "knapsack3":
        if n % 2:
            raise InvalidParameterError("knapsack3 needs an even n")
        H = n + 1
        values = [1 + (j - (n + 1) / 2) * eps for j in range(1, n + 1)] + [1 + n * eps / 2]
        survivals = [SurvivalCurve.until(j + 1, H) for j in range(1, n + 1)] + [SurvivalCurve.until(n, H)]
        return make_instance(values, [one] * (n + 1), survivals, horizon=H,
                             weights=(1.0,) * n + (float(n),), capacity=float(n), name=name)
    raise InvalidParameterError(f"unknown example {name!r}; choose from {EXAMPLES}")


# --- call-center data ----------------------------------------------------------

@dataclass(frozen=True)
class CallRecord:
    category: str
    outcome: str
    service_seconds: float | None = None
    patience_seconds: float | None = None

    def __post_init__(self):
        if self.category not in CATEGORIES:
            raise InvalidParameterError(f"unknown category {self.category!r}")
        if self.outcome not in OUTCOMES:
            raise InvalidParameterError(f"unknown outcome {self.outcome!r}")
        served = self.outcome == "served"
        if served != (self.service_seconds is not None) or served == (self.patience_seconds is not None):
            raise InvalidParameterError("served rows need service_seconds only, abandoned rows patience_seconds only")
        secs = self.service_seconds if served else self.patience_seconds
        if not secs >= 0:
            raise InvalidParameterError("durations must be non-negative")


@dataclass(frozen=True)
class CategoryProfile:
    service: Pmf
    survival: tuple[float, ...]
    frequency: float
    value: float


@dataclass(frozen=True)
class EmpiricalProfile:
    categories: Mapping[str, CategoryProfile]
    bin_seconds: float = 20.0

    def to_dict(self) -> dict:
        return {
            "bin_seconds": self.bin_seconds,
            "categories": {
                name: {
                    "service": c.service.as_dict(),
                    "survival": list(c.survival),
                    "frequency": c.frequency,
                    "value": c.value,
                }
                for name, c in self.categories.items()
            },
        }

    @classmethod
    def from_dict(cls, data: Mapping) -> "EmpiricalProfile":
        cats = {}
        for name, c in data["categories"].items():
            svc = c["service"]
            cats[name] = CategoryProfile(
                Pmf(tuple(int(s) for s in svc["support"]), tuple(float(p) for p in svc["probs"])),
                tuple(float(p) for p in c["survival"]),
                float(c["frequency"]),
                float(c["value"]),
            )
        return cls(cats, float(data.get("bin_seconds", 20.0)))

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=1), encoding="utf-8")

    @classmethod
    def load(cls, path) -> "EmpiricalProfile":
        return cls.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


def to_bin(seconds: float, bin_seconds: float = 20.0) -> int:
    """``ceil(seconds / bin)``, at least 1."""
    return max(1, math.ceil(seconds / bin_seconds))


def _parse_row(row: Mapping[str, str], lineno: int) -> CallRecord:
    def num(key):
        raw = (row.get(key) or "").strip()
        if raw == "" or raw.upper() == "NA":
            return None
        try:
            return float(raw)
        except ValueError:
            raise ParseError(f"{key} is not a number: {raw!r}", lineno) from None

    try:
        return CallRecord(
            (row.get("category") or "").strip().lower(),
            (row.get("outcome") or "").strip().lower(),
            num("service_seconds"),
            num("patience_seconds"),
        )
    except InvalidParameterError as exc:
        raise ParseError(str(exc), lineno) from None


def read_call_records(path) -> list[CallRecord]:
    """Parse a ``category,outcome,service_seconds,patience_seconds`` CSV."""
    records = []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        needed = {"category", "outcome", "service_seconds", "patience_seconds"}
        if reader.fieldnames is None or not needed <= set(reader.fieldnames):
            raise ParseError(f"header must contain {sorted(needed)}", 1)
        for row in reader:
            records.append(_parse_row(row, reader.line_num))
    return records


def survival_from_bins(bins: Sequence[int]) -> tuple[float, ...]:
    """``p(t) = Pr(bin >= t)`` for ``t = 1..max_bin + 1``; the last entry is 0."""
    arr = np.asarray(bins, dtype=np.int64)
    top = int(arr.max())
    counts = np.bincount(arr, minlength=top + 2)
    at_least = counts[::-1].cumsum()[::-1]
    return tuple(float(c) / len(arr) for c in at_least[1 : top + 2])


def pmf_from_bins(bins: Sequence[int]) -> Pmf:
    vals, counts = np.unique(np.asarray(bins, dtype=np.int64), return_counts=True)
    return Pmf(tuple(int(v) for v in vals), tuple(float(c) / len(bins) for c in counts))


def profile_from_records(records: Sequence[CallRecord], bin_seconds: float = 20.0) -> EmpiricalProfile:
    cats = {}
    total = len(records)
    for cat in CATEGORIES:
        rows = [r for r in records if r.category == cat]
        served = [to_bin(r.service_seconds, bin_seconds) for r in rows if r.outcome == "served"]
        patience = [to_bin(r.patience_seconds, bin_seconds) for r in rows if r.outcome == "abandoned"]
        if not served or not patience:
            raise EmptyCategoryError(f"category {cat!r} needs at least one served and one abandoned row")
        cats[cat] = CategoryProfile(pmf_from_bins(served), survival_from_bins(patience), len(rows) / total,
                                    CATEGORY_VALUES[cat])
    return EmpiricalProfile(cats, bin_seconds)


def ingest_call_center(csv_path, bin_seconds: float = 20.0) -> EmpiricalProfile:
    """Per-category service PMFs, patience survival curves and frequencies from a call log."""
    return profile_from_records(read_call_records(csv_path), bin_seconds)


def from_bank_record(fields: Mapping[str, str]) -> CallRecord | None:
    """Map one row of the public Anonymous Bank call log onto :class:`CallRecord`.

    Field mapping (interpretation):

    ``priority``  0 -> new, 1 -> regular, 2 -> priority
    ``outcome``   AGENT -> served (``ser_time``), HANG -> abandoned (``q_time``);
                  PHANTOM and other outcomes are skipped (``None``)
    """
    category = {"0": "new", "1": "regular", "2": "priority"}.get(str(fields.get("priority", "")).strip())
    outcome = str(fields.get("outcome", "")).strip().upper()
    if category is None:
        return None
    if outcome == "AGENT":
        return CallRecord(category, "served", service_seconds=float(fields["ser_time"]))
    if outcome == "HANG":
        return CallRecord(category, "abandoned", patience_seconds=float(fields["q_time"]))
    return None


def _extend(curve: Sequence[float], horizon: int) -> list[float]:
    curve = list(curve)
    if len(curve) >= horizon:
        return curve[:horizon]
    return curve + [curve[-1]] * (horizon - len(curve))


def sample_real_instance(profile: EmpiricalProfile, n: int, seed: int = 0, horizon: int = REAL_HORIZON) -> Instance:
    """``n`` customers drawn by category frequency, each with its category's distributions and value."""
    if n < 1:
        raise InvalidParameterError("n must be >= 1")
    names = sorted(profile.categories)
    freq = np.array([profile.categories[c].frequency for c in names])
    rng = stream(seed, DOMAIN_GEN, n)
    picks = rng.choice(len(names), size=n, p=freq / freq.sum())
    cats = [profile.categories[names[i]] for i in picks]
    return make_instance(
        [c.value for c in cats],
        [c.service for c in cats],
        [_extend(c.survival, horizon) for c in cats],
        horizon=horizon,
        name=f"real-{n}",
    )


def sample_call_records(profile: EmpiricalProfile, rows: int, seed: int = 0) -> list[CallRecord]:
    """Synthetic call log drawn from a profile; each row is served or abandoned with probability 1/2."""
    rng = stream(seed, DOMAIN_GEN, rows)
    names = sorted(profile.categories)
    freq = np.array([profile.categories[c].frequency for c in names])
    cats = rng.choice(len(names), size=rows, p=freq / freq.sum())
    served = rng.random(rows) < 0.5
    u = rng.random(rows)
    b = profile.bin_seconds
    out = []
    for ci, is_served, ui in zip(cats, served, u):
        c = profile.categories[names[ci]]
        if is_served:
            k = int(np.searchsorted(np.cumsum(c.service.probs), ui, side="right"))
            k = min(k, len(c.service.support) - 1)
            out.append(CallRecord(names[ci], "served", service_seconds=c.service.support[k] * b))
        else:
            surv = np.asarray(c.survival)
            # Pr(bin = t) = p(t) - p(t+1)
            pm = surv - np.append(surv[1:], 0.0)
            k = int(np.searchsorted(np.cumsum(pm), ui, side="right"))
            k = min(k, len(pm) - 1)
            out.append(CallRecord(names[ci], "abandoned", patience_seconds=(k + 1) * b))
    return out


def write_call_records(records: Sequence[CallRecord], path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["category", "outcome", "service_seconds", "patience_seconds"])
        for r in records:
            w.writerow([r.category, r.outcome,
                        "" if r.service_seconds is None else f"{r.service_seconds:g}",
                        "" if r.patience_seconds is None else f"{r.patience_seconds:g}"])


def pmf_rmse(a: Pmf, b: Pmf) -> float:
    """Root mean squared difference of the two mass functions over the union of supports."""
    support = sorted(set(a.support) | set(b.support))
    diffs = [(a.pmf(s) - b.pmf(s)) ** 2 for s in support]
    return math.sqrt(sum(diffs) / len(diffs))


def survival_rmse(a: Sequence[float], b: Sequence[float]) -> float:
    L = max(len(a), len(b))
    a2 = np.asarray(_extend(a, L))
    b2 = np.asarray(_extend(b, L))
    return float(np.sqrt(np.mean((a2 - b2) ** 2)))
