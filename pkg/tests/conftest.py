import numpy as np
import pytest

from stocsched.core import Pmf, make_instance


def random_pmf(rng, max_support=3):
    k = int(rng.integers(1, max_support + 1))
    support = sorted(rng.choice(np.arange(1, max_support + 1), size=k, replace=False).tolist())
    w = rng.uniform(0.1, 1.0, size=k)
    return Pmf(tuple(support), tuple((w / w.sum()).tolist()))


def random_curve(rng, H, zero_ok=True):
    """Random non-increasing curve with p(1) = 1; may hit 0 when ``zero_ok``."""
    drops = rng.uniform(0.0, 0.6, size=H - 1)
    if zero_ok and rng.random() < 0.3:
        drops[rng.integers(0, H - 1)] = 1.0
    vals = [1.0]
    for d in drops:
        vals.append(vals[-1] * (1.0 - d))
    return vals


def random_instance(rng, n_max=4, H_max=6, max_support=3, iid=False, n=None, H=None, **extra):
    n = n or int(rng.integers(1, n_max + 1))
    H = H or int(rng.integers(2, H_max + 1))
    values = rng.uniform(0.5, 5.0, size=n).round(3).tolist()
    if iid:
        pmf = random_pmf(rng, max_support)
        services = [pmf] * n
    else:
        services = [random_pmf(rng, max_support) for _ in range(n)]
    curves = [random_curve(rng, H) for _ in range(n)]
    return make_instance(values, services, curves, horizon=H, **extra)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


# --- acceptance summary --------------------------------------------------------------

ACCEPTANCE: dict[int, list[tuple[bool, str]]] = {}


def record_criterion(number: int, ok: bool, detail: str) -> None:
    ACCEPTANCE.setdefault(number, []).append((bool(ok), detail))
    print(f"criterion {number}: {'PASS' if ok else 'FAIL'} - {detail}")


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(ACCEPTANCE):
        parts = ACCEPTANCE[number]
        status = "PASS" if all(ok for ok, _ in parts) else "FAIL"
        detail = "; ".join(d for _, d in parts)
        terminalreporter.write_line(f"criterion {number:>2}: {status}  {detail}")
