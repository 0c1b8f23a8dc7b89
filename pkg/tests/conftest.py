import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from aronsson_lab import candidates as cd
from aronsson_lab import sysmodel as sm

settings.register_profile(
    "default",
    deadline=None,
    max_examples=60,
    suppress_health_check=[HealthCheck.too_slow],
)
settings.load_profile("default")


@pytest.fixture(scope="session")
def grushin1():
    return sm.grushin(1)


@pytest.fixture(scope="session")
def hormander2():
    return sm.hormander(2, sm.standard_B(2))


@pytest.fixture(scope="session")
def iso2():
    return sm.isotropic(2)


@pytest.fixture(scope="session")
def gauge_pairs(grushin1, hormander2):
    """(system, gauge candidate) for both explicit solutions."""
    return [(grushin1, cd.Gauge(1)), (hormander2, cd.Gauge(2))]


def regular_points(rng, n, count, lo=0.2, hi=1.5):
    """Random points with |x_h| bounded away from zero."""
    x = rng.uniform(-hi, hi, size=(count, n))
    r = rng.uniform(lo, hi, size=count)
    xh = x[:, : n - 1]
    x[:, : n - 1] = xh / np.linalg.norm(xh, axis=1, keepdims=True) * r[:, None]
    return x


def pytest_terminal_summary(terminalreporter):
    try:
        from test_acceptance import RESULTS
    except ImportError:
        return
    if not RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(RESULTS):
        title, ok, detail = RESULTS[k]
        terminalreporter.write_line(f"[{'PASS' if ok else 'FAIL'}] {k}. {title}: {detail}")
