import numpy as np
import pytest

from herdtrack.models import SensorModel

REGION = ((-5000.0, 5000.0), (-5000.0, 5000.0))


@pytest.fixture
def rng():
    return np.random.default_rng(20240607)


def make_sensors(V, region=REGION, **kw):
    return tuple(SensorModel(i + 1, region=region, **kw) for i in range(V))


@pytest.fixture
def two_sensors():
    return make_sensors(2)


def random_spd(rng, n, scale=1.0):
    A = rng.normal(size=(n, n))
    return scale * (A @ A.T + n * np.eye(n))


ACCEPTANCE = {}


def record_criterion(n, ok, detail=""):
    """Remember an acceptance outcome so the terminal summary can list it."""
    ACCEPTANCE[n] = (bool(ok), detail)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[n]
        terminalreporter.write_line(f"criterion {n}: {'PASS' if ok else 'FAIL'}  {detail}")
