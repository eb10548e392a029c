import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from varpro.data import Dataset

settings.register_profile("default", deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


def regression_data(X, y, kinds=()):
    return Dataset(np.asarray(X, dtype=float), kinds, "regression", y=np.asarray(y, dtype=float))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


# one line per acceptance criterion, printed after the run
ACCEPTANCE_LINES = []


def record_criterion(number: int, name: str, passed: bool, detail: str):
    line = f"CRITERION {number} {name}: {'PASS' if passed else 'FAIL'} ({detail})"
    ACCEPTANCE_LINES.append((number, line))
    print(line)
    return passed


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for _, line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
