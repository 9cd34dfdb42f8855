import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from alpertlab.alpert import AlpertSystem

settings.register_profile("default", deadline=None, max_examples=40,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


@pytest.fixture(scope="session")
def system3():
    return AlpertSystem(3, 0.02)


@pytest.fixture(scope="session")
def system2():
    return AlpertSystem(2, 0.02)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


CRITERIA = []


@pytest.fixture
def criterion():
    """Record one acceptance line; the summary prints them all at the end."""
    def record(number, name, passed, detail):
        line = f"{'PASS' if passed else 'FAIL'} criterion {number} {name}: {detail}"
        CRITERIA.append((number, line))
        print(line)
        return passed
    return record


def pytest_terminal_summary(terminalreporter):
    if CRITERIA:
        terminalreporter.section("acceptance criteria")
        for _, line in sorted(CRITERIA):
            terminalreporter.write_line(line)
