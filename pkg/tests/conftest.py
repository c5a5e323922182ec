import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from pursuit_evasion.grid import Grid
from pursuit_evasion.model import ModelParams

settings.register_profile("default", deadline=None, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")

# a1=1, b1=1, a2=3, b2=1, c1=2 has the coexistence state (5/3, 4/3)
EQ_PARAMS = dict(a1=1.0, b1=1.0, a2=3.0, b2=1.0, c1=2.0)
EQ_STATE = (5.0 / 3.0, 4.0 / 3.0)

ACCEPTANCE_LINES: list[str] = []


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture
def eq_params():
    return ModelParams(d1=1.0, d2=1.0, chi=0.001, xi=0.0005, **EQ_PARAMS)


@pytest.fixture
def line128():
    return Grid.interval(1.0, 128)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[2].rstrip(":"))):
            terminalreporter.write_line(line)
