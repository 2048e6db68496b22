import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from adaptive_lq import OCProblem, TimeGrid

settings.register_profile("default", deadline=None, max_examples=25,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")

ACCEPTANCE_LINES = []


def scalar(a=0.0, b=1.0, m=1.0, r=1.0, x0=1.0, xT=0.0, T=1.0, K=10):
    return OCProblem(A=[[a]], B=[[b]], M=[[m]], R=[[r]], x0=[x0], xT=[xT], grid=TimeGrid(T, K))


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
