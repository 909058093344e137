import numpy as np
import pytest
from hypothesis import HealthCheck, settings

settings.register_profile(
    "default", deadline=None, max_examples=40, suppress_health_check=[HealthCheck.too_slow]
)
settings.load_profile("default")

FAMILIES = ["normal", "cauchy", "student-t:4", "student-t:2.5", "logistic1", "logistic2", "pexp:0.2", "pexp:-0.5"]

ACCEPTANCE_LINES = []


def random_design(rng, n, p):
    return np.column_stack([np.ones(n), rng.random((n, p - 1))])


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
