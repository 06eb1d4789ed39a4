import functools

import pytest

from flowshoot.flowfield import builtin, from_expressions
from flowshoot.problem import ProblemSpec
from flowshoot.shooting import sweep

REFERENCE_A = (0.0, 0.0)
REFERENCE_B = (-0.5, -6.0)

# acceptance lines collected by tests/test_acceptance.py
ACCEPTANCE_LINES: list = []


@functools.lru_cache(maxsize=None)
def reference_field(name: str, tau: float = 1e-4):
    """Field of extremals for a built-in field between the reference endpoints."""
    return sweep(ProblemSpec(builtin(name), REFERENCE_A, REFERENCE_B, tau=tau))


@pytest.fixture(scope="session")
def steady_field():
    return reference_field("steady_parabolic")


@pytest.fixture(scope="session")
def tidal_field():
    return reference_field("tidal_parabolic")


@pytest.fixture(scope="session")
def shear_field():
    return reference_field("shear_tidal")


@pytest.fixture(scope="session")
def zero_field():
    return from_expressions("0", "0", id="zero")


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for line in ACCEPTANCE_LINES:
        terminalreporter.write_line(line)
