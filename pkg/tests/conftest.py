import pytest
from hypothesis import settings

from capdrop.fundamental import TriangularFD

settings.register_profile("default", deadline=None, max_examples=100)
settings.load_profile("default")

RING_PARAMS = dict(v_star=30.0, tau=1.4, k_star=1 / 7)


@pytest.fixture
def fd3():
    return TriangularFD(3, **RING_PARAMS)


@pytest.fixture
def fd4():
    return TriangularFD(4, **RING_PARAMS)


# acceptance results are collected here and echoed at the end of the run
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
