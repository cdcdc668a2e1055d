import numpy as np
import pytest

from gwspeed.distributions import ConductanceLaw, OffspringLaw


@pytest.fixture
def nu12():
    """Offspring 1 or 2 with probability 1/2 each."""
    return OffspringLaw.from_pairs([(1, 0.5), (2, 0.5)])


@pytest.fixture
def binary():
    return OffspringLaw.point_mass(2)


@pytest.fixture
def unit():
    return ConductanceLaw.point_mass(1.0)


@pytest.fixture
def two_atom():
    return ConductanceLaw.from_pairs([(0.5, 0.5), (2.0, 0.5)])


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def within(x, target, se, sigmas=3.0):
    return abs(x - target) <= sigmas * se


def pytest_terminal_summary(terminalreporter):
    try:
        from test_acceptance import RESULTS
    except ImportError:
        return
    if RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in RESULTS:
            terminalreporter.write_line(line)
