import numpy as np
import pytest

from elliptic_ortho.asym import make_gfunction, make_szego
from elliptic_ortho.curve import from_roots
from elliptic_ortho.exact import FLAT, Weight, moments

D_THIRD = 1.0 / 3.0
TRIG_WEIGHT = Weight((0.0, 0.5), (0.3,))

# lines printed by the acceptance suite, echoed in the terminal summary
ACCEPTANCE_LINES = []


@pytest.fixture(scope="session")
def curve_int():
    """Cubic 4(X-1)(X-2)(X+3)."""
    return from_roots(2.0, 1.0, -3.0)


@pytest.fixture(scope="session")
def curve_half():
    """Cubic 4(X-1)(X-3/2)(X+5/2)."""
    return from_roots(1.5, 1.0, -2.5)


@pytest.fixture(scope="session")
def mom_int(curve_int):
    return moments(curve_int, D_THIRD, FLAT, n_max=12)


@pytest.fixture(scope="session")
def mom_half(curve_half):
    return moments(curve_half, D_THIRD, FLAT, n_max=12)


@pytest.fixture(scope="session")
def gf_half(curve_half):
    return make_gfunction(curve_half)


@pytest.fixture(scope="session")
def sz_flat_half(curve_half):
    return make_szego(curve_half)


@pytest.fixture(scope="session")
def sz_trig_half(curve_half):
    return make_szego(curve_half, TRIG_WEIGHT)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
