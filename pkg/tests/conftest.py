import numpy as np
import pytest

from brakeorbit.builder import assemble
from brakeorbit.minimizer import MinimizeConfig, minimize
from brakeorbit.nonlinearity import PurePower
from brakeorbit.potential import ground_state
from brakeorbit.radial import RadialField, RadialGrid


def random_monotone(grid, rng, amp=None):
    """Positive decreasing profile with random increments and a random decay length."""
    r = grid.nodes
    L = rng.uniform(0.5, 3.0)
    inc = rng.exponential(size=grid.n_r) * np.exp(-r / L)
    u = np.cumsum(inc[::-1])[::-1]
    a = rng.uniform(0.2, 3.0) if amp is None else amp
    return RadialField(grid, a * u / u[0])


def random_field(grid, rng):
    """Smooth signed profile, decaying towards r_max, not monotone."""
    r = grid.nodes
    out = np.zeros_like(r)
    for _ in range(4):
        c, w, a = rng.uniform(0, 5), rng.uniform(0.3, 2.0), rng.normal()
        out += a * np.exp(-((r - c) / w) ** 2)
    return RadialField(grid, out)


@pytest.fixture(scope="session")
def cubic():
    return PurePower(3)


@pytest.fixture(scope="session")
def grid1():
    return RadialGrid(1, 20.0, 2000)


@pytest.fixture(scope="session")
def gs1(cubic, grid1):
    return ground_state(cubic, grid1)


@pytest.fixture(scope="session")
def small_grid():
    return RadialGrid(1, 20.0, 400)


@pytest.fixture(scope="session")
def small_gs(cubic, small_grid):
    return ground_state(cubic, small_grid)


@pytest.fixture(scope="session")
def half_level_core(cubic, gs1):
    b = 0.5 * gs1.c
    return minimize(MinimizeConfig(b=b, seed=gs1.w0), None, cubic)


@pytest.fixture(scope="session")
def half_level_solution(cubic, gs1, half_level_core):
    return assemble(half_level_core, half_level_core.b, cubic)


@pytest.fixture(scope="session")
def homoclinic_core(cubic, gs1):
    return minimize(MinimizeConfig(b=0.0, seed=gs1.w0), None, cubic)


@pytest.fixture(scope="session")
def homoclinic_solution(cubic, homoclinic_core):
    return assemble(homoclinic_core, 0.0, cubic)


# pass/fail lines from the acceptance suite, repeated at the end of the run
ACCEPTANCE = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE):
            terminalreporter.write_line(line)
