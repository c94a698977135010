import numpy as np
import pytest

from magfp.field import GridConfig, MagneticField


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture(scope="session")
def small_grid():
    return GridConfig(d_x=1, d_v=2, n_x=7, n_v=8)


@pytest.fixture(scope="session")
def desk_grid():
    return GridConfig(d_x=1, d_v=2, n_x=17, n_v=24)


@pytest.fixture(scope="session")
def grid3():
    return GridConfig(d_x=2, d_v=3, n_x=5, n_v=5)


def varying_field(grid, amp=0.5):
    n = 1 if grid.d_v == 2 else 3
    modes = [(c, (1,) + (0,) * (grid.d_x - 1), amp, 0.3 * amp) for c in range(n)]
    if grid.d_x > 1:
        modes.append((n - 1, (0, 1), 0.2 * amp, 0.0))
    return MagneticField.from_modes(grid, modes, [0.2] * n)


ACCEPTANCE_LINES: list = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
