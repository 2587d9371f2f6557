import numpy as np
import pytest

from fracpme.grid import Field, Grid1D

ACCEPTANCE_LINES = []


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def grid512():
    return Grid1D(2.0, 512)


def gaussian(grid, center=0.0, sigma=0.2, mass=1.0):
    x = grid.centers
    vals = np.exp(-0.5 * ((x - center) / sigma) ** 2)
    f = Field(grid, vals)
    return f * (mass / f.mass())


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
