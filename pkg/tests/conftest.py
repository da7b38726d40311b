import math

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from pesplit.grid import Field, make_grid

settings.register_profile("default", max_examples=40, deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


@pytest.fixture
def small_grid():
    return make_grid(math.pi, 2.0, 8, 6)


@pytest.fixture
def pi_grid():
    return make_grid(math.pi, math.pi, 6, 5)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def random_field(rng, grid, decay=1.0, scale=1.0):
    c = scale * rng.standard_normal(grid.shape) / grid.eigenvalues ** (0.5 * decay)
    c[:, 0] = 0.0
    return Field(grid, c)


# acceptance criteria report one line each at the end of the run
ACCEPTANCE_LINES = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(ACCEPTANCE_LINES):
        terminalreporter.write_line(ACCEPTANCE_LINES[key])
