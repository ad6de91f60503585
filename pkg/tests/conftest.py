import numpy as np
import pytest

from alrscan.data import PointDataset


def random_points(seed, J=120, p=0.3, d=2, scale=100.0, covariates=0, grid=None):
    g = np.random.default_rng(seed)
    if grid:
        loc = g.integers(0, grid, size=(J, d)).astype(float)
    else:
        loc = np.round(g.random((J, d)) * scale, 2)
    cases = (g.random(J) < p).astype(int)
    cases[0], cases[1] = 1, 0
    cov = None
    if covariates:
        cov = np.column_stack([np.ones(J), g.standard_normal((J, covariates))])
    return PointDataset(loc, cases, cov)


@pytest.fixture
def points():
    return random_points(0)


# one line per acceptance check, echoed at the end of the run
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
