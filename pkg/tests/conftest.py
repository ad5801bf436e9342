import pytest

from lyapcrit.acceptance import GAUSS, Context
from lyapcrit.ychain import DEFAULT_GRID, edge_fits

ACCEPTANCE_LINES = []


@pytest.fixture(scope="session")
def ctx():
    """Full-size acceptance context shared by every test that needs the
    Gaussian edge fits or the Furstenberg sweep."""
    return Context()


@pytest.fixture(scope="session")
def gauss_fits(ctx):
    return ctx.fits(GAUSS)


@pytest.fixture(scope="session")
def gaussian_sweep(ctx):
    return ctx.gaussian_sweep()


@pytest.fixture(scope="session")
def logistic_fits():
    from lyapcrit.disorder import DisorderLaw
    return edge_fits(DisorderLaw.logistic(), DEFAULT_GRID, 1e-12, 20000)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
