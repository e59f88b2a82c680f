import pytest

from partialvp.config import CutoffConfig, NumericsConfig

VALID_INI = """\
[cutoff]
n_cut = 4
beta = 0.5

[numerics]
dx = 0.5
dv = 1.0

[species.1]
sigma = 1
c1 = 1
lambda = 1
alpha = 2
"""


@pytest.fixture
def valid_ini():
    return VALID_INI


@pytest.fixture
def small_cut():
    return CutoffConfig(n_cut=4.0, beta=0.5)


@pytest.fixture
def coarse_num():
    return NumericsConfig(dx=0.5, dv=1.0, weight_floor=1e-8)


# one line per acceptance criterion, printed after the run
ACCEPTANCE_LINES: dict[int, str] = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(ACCEPTANCE_LINES):
        terminalreporter.write_line(ACCEPTANCE_LINES[key])
