import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from mmgbm.model import Contract, Grid, reference_model
from mmgbm.pricer import solve_surface

settings.register_profile("default", deadline=None, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")

ACCEPTANCE_LINES = []


def _criterion_key(line):
    label = line.split()[1].rstrip(":")
    digits = "".join(ch for ch in label if ch.isdigit())
    return int(digits), label


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=_criterion_key):
            terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def model():
    return reference_model()


@pytest.fixture(scope="session")
def ref_grid():
    return Grid(51, 400, 1.5)


@pytest.fixture(scope="session")
def ref_contract():
    return Contract(strike=1.0, maturity=0.1)


@pytest.fixture(scope="session")
def ref_surface(model, ref_contract, ref_grid):
    return solve_surface(model, ref_contract, ref_grid)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
