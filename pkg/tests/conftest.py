import numpy as np
import pytest

from padicwalk.heatkernel import HeatKernelModel
from padicwalk.landscape import Exponential, PowerLaw, kappa_admissible_max

ACCEPTANCE_LINES = []


@pytest.fixture(scope="session")
def golden():
    """p=3, n=1, w = r**3 (symbol exponent 2)."""
    return PowerLaw(3, 1, 1.0, 2.0)


@pytest.fixture(scope="session")
def golden_model(golden):
    return HeatKernelModel(golden, 1.0, t_min=1e-10)


@pytest.fixture(scope="session")
def transient_model():
    L = PowerLaw(3, 1, 1.0, 0.5)          # w = r**1.5
    return HeatKernelModel(L, kappa_admissible_max(L), fpt=True)


@pytest.fixture(scope="session")
def recurrent_model():
    L = PowerLaw(3, 1, 1.0, 1.5)          # w = r**2.5
    return HeatKernelModel(L, kappa_admissible_max(L), fpt=True)


@pytest.fixture(scope="session")
def exp_model():
    return HeatKernelModel(Exponential(5, 1, 1.0, 2.0, 0.5), 0.7)


@pytest.fixture
def rng():
    return np.random.default_rng(20240917)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
