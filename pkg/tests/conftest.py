import numpy as np
import pytest

from sparsact.linalg import PlantModel

ACCEPTANCE_LINES: list[str] = []


def scalar_model(a=-1.0, b=1.0, q=1.0, r=1.0, v=2.0) -> PlantModel:
    """One-state, one-input plant; with the defaults x(y) = 1 - y."""
    return PlantModel(A=[[a]], B=[[b]], C=[[1.0]], V=[[v]], Q=[[q]], R=[[r]])


@pytest.fixture
def scalar():
    return scalar_model()


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
