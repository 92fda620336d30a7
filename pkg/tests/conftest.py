import numpy as np
import pytest

from helpers import ACCEPTANCE_RESULTS
from omnirelay import comms, vehicle


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(ACCEPTANCE_RESULTS):
        passed, text = ACCEPTANCE_RESULTS[number]
        terminalreporter.write_line(f"[{'PASS' if passed else 'FAIL'}] criterion {number}: {text}")


@pytest.fixture
def hexa():
    return vehicle.tilted_hexarotor()


@pytest.fixture
def quad():
    return vehicle.planar_quadrotor()


@pytest.fixture
def comm():
    return comms.default_comm_params()


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
