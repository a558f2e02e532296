import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from arrayins.array_model import paper_array, square_array

settings.register_profile(
    "default", deadline=None, max_examples=60, suppress_health_check=[HealthCheck.too_slow]
)
settings.load_profile("default")

ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def paper_geo():
    return paper_array()


@pytest.fixture(scope="session")
def square_geo():
    return square_array(0.01)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def random_rotation_vector(rng, max_angle=np.pi):
    axis = rng.normal(size=3)
    axis /= np.linalg.norm(axis)
    return axis * rng.uniform(0.0, max_angle)
