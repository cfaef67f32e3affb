import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from hdrfuse.fixtures import textured_image

settings.register_profile("default", deadline=None, max_examples=40,
                          suppress_health_check=[HealthCheck.too_slow])
settings.register_profile("thorough", deadline=None, max_examples=300)
settings.load_profile("default")


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def texture64():
    return textured_image(64, 64, seed=7)


@pytest.fixture(scope="session")
def texture256():
    return textured_image(256, 256, seed=11)


def pytest_terminal_summary(terminalreporter):
    from test_acceptance import RESULTS

    if RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in RESULTS:
            terminalreporter.write_line(line)
