import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from mtlab.functional import ProblemSpec
from mtlab.surface import build_icosphere, build_torus

settings.register_profile(
    "default",
    deadline=None,
    max_examples=25,
    derandomize=True,
    suppress_health_check=[HealthCheck.function_scoped_fixture],
)
settings.load_profile("default")


@pytest.fixture(scope="session")
def flat64():
    return build_torus(64)


@pytest.fixture(scope="session")
def flat256():
    return build_torus(256)


@pytest.fixture(scope="session")
def wavy64():
    return build_torus(64, lambda x, y: 0.3 * np.sin(2 * np.pi * y))


@pytest.fixture(scope="session")
def sphere4():
    return build_icosphere(4)


@pytest.fixture(scope="session")
def unit_spec64(flat64):
    return ProblemSpec(flat64, flat64.constant(1.0), flat64.constant(1.0))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


ACCEPTANCE_LINES: dict = {}


@pytest.fixture(scope="session")
def acceptance_log():
    """Collects one status line per acceptance criterion."""
    return ACCEPTANCE_LINES


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE_LINES):
        terminalreporter.write_line(ACCEPTANCE_LINES[k])
