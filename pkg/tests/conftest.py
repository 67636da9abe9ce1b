import sys
from pathlib import Path

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from rough_euler.changevar import build_changevar
from rough_euler.conformal import make_family

sys.path.insert(0, str(Path(__file__).parent))

settings.register_profile(
    "default",
    max_examples=40,
    deadline=None,
    suppress_health_check=[HealthCheck.function_scoped_fixture, HealthCheck.too_slow],
)
settings.load_profile("default")


@pytest.fixture(scope="session")
def identity_map():
    return make_family("identity")


@pytest.fixture(scope="session")
def quad_map():
    """``z + 0.3 z^2``."""
    return make_family("polynomial(0.3, 2)")


@pytest.fixture(scope="session")
def identity_cov(identity_map):
    return build_changevar(identity_map)


@pytest.fixture(scope="session")
def quad_cov(quad_map):
    return build_changevar(quad_map)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


# criterion number -> one-line verdict, printed after the run
ACCEPTANCE_LINES: dict[int, str] = {}


@pytest.fixture
def report_criterion():
    def report(number: int, passed: bool, detail: str) -> None:
        line = f"CRITERION {number}: {'PASS' if passed else 'FAIL'}  {detail}"
        ACCEPTANCE_LINES[number] = line
        print(line)

    return report


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for k in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(ACCEPTANCE_LINES[k])
