import os

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from geotess.experiments import surface as cached_surface

settings.register_profile("default", deadline=None, max_examples=60,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))


@pytest.fixture(scope="session")
def surf():
    return cached_surface()


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


# criterion number -> "PASS/FAIL ..." line, filled by the acceptance suite
ACCEPTANCE: dict = {}


@pytest.fixture(scope="session")
def acceptance_log():
    return ACCEPTANCE


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE):
        terminalreporter.write_line(f"criterion {k:2d}: {ACCEPTANCE[k]}")
