import sys
from pathlib import Path

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

sys.path.insert(0, str(Path(__file__).parent))

from horolab import funcspace  # noqa: E402

settings.register_profile("horolab", deadline=None, max_examples=40,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("horolab")

# the height band used throughout: plateau on [1.5, 2.5], cosine ramps of width 0.5
BAND = (1.5, 2.5, 0.5)


@pytest.fixture(scope="session")
def band():
    return funcspace.make_height_band(*BAND)


@pytest.fixture(scope="session")
def raw_band():
    return funcspace.make_height_band(*BAND, recentre=False)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def pytest_terminal_summary(terminalreporter):
    try:
        from test_acceptance import RESULTS
    except ImportError:
        return
    if RESULTS:
        terminalreporter.section("acceptance criteria")
        for key in sorted(RESULTS, key=lambda k: (int(k.split()[0].rstrip("ab")), k)):
            terminalreporter.write_line(RESULTS[key])
