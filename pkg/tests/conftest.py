import os
import sys

import pytest

sys.path.insert(0, os.path.dirname(__file__))

from ibptc.rsc import build_trellis  # noqa: E402


@pytest.fixture(scope="session")
def trellis():
    return build_trellis()


def pytest_configure(config):
    config.addinivalue_line("markers", "slow: long-running Monte Carlo acceptance checks")
