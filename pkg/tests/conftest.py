import sys

import numpy as np
import pytest
from hypothesis import settings

from viscolag.spectral import Grid

settings.register_profile("default", max_examples=20, deadline=None)
settings.load_profile("default")

PI = np.pi


@pytest.fixture(scope="session")
def g8():
    return Grid(8)


@pytest.fixture(scope="session")
def g16():
    return Grid(16)


def l2(grid, fh, order=0):
    return float(np.sqrt(grid.norm_sq(fh, order)))


def pytest_terminal_summary(terminalreporter):
    mod = next((m for n, m in list(sys.modules.items()) if n.endswith("test_acceptance")), None)
    lines = getattr(mod, "RESULTS", [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
