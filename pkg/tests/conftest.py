import numpy as np
import pytest
from hypothesis import settings

from maxtomo.core import BoundaryPatch, RefractiveIndexField, WaveParams, make_box_grid

settings.register_profile("default", max_examples=30, deadline=None)
settings.load_profile("default")


@pytest.fixture(scope="session")
def grid8():
    return make_box_grid((1.0, 1.0, 1.0), 8)


@pytest.fixture(scope="session")
def wp3():
    return WaveParams.from_wavenumber(3.0)


@pytest.fixture(scope="session")
def top8(grid8):
    return BoundaryPatch.from_faces(grid8, ("z+",))


@pytest.fixture(scope="session")
def vac8(grid8):
    return RefractiveIndexField.homogeneous(grid8, 1.0)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)



def pytest_terminal_summary(terminalreporter):
    import sys

    lines = []
    for name, mod in list(sys.modules.items()):
        if name.endswith("test_acceptance"):
            lines += getattr(mod, "RESULTS", [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines, key=lambda s: int(s.split()[1])):
            terminalreporter.write_line(line)
