import numpy as np
import pytest

from bcdpet.phantoms import ScenarioSpec, make_phantom, simulate_measurement, testing_phantom
from bcdpet.projector import Geometry, get_projector


@pytest.fixture(scope="session")
def geom32():
    return Geometry(32, 32, n_angles=48)


@pytest.fixture(scope="session")
def proj32(geom32):
    return get_projector(geom32)


@pytest.fixture(scope="session")
def sim32(geom32):
    """Three noisy realizations of the test phantom on a 32x32 grid."""
    spec = ScenarioSpec(testing_phantom(geom32), 2e4, 0.5, 3, seed=5)
    img, masks = make_phantom(spec.phantom)
    return simulate_measurement(img, geom32, spec), masks


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


# one line per acceptance criterion, filled by test_acceptance.py
ACCEPTANCE = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE):
        terminalreporter.write_line(ACCEPTANCE[n])
