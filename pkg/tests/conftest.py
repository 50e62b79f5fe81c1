import pytest

from qfi3d.beam_models import BeamSpec, sample

W0 = 100e-6
WAVELENGTH = 0.5e-6


@pytest.fixture(scope="session")
def spec():
    return BeamSpec.gaussian(W0, WAVELENGTH)


@pytest.fixture(scope="session")
def geometry(spec):
    return spec.default_geometry()


@pytest.fixture(scope="session")
def gauss(spec, geometry):
    return sample(spec, (0.0, 0.0, 0.0), geometry)


def pytest_terminal_summary(terminalreporter):
    import sys

    mod = sys.modules.get("test_acceptance") or sys.modules.get("tests.test_acceptance")
    lines = getattr(mod, "RESULTS", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
