import numpy as np
import pytest

from flatt import kernels
from flatt.scenario import CATALOG, bundled


@pytest.fixture(params=kernels.available_backends())
def backend(request):
    """Run the test once per available evaluation kernel."""
    with kernels.use_backend(request.param):
        yield request.param


@pytest.fixture(scope="session")
def catalog():
    return {name: bundled(name) for name in CATALOG}


@pytest.fixture(scope="session")
def laws(catalog):
    return {name: sc.law() for name, sc in catalog.items()}


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def pytest_terminal_summary(terminalreporter):
    from helpers import ACCEPTANCE_LINES

    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
