import pytest

from partstore import kernels
from partstore.crypto import FastBackend, ProductionBackend

ACCEPTANCE_LINES = []


@pytest.fixture(params=["test", "production"])
def backend(request):
    if request.param == "test":
        return FastBackend(seed=1234)
    # small iteration count keeps the suite quick; the algorithm is unchanged
    return ProductionBackend(iterations=1000)


@pytest.fixture
def fast():
    return FastBackend(seed=99)


@pytest.fixture(params=["numpy", "numba"])
def kernel_backend(request):
    if request.param == "numba" and not kernels.numba_available():
        pytest.skip("numba not installed")
    previous = kernels.use_backend(request.param)
    yield request.param
    kernels.use_backend(previous)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
