import numpy as np
import pytest

from mckv import _backend

BACKENDS = [_backend.python_kernels] + (
    [_backend.compiled_kernels] if _backend.compiled_kernels is not None else []
)


@pytest.fixture(params=BACKENDS, ids=lambda k: k.BACKEND)
def backend(request):
    return request.param


@pytest.fixture
def rng():
    return np.random.default_rng(20240601)


ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
