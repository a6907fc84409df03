import sys

import numpy as np
import pytest

from neurohand import kernels


@pytest.fixture(params=kernels.available_backends())
def backend(request):
    """Run a test once per kernel implementation."""
    saved = kernels._impl
    kernels._impl = kernels.get_backend(request.param)
    yield request.param
    kernels._impl = saved


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    results = getattr(mod, "RESULTS", {})
    if results:
        terminalreporter.section("acceptance criteria")
        for n in sorted(results):
            terminalreporter.write_line(results[n])
