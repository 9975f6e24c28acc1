import numpy as np
import pytest

from fkcontrol import _accel

BACKENDS = ["numpy"] + (["numba"] if _accel.HAVE_NUMBA else [])


@pytest.fixture(params=BACKENDS)
def backend(request):
    prev = _accel.backend()
    _accel.set_backend(request.param)
    yield request.param
    _accel.set_backend(prev)


@pytest.fixture
def numpy_backend():
    prev = _accel.backend()
    _accel.set_backend("numpy")
    yield
    _accel.set_backend(prev)


def rel_err(a, b):
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    return float(np.max(np.abs(a - b) / np.maximum(np.abs(b), 1e-300)))


def pytest_terminal_summary(terminalreporter):
    from _criteria import RESULTS

    if not RESULTS:
        return
    terminalreporter.write_sep("=", "acceptance criteria")
    for cid in sorted(RESULTS):
        terminalreporter.write_line(RESULTS[cid])
