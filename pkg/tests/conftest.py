import numpy as np
import pytest

from fetsgan import engine as E


def numeric_grad(f, arr, h=1e-5):
    """Central differences of scalar ``f()`` with respect to every entry of ``arr`` (in place)."""
    g = np.zeros_like(arr)
    it = np.nditer(arr, flags=["multi_index"])
    for _ in it:
        i = it.multi_index
        old = arr[i]
        arr[i] = old + h
        up = f()
        arr[i] = old - h
        down = f()
        arr[i] = old
        g[i] = (up - down) / (2 * h)
    return g


def rel_err(a, b):
    return float(np.max(np.abs(a - b)) / max(1e-8, np.max(np.abs(a)) + np.max(np.abs(b))))


@pytest.fixture
def f64():
    with E.default_dtype(np.float64):
        yield


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(params=E.available_backends())
def backend(request):
    old = E.get_backend()
    E.set_backend(request.param)
    yield request.param
    E.set_backend(old)


@pytest.fixture
def check_grads():
    """Compare engine gradients of ``build(*leaves)`` to central differences, all leaves."""

    def run(build, *arrays, tol=1e-5):
        leaves = [E.Tensor(a, requires_grad=True, dtype=np.float64) for a in arrays]
        E.backward(build(*leaves))
        worst = 0.0
        for leaf in leaves:
            num = numeric_grad(lambda: float(build(*leaves).data), leaf.data)
            worst = max(worst, rel_err(leaf.grad, num))
        assert worst < tol, f"relative gradient error {worst:.3g}"
        return worst

    return run


# one line per acceptance criterion, filled by tests/test_acceptance.py
ACCEPTANCE = {}


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for key in sorted(ACCEPTANCE):
            terminalreporter.write_line(ACCEPTANCE[key])
