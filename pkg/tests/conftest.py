import numpy as np
import pytest

from dcacal import _kernels_py

try:
    from dcacal import _kernels as _compiled
except ImportError:
    _compiled = None

BACKENDS = [pytest.param(_kernels_py, id="python")]
if _compiled is not None:
    BACKENDS.append(pytest.param(_compiled, id="cython"))


@pytest.fixture(params=BACKENDS)
def kernels(request):
    return request.param


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def random_logits(rng, n, k, scale=2.0):
    return rng.normal(scale=scale, size=(n, k))


def numeric_grad(f, x, eps=1e-6):
    """Central finite differences of scalar ``f`` over every entry of ``x`` (modified in place, restored)."""
    g = np.zeros_like(x)
    it = np.nditer(x, flags=["multi_index"])
    for _ in it:
        i = it.multi_index
        old = x[i]
        x[i] = old + eps
        fp = f()
        x[i] = old - eps
        fm = f()
        x[i] = old
        g[i] = (fp - fm) / (2 * eps)
    return g


def rel_error(analytic, numeric):
    """Max abs difference relative to the gradient's scale."""
    a, n = np.asarray(analytic), np.asarray(numeric)
    scale = max(np.max(np.abs(a)), np.max(np.abs(n)), 1e-8)
    return float(np.max(np.abs(a - n)) / scale)


ACCEPTANCE_RESULTS = []


@pytest.fixture
def acceptance():
    """Record one pass/fail line per acceptance criterion."""
    def record(name, passed, detail):
        ACCEPTANCE_RESULTS.append((name, bool(passed), detail))
        return passed

    return record


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for name, passed, detail in ACCEPTANCE_RESULTS:
        terminalreporter.write_line(f"{'PASS' if passed else 'FAIL'}  {name}: {detail}")
