import numpy as np
import pytest

ACCEPTANCE_LINES = []


def central_diff(fun, z, h=1e-6):
    """Central finite-difference Jacobian of a vector function."""
    z = np.asarray(z, dtype=float)
    f0 = np.asarray(fun(z), dtype=float)
    out = np.zeros(f0.shape + z.shape)
    for i in range(z.size):
        e = np.zeros_like(z)
        e.flat[i] = h
        out[..., i] = (np.asarray(fun(z + e)) - np.asarray(fun(z - e))) / (2.0 * h)
    return out


def rel_err(a, b):
    a, b = np.asarray(a, dtype=float), np.asarray(b, dtype=float)
    return float(np.abs(a - b).max() / max(np.abs(b).max(), 1.0))


def random_unit_quat(rng, n=None):
    q = rng.standard_normal((4,) if n is None else (n, 4))
    return q / np.linalg.norm(q, axis=-1, keepdims=True)


def random_quad_state(rng):
    x = np.zeros(13)
    x[0:3] = rng.uniform(-3, 3, 3)
    x[3:7] = random_unit_quat(rng)
    x[7:10] = rng.uniform(-5, 5, 3)
    x[10:13] = rng.uniform(-2, 2, 3)
    return x


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
