import numpy as np
import pytest


def fd_grad(fn, x, h=1e-5):
    """Central finite differences of scalar fn(x) w.r.t. every entry of x."""
    x = np.array(x, dtype=np.float64)
    g = np.zeros_like(x)
    it = np.nditer(x, flags=["multi_index"])
    while not it.finished:
        idx = it.multi_index
        orig = x[idx]
        x[idx] = orig + h
        fp = fn(x)
        x[idx] = orig - h
        fm = fn(x)
        x[idx] = orig
        g[idx] = (fp - fm) / (2 * h)
        it.iternext()
    return g


def max_rel_err(analytic, numeric, floor=1e-8):
    return float(np.max(np.abs(analytic - numeric) / (np.abs(numeric) + floor)))


@pytest.fixture
def rng():
    return np.random.default_rng(20240817)
