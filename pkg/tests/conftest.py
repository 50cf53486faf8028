import numpy as np
import pytest

from bmdtrack.frames import GeodeticSite


def central_difference(f, x, step):
    """Column-wise central finite-difference Jacobian of ``f`` at ``x``."""
    x = np.asarray(x, dtype=float)
    f0 = np.asarray(f(x))
    jac = np.zeros((f0.size, x.size))
    for k in range(x.size):
        dx = np.zeros_like(x)
        dx[k] = step if np.isscalar(step) else step[k]
        jac[:, k] = (np.asarray(f(x + dx)) - np.asarray(f(x - dx))) / (2.0 * dx[k])
    return jac


def max_rel_error(a, b, floor):
    """Largest entrywise error relative to ``max(|b|, floor)``."""
    return float(np.max(np.abs(a - b) / np.maximum(np.abs(b), floor)))


def random_states(rng, n, rmin=6.4e6, rmax=5e7, vmax=8000.0):
    d = rng.standard_normal((n, 3))
    d /= np.linalg.norm(d, axis=1, keepdims=True)
    r = rng.uniform(rmin, rmax, size=(n, 1))
    v = rng.uniform(-vmax, vmax, size=(n, 3))
    return np.hstack([d * r, v])


def random_spd(rng, n, scale=1.0, cond=1e3):
    q, _ = np.linalg.qr(rng.standard_normal((n, n)))
    w = scale * np.exp(rng.uniform(0.0, np.log(cond), size=n))
    return (q * w) @ q.T


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def site():
    return GeodeticSite.from_degrees(30.0, 10.0, 100.0)
