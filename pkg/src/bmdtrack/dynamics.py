"""Two-body Kepler plant: derivative, analytic Jacobian and fixed-step integrators.

States are ECI six-vectors ``(p, v)``; every function also accepts a stack of
shape ``(N, 6)`` so sigma points can be propagated in one call.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

MU_EARTH = 3.986004418e14  # m^3/s^2
DEFAULT_DT_MAX = 0.5  # s

_MIN_RADIUS = 1.0  # m


class SingularityError(ArithmeticError):
    """Position too close to the gravitating centre."""


@dataclass(frozen=True)
class PhysicalConstants:
    mu: float = MU_EARTH

    def __post_init__(self):
        if not self.mu > 0:
            raise ValueError("mu must be positive")


EARTH = PhysicalConstants()


def _radius(p: np.ndarray) -> np.ndarray:
    r = np.sqrt((p * p).sum(axis=-1))
    if not (r >= _MIN_RADIUS).all():
        raise SingularityError("position within 1 m of the origin")
    return r


def kepler_derivative(x: np.ndarray, c: PhysicalConstants = EARTH) -> np.ndarray:
    """Return ``(v, -mu p / |p|^3)``."""
    x = np.asarray(x, dtype=float)
    out = np.empty_like(x)
    p = x[..., :3]
    r = _radius(p)
    out[..., :3] = x[..., 3:6]
    out[..., 3:6] = p * (-c.mu / (r * r * r))[..., None]
    return out


def gravity_gradient(p: np.ndarray, c: PhysicalConstants = EARTH) -> np.ndarray:
    """Lower-left Jacobian block ``-mu (I/|p|^3 - 3 p p^T/|p|^5)``."""
    p = np.asarray(p, dtype=float)
    r = math.sqrt(p[0] * p[0] + p[1] * p[1] + p[2] * p[2])
    if r < _MIN_RADIUS:
        raise SingularityError("position within 1 m of the origin")
    r3 = r * r * r
    g = (3.0 * c.mu / (r3 * r * r)) * np.outer(p, p)
    g[np.diag_indices(3)] -= c.mu / r3
    return g


def kepler_jacobian(x: np.ndarray, c: PhysicalConstants = EARTH) -> np.ndarray:
    """Analytic 6x6 Jacobian of :func:`kepler_derivative` at a single state."""
    x = np.asarray(x, dtype=float)
    jac = np.zeros((6, 6))
    jac[:3, 3:] = np.eye(3)
    jac[3:, :3] = gravity_gradient(x[:3], c)
    return jac


def propagate_euler(x: np.ndarray, dt: float, c: PhysicalConstants = EARTH) -> np.ndarray:
    """One explicit Euler step (a single derivative evaluation)."""
    if not dt > 0:
        raise ValueError("dt must be positive")
    x = np.asarray(x, dtype=float)
    return x + dt * kepler_derivative(x, c)


def propagate_rk4(x: np.ndarray, dt: float, c: PhysicalConstants = EARTH) -> np.ndarray:
    """One classical fourth-order Runge-Kutta step."""
    if not dt > 0:
        raise ValueError("dt must be positive")
    x = np.asarray(x, dtype=float)
    k1 = kepler_derivative(x, c)
    k2 = kepler_derivative(x + 0.5 * dt * k1, c)
    k3 = kepler_derivative(x + 0.5 * dt * k2, c)
    k4 = kepler_derivative(x + dt * k3, c)
    return x + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


INTEGRATORS = {"euler": propagate_euler, "rk4": propagate_rk4}


def substeps(interval: float, dt_max: float = DEFAULT_DT_MAX) -> tuple[int, float]:
    """Number and size of equal substeps covering ``interval``."""
    if not interval > 0:
        raise ValueError("interval must be positive")
    if not dt_max > 0:
        raise ValueError("dt_max must be positive")
    n = max(1, math.ceil(interval / dt_max - 1e-12))
    return n, interval / n


def propagate(
    x: np.ndarray,
    interval: float,
    c: PhysicalConstants = EARTH,
    integrator: str = "euler",
    dt_max: float = DEFAULT_DT_MAX,
) -> np.ndarray:
    """Propagate over ``interval`` in ``ceil(interval/dt_max)`` equal substeps."""
    step = INTEGRATORS[integrator]
    n, h = substeps(interval, dt_max)
    for _ in range(n):
        x = step(x, h, c)
    return x


def specific_energy(x: np.ndarray, c: PhysicalConstants = EARTH) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    v2 = (x[..., 3:6] ** 2).sum(axis=-1)
    return 0.5 * v2 - c.mu / _radius(x[..., :3])


def angular_momentum(x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    return np.cross(x[..., :3], x[..., 3:6])
