"""RF (range/azimuth/elevation) and IR (azimuth/elevation) measurement models.

RF angles are in a site ENU frame, azimuth measured from north toward east.
IR angles are in the missile body frame (x nose, y right wing, z down);
positive elevation is toward -z.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .frames import Frame, GeodeticSite, state_transform, ECI

DEFAULT_R_RF = np.diag([25.0, 1e-3**2, 1e-3**2])
DEFAULT_R_IR = np.diag([0.5e-3**2, 0.5e-3**2])
DEFAULT_P_D = 0.95

_TINY = 1e-300


class GeometryError(ValueError):
    """Measurement model evaluated at a degenerate geometry."""


def wrap_angle(a):
    """Wrap to (-pi, pi]."""
    w = np.mod(np.asarray(a, dtype=float) + math.pi, 2.0 * math.pi) - math.pi
    w = np.where(w == -math.pi, math.pi, w)
    return w if w.ndim else float(w)


@dataclass(frozen=True, eq=False)
class RfMeasurement:
    range: float
    azimuth: float
    elevation: float
    noise_cov: np.ndarray = field(default_factory=lambda: DEFAULT_R_RF.copy())
    sensor_id: str = "rf"
    timestamp: float = 0.0
    truth_id: str | None = None  # simulation label, never read by the tracker

    @property
    def z(self) -> np.ndarray:
        return np.array([self.range, self.azimuth, self.elevation])


@dataclass(frozen=True, eq=False)
class IrMeasurement:
    azimuth: float
    elevation: float
    noise_cov: np.ndarray = field(default_factory=lambda: DEFAULT_R_IR.copy())
    sensor_id: str = "ir"
    timestamp: float = 0.0
    truth_id: str | None = None

    @property
    def z(self) -> np.ndarray:
        return np.array([self.azimuth, self.elevation])


# --- RF ---------------------------------------------------------------------


def h_rf(p_enu: np.ndarray) -> np.ndarray:
    """Range, azimuth ``atan2(e, n)`` and elevation ``asin(u/r)``; accepts ``(..., 3)``."""
    p = np.asarray(p_enu, dtype=float)
    e, n, u = p[..., 0], p[..., 1], p[..., 2]
    rho2 = e * e + n * n
    if np.any(rho2 <= _TINY):
        raise GeometryError("RF azimuth undefined at zenith (e = n = 0)")
    r = np.sqrt(rho2 + u * u)
    el = np.arcsin(np.clip(u / r, -1.0, 1.0))
    return np.stack([r, np.arctan2(e, n), el], axis=-1)


def h_rf_jacobian(p_enu: np.ndarray) -> np.ndarray:
    """3x6 Jacobian of :func:`h_rf` with respect to the ENU six-state."""
    e, n, u = (float(c) for c in np.asarray(p_enu, dtype=float)[:3])
    rho2 = e * e + n * n
    if rho2 <= _TINY:
        raise GeometryError("RF Jacobian undefined at zenith (e = n = 0)")
    rho = math.sqrt(rho2)
    r2 = rho2 + u * u
    r = math.sqrt(r2)
    jac = np.zeros((3, 6))
    jac[0, :3] = (e / r, n / r, u / r)
    # gradient of atan2(e, n)
    jac[1, :3] = (n / rho2, -e / rho2, 0.0)
    jac[2, :3] = (-(e * u / rho) / r2, -(n * u / rho) / r2, rho / r2)
    return jac


def rf_to_enu(z: np.ndarray) -> np.ndarray:
    """Inverse of :func:`h_rf`: ENU position from (range, azimuth, elevation)."""
    r, az, el = (float(c) for c in z)
    ce = math.cos(el)
    return np.array([r * ce * math.sin(az), r * ce * math.cos(az), r * math.sin(el)])


def rf_to_enu_jacobian(z: np.ndarray) -> np.ndarray:
    r, az, el = (float(c) for c in z)
    ce, se = math.cos(el), math.sin(el)
    ca, sa = math.cos(az), math.sin(az)
    return np.array(
        [
            [ce * sa, r * ce * ca, -r * se * sa],
            [ce * ca, -r * ce * sa, -r * se * ca],
            [se, 0.0, r * ce],
        ]
    )


# --- IR ---------------------------------------------------------------------


def h_ir(p_body: np.ndarray) -> np.ndarray:
    """Azimuth ``atan2(y, x)`` and elevation ``atan2(-z, hypot(x, y))``; accepts ``(..., 3)``."""
    p = np.asarray(p_body, dtype=float)
    x, y, z = p[..., 0], p[..., 1], p[..., 2]
    rho2 = x * x + y * y
    if np.any(rho2 <= _TINY):
        raise GeometryError("IR angles undefined along the body z axis")
    return np.stack([np.arctan2(y, x), np.arctan2(-z, np.sqrt(rho2))], axis=-1)


def h_ir_jacobian(p_body: np.ndarray) -> np.ndarray:
    """2x6 Jacobian of :func:`h_ir` with respect to the body six-state."""
    x, y, z = (float(c) for c in np.asarray(p_body, dtype=float)[:3])
    rho2 = x * x + y * y
    if rho2 <= _TINY:
        raise GeometryError("IR Jacobian undefined along the body z axis")
    rho = math.sqrt(rho2)
    r2 = rho2 + z * z
    jac = np.zeros((2, 6))
    jac[0, :3] = (-y / rho2, x / rho2, 0.0)
    jac[1, :3] = ((x * z / rho) / r2, (y * z / rho) / r2, -rho / r2)
    return jac


def ir_to_body_direction(az: float, el: float) -> np.ndarray:
    """Unit line-of-sight in body axes for the given IR angles."""
    ce = math.cos(el)
    return np.array([ce * math.cos(az), ce * math.sin(az), -math.sin(el)])


# --- sensor configurations and simulation -----------------------------------


@dataclass(frozen=True, eq=False)
class RfSensor:
    """A ground/ship radar at a fixed site."""

    id: str
    site: GeodeticSite
    noise_cov: np.ndarray = field(default_factory=lambda: DEFAULT_R_RF.copy())
    p_d: float = DEFAULT_P_D
    false_alarm_rate: float = 0.0  # expected false alarms per scan
    max_range: float = 3.0e6  # m, extent of the false-alarm region
    noise_scale: float = 1.0  # simulated noise multiplier; 0 gives exact returns, noise_cov still reported

    @property
    def frame(self) -> Frame:
        return Frame.enu(self.site)

    def false_alarm_volume(self) -> float:
        """Measurement-space volume (m rad^2) over which false alarms are spread."""
        return self.max_range * 2.0 * math.pi * (math.pi / 2.0)


@dataclass(frozen=True, eq=False)
class IrSensor:
    """The interceptor's IR seeker.  Its pose is supplied per scan."""

    id: str = "seeker"
    noise_cov: np.ndarray = field(default_factory=lambda: DEFAULT_R_IR.copy())
    p_d: float = DEFAULT_P_D
    false_alarm_rate: float = 0.0
    fov_half_angle: float = math.radians(30.0)
    noise_scale: float = 1.0

    def false_alarm_volume(self) -> float:
        return (2.0 * self.fov_half_angle) ** 2

    def in_fov(self, p_body: np.ndarray) -> bool:
        p = np.asarray(p_body, dtype=float)[:3]
        norm = np.linalg.norm(p)
        if norm == 0.0:
            return False
        return math.acos(min(1.0, max(-1.0, p[0] / norm))) <= self.fov_half_angle


def _noise_factor(cov: np.ndarray) -> np.ndarray:
    """Symmetric square root that tolerates a zero (noise-free) covariance."""
    w, v = np.linalg.eigh(np.asarray(cov, dtype=float))
    return v * np.sqrt(np.clip(w, 0.0, None))


def rf_visible(x_eci: np.ndarray, t: float, sensor: RfSensor) -> bool:
    p_enu = state_transform(ECI, sensor.frame, t).apply(x_eci)[:3]
    return bool(p_enu[2] > 0.0)


def simulate_rf(
    x_eci: np.ndarray,
    t: float,
    sensor: RfSensor,
    rng: np.random.Generator,
    truth_id: str | None = None,
) -> RfMeasurement | None:
    """Noisy RF detection of a true ECI state, or ``None`` for a missed detection."""
    detected = rng.random() < sensor.p_d
    noise = sensor.noise_scale * (_noise_factor(sensor.noise_cov) @ rng.standard_normal(3))
    if not detected:
        return None
    p_enu = state_transform(ECI, sensor.frame, t).apply(x_eci)[:3]
    try:
        z = h_rf(p_enu) + noise
    except GeometryError:
        return None
    return RfMeasurement(
        float(z[0]), wrap_angle(z[1]), float(z[2]), np.array(sensor.noise_cov), sensor.id, t, truth_id
    )


def simulate_ir(
    x_eci: np.ndarray,
    t: float,
    sensor: IrSensor,
    body: Frame,
    rng: np.random.Generator,
    truth_id: str | None = None,
) -> IrMeasurement | None:
    """Noisy IR detection in the seeker ``body`` frame, or ``None``."""
    detected = rng.random() < sensor.p_d
    noise = sensor.noise_scale * (_noise_factor(sensor.noise_cov) @ rng.standard_normal(2))
    if not detected:
        return None
    p_body = state_transform(ECI, body, t).apply(x_eci)[:3]
    try:
        z = h_ir(p_body) + noise
    except GeometryError:
        return None
    return IrMeasurement(wrap_angle(z[0]), float(z[1]), np.array(sensor.noise_cov), sensor.id, t, truth_id)


def simulate_measurement(
    truth: np.ndarray,
    t: float,
    sensor: RfSensor | IrSensor,
    rng: np.random.Generator,
    body: Frame | None = None,
    truth_id: str | None = None,
) -> RfMeasurement | IrMeasurement | None:
    if isinstance(sensor, RfSensor):
        return simulate_rf(truth, t, sensor, rng, truth_id)
    if body is None:
        raise ValueError("IR simulation needs the seeker body frame")
    return simulate_ir(truth, t, sensor, body, rng, truth_id)
