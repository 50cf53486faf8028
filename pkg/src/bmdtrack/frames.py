"""Coordinate frames and the affine state transforms between them.

Earth model: a sphere of radius ``EARTH_RADIUS`` rotating about the ECI z axis
at ``EARTH_RATE``.  ECI coincides with ECEF at scenario epoch t = 0.

All six-vectors are laid out as ``(x, y, z, vx, vy, vz)``.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numpy as np

EARTH_RADIUS = 6_371_000.0  # m
EARTH_RATE = 7.2921159e-5  # rad/s

_ORTHO_TOL = 1e-10


class FrameError(ValueError):
    """Raised for unsupported frame pairs or malformed frame definitions."""


class FrameKind(enum.Enum):
    ECI = "eci"
    ECEF = "ecef"
    ENU = "enu"
    BODY = "body"


@dataclass(frozen=True)
class GeodeticSite:
    """Spherical-Earth site: latitude/longitude in radians, altitude in meters."""

    latitude: float
    longitude: float
    altitude: float = 0.0

    def __post_init__(self):
        if not abs(self.latitude) <= math.pi / 2:
            raise FrameError(f"latitude {self.latitude} outside [-pi/2, pi/2]")

    @classmethod
    def from_degrees(cls, lat_deg: float, lon_deg: float, alt: float = 0.0) -> "GeodeticSite":
        return cls(math.radians(lat_deg), math.radians(lon_deg), alt)

    def ecef(self) -> np.ndarray:
        """Site position in ECEF."""
        r = EARTH_RADIUS + self.altitude
        cl, sl = math.cos(self.latitude), math.sin(self.latitude)
        return np.array([r * cl * math.cos(self.longitude), r * cl * math.sin(self.longitude), r * sl])

    def ecef_to_enu_rotation(self) -> np.ndarray:
        """Rows are the east, north and up unit vectors expressed in ECEF."""
        sphi, cphi = math.sin(self.latitude), math.cos(self.latitude)
        slam, clam = math.sin(self.longitude), math.cos(self.longitude)
        return np.array(
            [
                [-slam, clam, 0.0],
                [-sphi * clam, -sphi * slam, cphi],
                [cphi * clam, cphi * slam, sphi],
            ]
        )


@dataclass(frozen=True, eq=False)
class Attitude:
    """Direction-cosine matrix rotating ECI vectors into the missile body frame.

    Body axes follow the aircraft convention: x through the nose, y along the
    right wing, z down.
    """

    dcm: np.ndarray

    def __post_init__(self):
        dcm = np.array(self.dcm, dtype=float)
        if dcm.shape != (3, 3):
            raise FrameError("attitude must be a 3x3 matrix")
        if np.abs(dcm.T @ dcm - np.eye(3)).max() > _ORTHO_TOL:
            raise FrameError("attitude matrix is not orthonormal")
        if abs(np.linalg.det(dcm) - 1.0) > _ORTHO_TOL:
            raise FrameError("attitude matrix determinant is not +1")
        dcm.setflags(write=False)
        object.__setattr__(self, "dcm", dcm)

    @classmethod
    def identity(cls) -> "Attitude":
        return cls(np.eye(3))

    @classmethod
    def from_boresight(cls, boresight: np.ndarray, down_hint: np.ndarray) -> "Attitude":
        """Body frame with x along ``boresight`` and z as close to ``down_hint`` as possible."""
        x = np.asarray(boresight, dtype=float)
        x = x / np.linalg.norm(x)
        d = np.asarray(down_hint, dtype=float)
        z = d - (d @ x) * x
        if np.linalg.norm(z) < 1e-9 * max(np.linalg.norm(d), 1.0):
            # boresight parallel to the hint; any perpendicular will do
            helper = np.eye(3)[np.argmin(np.abs(x))]
            z = helper - (helper @ x) * x
        z = z / np.linalg.norm(z)
        y = np.cross(z, x)
        dcm = np.vstack([x, y, z])
        # re-orthonormalise against rounding
        u, _, vt = np.linalg.svd(dcm)
        return cls(u @ vt)


@dataclass(frozen=True, eq=False)
class Frame:
    """A frame tag.  ENU frames carry a site; BODY frames carry attitude and origin.

    ``origin`` for a BODY frame is the ECI six-state of the body (the interceptor).
    """

    kind: FrameKind
    site: GeodeticSite | None = None
    attitude: Attitude | None = None
    origin: np.ndarray | None = field(default=None)

    def __post_init__(self):
        if self.kind is FrameKind.ENU and self.site is None:
            raise FrameError("ENU frame requires a GeodeticSite")
        if self.kind is FrameKind.BODY:
            if self.attitude is None:
                raise FrameError("BODY frame requires an Attitude")
            origin = np.zeros(6) if self.origin is None else np.array(self.origin, dtype=float)
            if origin.shape == (3,):
                origin = np.concatenate([origin, np.zeros(3)])
            if origin.shape != (6,):
                raise FrameError("BODY origin must be a 3- or 6-vector")
            origin.setflags(write=False)
            object.__setattr__(self, "origin", origin)

    @classmethod
    def eci(cls) -> "Frame":
        return cls(FrameKind.ECI)

    @classmethod
    def ecef(cls) -> "Frame":
        return cls(FrameKind.ECEF)

    @classmethod
    def enu(cls, site: GeodeticSite) -> "Frame":
        return cls(FrameKind.ENU, site=site)

    @classmethod
    def body(cls, attitude: Attitude, origin: np.ndarray | None = None) -> "Frame":
        return cls(FrameKind.BODY, attitude=attitude, origin=origin)


ECI = Frame.eci()
ECEF = Frame.ecef()


@dataclass(frozen=True, eq=False)
class State6:
    """Position (m) and velocity (m/s) tagged with a frame and an epoch (s)."""

    position: np.ndarray
    velocity: np.ndarray
    frame: Frame = ECI
    epoch: float = 0.0

    def __post_init__(self):
        for name in ("position", "velocity"):
            v = np.array(getattr(self, name), dtype=float)
            if v.shape != (3,) or not np.all(np.isfinite(v)):
                raise ValueError(f"{name} must be a finite 3-vector")
            v.setflags(write=False)
            object.__setattr__(self, name, v)

    @classmethod
    def from_vector(cls, x: np.ndarray, frame: Frame = ECI, epoch: float = 0.0) -> "State6":
        x = np.asarray(x, dtype=float)
        return cls(x[:3], x[3:6], frame, epoch)

    @property
    def vector(self) -> np.ndarray:
        return np.concatenate([self.position, self.velocity])


@dataclass(frozen=True, eq=False)
class StateTransform:
    """Affine map ``x_to = matrix @ x_from + offset`` on six-states.

    The diagonal 3x3 blocks are rotations.  The lower-left block carries the
    Earth-rotation transport term when one side is Earth-fixed and the other
    inertial; it is zero otherwise.
    """

    matrix: np.ndarray
    offset: np.ndarray

    def __post_init__(self):
        m = np.array(self.matrix, dtype=float)
        b = np.array(self.offset, dtype=float)
        if m.shape != (6, 6) or b.shape != (6,):
            raise FrameError("state transform needs a 6x6 matrix and a 6-vector offset")
        m.setflags(write=False)
        b.setflags(write=False)
        object.__setattr__(self, "matrix", m)
        object.__setattr__(self, "offset", b)

    @classmethod
    def identity(cls) -> "StateTransform":
        return cls(np.eye(6), np.zeros(6))

    @property
    def rotation(self) -> np.ndarray:
        return self.matrix[:3, :3]

    def apply(self, x: np.ndarray) -> np.ndarray:
        """Transform one state ``(6,)`` or a stack ``(N, 6)``."""
        x = np.asarray(x, dtype=float)
        return x @ self.matrix.T + self.offset

    def then(self, other: "StateTransform") -> "StateTransform":
        """Composition: apply ``self`` first, then ``other``."""
        return StateTransform(other.matrix @ self.matrix, other.matrix @ self.offset + other.offset)

    def inverse(self) -> "StateTransform":
        r_pos = self.matrix[:3, :3]
        r_vel = self.matrix[3:, 3:]
        c = self.matrix[3:, :3]
        inv = np.zeros((6, 6))
        inv[:3, :3] = r_pos.T
        inv[3:, 3:] = r_vel.T
        inv[3:, :3] = -r_vel.T @ c @ r_pos.T
        return StateTransform(inv, -inv @ self.offset)


def _rot_z(angle: float) -> np.ndarray:
    c, s = math.cos(angle), math.sin(angle)
    return np.array([[c, s, 0.0], [-s, c, 0.0], [0.0, 0.0, 1.0]])


def _skew(w: np.ndarray) -> np.ndarray:
    return np.array([[0.0, -w[2], w[1]], [w[2], 0.0, -w[0]], [-w[1], w[0], 0.0]])


def _eci_to_ecef_transform(t: float) -> StateTransform:
    r = _rot_z(EARTH_RATE * t)
    m = np.zeros((6, 6))
    m[:3, :3] = r
    m[3:, 3:] = r
    # v_ecef = R v_eci - w x (R p_eci)
    m[3:, :3] = -_skew(np.array([0.0, 0.0, EARTH_RATE])) @ r
    return StateTransform(m, np.zeros(6))


def _ecef_to_enu_transform(site: GeodeticSite) -> StateTransform:
    r = site.ecef_to_enu_rotation()
    m = np.zeros((6, 6))
    m[:3, :3] = r
    m[3:, 3:] = r
    offset = np.concatenate([-r @ site.ecef(), np.zeros(3)])
    return StateTransform(m, offset)


def _eci_to_body_transform(frame: Frame) -> StateTransform:
    c = frame.attitude.dcm
    m = np.zeros((6, 6))
    m[:3, :3] = c
    m[3:, 3:] = c
    return StateTransform(m, -m @ frame.origin)


def _from_eci(frame: Frame, t: float) -> StateTransform:
    kind = frame.kind
    if kind is FrameKind.ECI:
        return StateTransform.identity()
    if kind is FrameKind.ECEF:
        return _eci_to_ecef_transform(t)
    if kind is FrameKind.ENU:
        return _eci_to_ecef_transform(t).then(_ecef_to_enu_transform(frame.site))
    if kind is FrameKind.BODY:
        return _eci_to_body_transform(frame)
    raise FrameError(f"unsupported frame {kind}")


def state_transform(src: Frame, dst: Frame, t: float) -> StateTransform:
    """Affine transform taking six-states in ``src`` to ``dst`` at time ``t``."""
    if not isinstance(src, Frame) or not isinstance(dst, Frame):
        raise FrameError("state_transform expects Frame instances")
    return _from_eci(src, t).inverse().then(_from_eci(dst, t))


def eci_to_ecef(t: float, s: State6) -> State6:
    if s.frame.kind is not FrameKind.ECI:
        raise FrameError("eci_to_ecef expects an ECI state")
    x = _eci_to_ecef_transform(t).apply(s.vector)
    return State6.from_vector(x, ECEF, s.epoch)


def ecef_to_eci(t: float, s: State6) -> State6:
    if s.frame.kind is not FrameKind.ECEF:
        raise FrameError("ecef_to_eci expects an ECEF state")
    x = _eci_to_ecef_transform(t).inverse().apply(s.vector)
    return State6.from_vector(x, ECI, s.epoch)


def ecef_to_enu(site: GeodeticSite, s: State6) -> State6:
    if s.frame.kind is not FrameKind.ECEF:
        raise FrameError("ecef_to_enu expects an ECEF state")
    x = _ecef_to_enu_transform(site).apply(s.vector)
    return State6.from_vector(x, Frame.enu(site), s.epoch)


def enu_to_ecef(s: State6) -> State6:
    if s.frame.kind is not FrameKind.ENU:
        raise FrameError("enu_to_ecef expects an ENU state")
    x = _ecef_to_enu_transform(s.frame.site).inverse().apply(s.vector)
    return State6.from_vector(x, ECEF, s.epoch)


def transform_state(s: State6, dst: Frame, t: float) -> State6:
    """Re-express ``s`` in ``dst`` at time ``t``."""
    x = state_transform(s.frame, dst, t).apply(s.vector)
    return State6.from_vector(x, dst, s.epoch)
