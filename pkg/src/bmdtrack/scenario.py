"""Synthetic truth, sensor batches and remote-cue streams.

Objects fly pure Kepler arcs (RK4) sampled on the scan grid.  Sensor batches
are drawn per scan from :mod:`bmdtrack.sensors` with Poisson false alarms, and
remote cues are truth plus Gaussian noise, delivered after a fixed latency.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .dynamics import EARTH, PhysicalConstants, propagate
from .filters import StateEstimate
from .frames import ECI, EARTH_RADIUS, Attitude, Frame, GeodeticSite, state_transform
from .fusion import RemoteCue
from .sensors import (
    IrMeasurement,
    IrSensor,
    RfMeasurement,
    RfSensor,
    simulate_ir,
    simulate_rf,
)

log = logging.getLogger(__name__)

TRUTH_DT_MAX = 0.1  # s, RK4 step for truth propagation


@dataclass(frozen=True, eq=False)
class TruthObject:
    id: str
    state: np.ndarray  # ECI at t = 0, or at spawn_time when spawn_time > 0
    rv: bool = False
    spawn_time: float = 0.0

    def __post_init__(self):
        s = np.asarray(self.state, dtype=float)
        if s.shape != (6,):
            raise ValueError(f"object {self.id}: state must have 6 components")
        object.__setattr__(self, "state", s)


@dataclass(frozen=True, eq=False)
class SeekerSpec:
    sensor: IrSensor
    interceptor: np.ndarray  # interceptor ECI state at t = 0
    start_time: float = 0.0  # IR scans begin here (terminal phase)


@dataclass(frozen=True, eq=False)
class RemoteSpec:
    interval: float = 10.0  # s between cue timestamps per object
    latency: float = 10.0  # s from cue timestamp to delivery
    start: float = 0.0
    cov: np.ndarray = field(default_factory=lambda: np.diag([200.0**2] * 3 + [5.0**2] * 3))
    s_rl: float = 0.0  # S_RL as a multiple of the cue covariance
    objects: tuple | None = None  # ids to cue; None means all
    source: str = "remote"


@dataclass(frozen=True, eq=False)
class ScenarioConfig:
    duration: float
    scan_interval: float
    objects: tuple
    rf_sensors: tuple = ()
    seeker: SeekerSpec | None = None
    remote: RemoteSpec | None = None
    constants: PhysicalConstants = EARTH
    seed: int = 0

    def __post_init__(self):
        if not self.duration > 0:
            raise ValueError("duration must be positive")
        if not self.scan_interval > 0:
            raise ValueError("scan_interval must be positive")
        if not self.objects:
            raise ValueError("at least one object is required")
        if not self.rf_sensors and self.seeker is None:
            raise ValueError("at least one sensor is required")
        ids = [o.id for o in self.objects]
        if len(set(ids)) != len(ids):
            raise ValueError("object ids must be unique")

    @property
    def times(self) -> np.ndarray:
        n = int(math.floor(self.duration / self.scan_interval + 1e-9))
        return self.scan_interval * np.arange(n + 1)


@dataclass(frozen=True, eq=False)
class Truth:
    """Object states on the scan grid; rows are NaN where an object does not exist."""

    times: np.ndarray
    states: dict  # id -> (N, 6)
    rv: dict  # id -> bool
    constants: PhysicalConstants = EARTH
    events: tuple = ()

    def active(self, k: int) -> dict:
        out = {}
        for oid, xs in self.states.items():
            if not np.isnan(xs[k, 0]):
                out[oid] = xs[k]
        return out

    def index(self, t: float) -> int:
        k = int(np.searchsorted(self.times, t - 1e-9))
        if k >= len(self.times) or abs(self.times[k] - t) > 1e-9:
            raise KeyError(f"time {t} is not on the truth grid")
        return k

    def state_at(self, oid: str, t: float) -> np.ndarray | None:
        x = self.states[oid][self.index(t)]
        return None if np.isnan(x[0]) else x

    @property
    def rv_ids(self) -> list:
        return [oid for oid, flag in self.rv.items() if flag]


def enu_state_to_eci(site: GeodeticSite, p_enu, v_enu, t: float = 0.0) -> np.ndarray:
    """ECI state of a point given in a site's ENU frame (velocity relative to the rotating Earth)."""
    x = np.concatenate([np.asarray(p_enu, dtype=float), np.asarray(v_enu, dtype=float)])
    return state_transform(Frame.enu(site), ECI, t).apply(x)


def _propagate_track(x0: np.ndarray, k0: int, times: np.ndarray, c: PhysicalConstants, oid: str, events: list):
    out = np.full((len(times), 6), np.nan)
    x = np.array(x0, dtype=float)
    out[k0] = x
    for k in range(k0 + 1, len(times)):
        x = propagate(x, float(times[k] - times[k - 1]), c, "rk4", TRUTH_DT_MAX)
        if np.linalg.norm(x[:3]) < EARTH_RADIUS:
            events.append({"t": float(times[k]), "id": oid, "event": "impact"})
            log.info("object %s impacted before t=%.1f", oid, times[k])
            break
        out[k] = x
    return out


def generate_truth(cfg: ScenarioConfig) -> Truth:
    """Deterministic Kepler trajectories for every object on the scan grid."""
    times = cfg.times
    states, rv, events = {}, {}, []
    for obj in cfg.objects:
        k0 = int(math.ceil(obj.spawn_time / cfg.scan_interval - 1e-9))
        if k0 >= len(times):
            states[obj.id] = np.full((len(times), 6), np.nan)
        else:
            x0 = obj.state
            lag = times[k0] - obj.spawn_time
            if lag > 1e-12:
                x0 = propagate(x0, lag, cfg.constants, "rk4", TRUTH_DT_MAX)
            states[obj.id] = _propagate_track(x0, k0, times, cfg.constants, obj.id, events)
        rv[obj.id] = obj.rv
    return Truth(times, states, rv, cfg.constants, tuple(events))


def interceptor_states(cfg: ScenarioConfig) -> np.ndarray | None:
    if cfg.seeker is None:
        return None
    events: list = []
    return _propagate_track(cfg.seeker.interceptor, 0, cfg.times, cfg.constants, "interceptor", events)


def seeker_frame(interceptor: np.ndarray, los_eci: np.ndarray) -> Frame:
    """Seeker body frame at the interceptor with its boresight along ``los_eci``."""
    down = -interceptor[:3] / np.linalg.norm(interceptor[:3])
    return Frame.body(Attitude.from_boresight(los_eci, down), interceptor)


def _rf_false_alarm(sensor: RfSensor, t: float, rng: np.random.Generator) -> RfMeasurement:
    r = rng.uniform(0.0, sensor.max_range)
    az = rng.uniform(-math.pi, math.pi)
    el = rng.uniform(0.0, math.pi / 2.0)
    return RfMeasurement(r, az, el, np.array(sensor.noise_cov), sensor.id, t, None)


def _ir_false_alarm(sensor: IrSensor, t: float, rng: np.random.Generator) -> IrMeasurement:
    a = sensor.fov_half_angle
    az, el = rng.uniform(-a, a, size=2)
    return IrMeasurement(float(az), float(el), np.array(sensor.noise_cov), sensor.id, t, None)


def generate_scan(
    truth_at_t: dict,
    t: float,
    rf_sensors: Sequence[RfSensor],
    rng: np.random.Generator,
    ir_sensor: IrSensor | None = None,
    seeker: Frame | None = None,
) -> tuple[list, list]:
    """One synchronized scan: (RF batch, IR batch), each shuffled.

    ``truth_at_t`` maps object id to ECI state.  RF needs positive elevation;
    IR needs the object inside the seeker field of view.
    """
    rf: list = []
    for sensor in rf_sensors:
        T = state_transform(ECI, sensor.frame, t)
        batch = []
        for oid in sorted(truth_at_t):
            x = truth_at_t[oid]
            if T.apply(x)[2] <= 0.0:
                continue
            m = simulate_rf(x, t, sensor, rng, oid)
            if m is not None:
                batch.append(m)
        for _ in range(rng.poisson(sensor.false_alarm_rate)):
            batch.append(_rf_false_alarm(sensor, t, rng))
        rf.extend(batch[i] for i in rng.permutation(len(batch)))
    ir: list = []
    if ir_sensor is not None and seeker is not None:
        T = state_transform(ECI, seeker, t)
        for oid in sorted(truth_at_t):
            x = truth_at_t[oid]
            if not ir_sensor.in_fov(T.apply(x)[:3]):
                continue
            m = simulate_ir(x, t, ir_sensor, seeker, rng, oid)
            if m is not None:
                ir.append(m)
        for _ in range(rng.poisson(ir_sensor.false_alarm_rate)):
            ir.append(_ir_false_alarm(ir_sensor, t, rng))
        ir = [ir[i] for i in rng.permutation(len(ir))]
    return rf, ir


def generate_remote_cues(truth: Truth, spec: RemoteSpec, rng: np.random.Generator) -> list:
    """Cues at ``spec.interval`` per object, ordered by delivery time."""
    cov = np.asarray(spec.cov, dtype=float)
    w, v = np.linalg.eigh(cov)
    factor = v * np.sqrt(np.clip(w, 0.0, None))
    ids = sorted(truth.states) if spec.objects is None else list(spec.objects)
    cues = []
    t = spec.start
    end = truth.times[-1]
    n = 0
    while t <= end + 1e-9:
        k = int(np.argmin(np.abs(truth.times - t)))
        for oid in ids:
            x = truth.states[oid][k]
            noise = factor @ rng.standard_normal(6)
            if np.isnan(x[0]):
                continue
            tk = float(truth.times[k])
            est = StateEstimate(x + noise, cov, tk)
            cues.append(RemoteCue(f"cue{n}", est, spec.source, tk, tk + spec.latency, oid))
            n += 1
        t += spec.interval
    cues.sort(key=lambda c: (c.delivery_time, c.id))
    return cues


def rng_streams(seed: int) -> dict:
    """Independent generators for measurements, cues and initial conditions."""
    ss = np.random.SeedSequence(seed)
    meas, cues, init = ss.spawn(3)
    return {
        "measurements": np.random.default_rng(meas),
        "cues": np.random.default_rng(cues),
        "init": np.random.default_rng(init),
    }
