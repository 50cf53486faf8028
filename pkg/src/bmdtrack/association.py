"""Maximum-likelihood measurement-to-track association and track management.

The value of pairing measurement ``i`` with track ``j`` is the Gaussian
log-likelihood ``ln P_D - d2/2 - ln|2 pi S|/2`` of the innovation; entries
outside the chi-square gate are ``-inf``.  Assignments are solved with the
auction algorithm.  Track scores are log-likelihood ratios: an assignment adds
its value minus the log clutter density, a miss adds ``ln(1 - P_D)``.
"""

from __future__ import annotations

import enum
import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy.stats import chi2

from .auction import UNASSIGNED, auction, solve_partial
from .dynamics import PhysicalConstants, SingularityError, kepler_derivative
from .filters import (
    FilterError,
    Innovation,
    MeasurementModel,
    ProcessNoise,
    StateEstimate,
    UkfParams,
    ir_model,
    make_filter,
    rf_model,
    symmetrize,
)
from .frames import ECI, Frame, state_transform
from .fusion import (
    FusionError,
    NoiseCorrelation,
    RemoteCue,
    associate_remote,
    fuse,
    fused_time_update,
    propagate_cue,
)
from .sensors import (
    GeometryError,
    IrMeasurement,
    IrSensor,
    RfMeasurement,
    RfSensor,
    h_ir,
    h_ir_jacobian,
    h_rf,
    ir_to_body_direction,
    rf_to_enu,
    rf_to_enu_jacobian,
)

log = logging.getLogger(__name__)

NEW_TRACK = "new"
NUMERICAL_ERRORS = (FilterError, SingularityError, GeometryError, FusionError, np.linalg.LinAlgError)


class TrackStatus(str, enum.Enum):
    TENTATIVE = "tentative"
    CONFIRMED = "confirmed"
    DELETED = "deleted"


@dataclass
class Track:
    id: int
    estimate: StateEstimate
    status: TrackStatus = TrackStatus.TENTATIVE
    score_rf: float = 0.0
    score_ir: float = 0.0
    hits: int = 0
    misses: int = 0  # consecutive scans without an update
    last_update: float = 0.0
    rv_flag: bool = False
    sources: list = field(default_factory=list)  # (t, sensor_id, truth_id) per update
    pending_fusion: tuple | None = None  # (z_F, NoiseCorrelation) for the next prediction
    init_measurement: RfMeasurement | None = None  # first return, kept until the second RF hit

    @property
    def score(self) -> float:
        return self.score_rf + self.score_ir

    @property
    def alive(self) -> bool:
        return self.status is not TrackStatus.DELETED


@dataclass
class TrackerConfig:
    filter: str = "ekf"
    integrator: str = "euler"
    dt_max: float = 0.5
    q: float = 1e-4
    ukf_kappa: float = 0.0
    ukf_zeta_mode: str = "standard"
    joseph: bool = False
    mu: float = 3.986004418e14
    gate_probability: float = 0.997
    confirm_threshold: float = 4.6
    delete_threshold: float = -2.3
    max_misses: int = 5
    new_track_value: float = math.log(1e-12)
    rf_clutter_density: float = 1e-6  # false alarms per m rad^2
    ir_clutter_density: float = 1.0  # false alarms per rad^2
    init_velocity_std: float = 3000.0  # m/s
    two_point_init: bool = True  # second RF hit of a new track re-initializes by differencing
    assignment_quantum: float = 1e-6
    fusion_method: str = "linear"
    cue_gate_probability: float = 0.997
    cue_new_track_value: float | None = None  # None: the cue gate decides
    s_rl: float = 0.0  # scalar multiple of R_R used as S_RL after fusion

    def make_filter(self):
        kw = dict(
            constants=PhysicalConstants(self.mu),
            integrator=self.integrator,
            dt_max=self.dt_max,
            process_noise=ProcessNoise(self.q),
        )
        if self.filter == "ukf":
            return make_filter("ukf", params=UkfParams(self.ukf_kappa), zeta_mode=self.ukf_zeta_mode, **kw)
        return make_filter(self.filter, joseph=self.joseph, **kw)


@dataclass(frozen=True, eq=False)
class GateResult:
    passed: bool
    d2: float
    innovation: Innovation | None = None
    diagnostic: str = ""


def chi2_gate(probability: float, dof: int) -> float:
    return float(chi2.ppf(probability, dof))


def gate_innovation(inn: Innovation, threshold: float) -> GateResult:
    """Mahalanobis test ``nu' S^-1 nu <= threshold``."""
    try:
        d2 = float(inn.nu @ np.linalg.solve(inn.S, inn.nu))
    except np.linalg.LinAlgError:
        return GateResult(False, math.inf, inn, "innovation covariance not invertible")
    if not np.isfinite(d2) or d2 < 0:
        return GateResult(False, math.inf, inn, "innovation covariance not positive definite")
    return GateResult(d2 <= threshold, d2, inn)


def gate(track: Track, z: np.ndarray, model: MeasurementModel, filt=None, probability: float = 0.997) -> GateResult:
    filt = filt or make_filter("ekf")
    inn = filt.innovation(track.estimate, z, model)
    return gate_innovation(inn, chi2_gate(probability, model.dim))


def association_value(d2: float, S: np.ndarray, p_d: float) -> float:
    logdet = np.linalg.slogdet(2.0 * math.pi * S)[1]
    return math.log(p_d) - 0.5 * d2 - 0.5 * logdet


@dataclass(frozen=True, eq=False)
class AssociationProblem:
    """``values`` is ``m x (m + n)`` when new-track columns are present, else ``m x n``."""

    values: np.ndarray
    gate_mask: np.ndarray
    new_track_value: float | None
    track_ids: tuple
    innovations: dict = field(default_factory=dict)  # (i, j) -> Innovation

    @property
    def n_tracks(self) -> int:
        return len(self.track_ids)

    @property
    def has_new_track_columns(self) -> bool:
        return self.new_track_value is not None


def build_association_matrix(
    measurements: Sequence,
    tracks: Sequence[Track],
    model_for: Callable[[object], MeasurementModel],
    filt=None,
    p_d: float = 0.95,
    gate_probability: float = 0.997,
    new_track_value: float | None = math.log(1e-12),
) -> AssociationProblem:
    """Gate and score every measurement/track pair.

    ``model_for(measurement)`` supplies the measurement model.  With a
    ``new_track_value`` the matrix gains ``m`` new-track columns whose diagonal
    carries that value (``-inf`` elsewhere).
    """
    filt = filt or make_filter("ekf")
    m, n = len(measurements), len(tracks)
    extra = m if new_track_value is not None else 0
    values = np.full((m, n + extra), -math.inf)
    mask = np.zeros((m, n + extra), dtype=bool)
    innovations = {}
    for i, meas in enumerate(measurements):
        model = model_for(meas)
        threshold = chi2_gate(gate_probability, model.dim)
        for j, trk in enumerate(tracks):
            try:
                inn = filt.innovation(trk.estimate, meas.z, model)
            except NUMERICAL_ERRORS:
                continue
            g = gate_innovation(inn, threshold)
            if g.passed:
                values[i, j] = association_value(g.d2, inn.S, p_d)
                mask[i, j] = True
                innovations[(i, j)] = inn
        if extra:
            values[i, n + i] = new_track_value
            mask[i, n + i] = True
    return AssociationProblem(values, mask, new_track_value, tuple(t.id for t in tracks), innovations)


def solve_assignment(problem: AssociationProblem, quantum: float = 1e-6) -> list:
    """Per-measurement target: a track id, :data:`NEW_TRACK`, or ``None``."""
    m = problem.values.shape[0]
    if m == 0:
        return []
    n = problem.n_tracks
    if problem.has_new_track_columns:
        cols = auction(problem.values, quantum)
    else:
        cols = solve_partial(problem.values, quantum) if n else np.full(m, UNASSIGNED)
    out = []
    for c in cols:
        if c == UNASSIGNED:
            out.append(None)
        elif c < n:
            out.append(problem.track_ids[c])
        else:
            out.append(NEW_TRACK)
    return out


@dataclass(frozen=True, eq=False)
class PointingDirective:
    time: float
    track_id: int
    azimuth: float  # body frame
    elevation: float
    los_eci: np.ndarray  # unit line of sight in ECI
    coasted: bool
    measurement_index: int | None
    sigma: float  # predicted 1-sigma angular uncertainty of the RV direction (rad)


@dataclass
class ScanReport:
    time: float
    assignments: list = field(default_factory=list)  # dicts: sensor, index, track, truth
    new_tracks: list = field(default_factory=list)
    deleted: list = field(default_factory=list)
    errors: list = field(default_factory=list)


@dataclass(frozen=True, eq=False)
class CueReport:
    cue_id: str
    time: float
    track_id: int | None
    new_track: int | None
    trace_before: float | None
    trace_after: float | None
    truth_id: str | None


class Tracker:
    """Owns a track file and applies scans serially."""

    def __init__(
        self,
        config: TrackerConfig | None = None,
        rf_sensors: Sequence[RfSensor] = (),
        ir_sensor: IrSensor | None = None,
    ):
        self.config = config or TrackerConfig()
        self.filter = self.config.make_filter()
        self.rf_sensors = {s.id: s for s in rf_sensors}
        self.ir_sensor = ir_sensor
        self.tracks: list[Track] = []
        self._next_id = 1
        self._transforms: dict = {}

    # -- helpers ---------------------------------------------------------

    @property
    def active_tracks(self) -> list[Track]:
        return [t for t in self.tracks if t.alive]

    def track(self, track_id) -> Track:
        for t in self.tracks:
            if t.id == track_id:
                return t
        raise KeyError(track_id)

    def _enu_transform(self, sensor: RfSensor, t: float):
        key = (sensor.id, t)
        if key not in self._transforms:
            if len(self._transforms) > 64:
                self._transforms.clear()
            self._transforms[key] = state_transform(ECI, sensor.frame, t)
        return self._transforms[key]

    def _rf_model_for(self, meas: RfMeasurement) -> MeasurementModel:
        sensor = self.rf_sensors[meas.sensor_id]
        return rf_model(self._enu_transform(sensor, meas.timestamp), meas.noise_cov)

    def _new_id(self) -> int:
        i = self._next_id
        self._next_id += 1
        return i

    def spawn_track(self, estimate: StateEstimate, source=None) -> Track:
        trk = Track(self._new_id(), estimate, last_update=estimate.epoch)
        if source is not None:
            trk.sources.append(source)
        self.tracks.append(trk)
        return trk

    def _rf_position_eci(self, meas: RfMeasurement) -> tuple[np.ndarray, np.ndarray]:
        """Measured ECI position and its covariance."""
        sensor = self.rf_sensors[meas.sensor_id]
        T = self._enu_transform(sensor, meas.timestamp)
        J = rf_to_enu_jacobian(meas.z)
        x_eci = T.inverse().apply(np.concatenate([rf_to_enu(meas.z), np.zeros(3)]))
        rot = T.matrix[:3, :3]
        return x_eci[:3], symmetrize(rot.T @ J @ meas.noise_cov @ J.T @ rot)

    def initiate_from_rf(self, meas: RfMeasurement) -> Track:
        """Tentative track at the measured position with zero ECI velocity."""
        p, cp = self._rf_position_eci(meas)
        cov = np.zeros((6, 6))
        cov[:3, :3] = cp
        cov[3:, 3:] = np.eye(3) * self.config.init_velocity_std**2
        est = StateEstimate(np.concatenate([p, np.zeros(3)]), cov, meas.timestamp)
        trk = self.spawn_track(est, (meas.timestamp, meas.sensor_id, meas.truth_id))
        trk.hits = 1
        trk.init_measurement = meas
        return trk

    def _two_point(self, first: RfMeasurement, second: RfMeasurement) -> StateEstimate:
        """Position from the latest return, velocity by differencing the two
        returns with a half-step gravity correction."""
        dt = second.timestamp - first.timestamp
        p1, c1 = self._rf_position_eci(first)
        p2, c2 = self._rf_position_eci(second)
        accel = kepler_derivative(np.concatenate([p2, np.zeros(3)]), PhysicalConstants(self.config.mu))[3:]
        v = (p2 - p1) / dt + 0.5 * accel * dt
        cov = np.zeros((6, 6))
        cov[:3, :3] = c2
        cov[:3, 3:] = c2 / dt
        cov[3:, :3] = c2 / dt
        cov[3:, 3:] = (c1 + c2) / dt**2 + np.eye(3) * self.config.q * dt
        return StateEstimate(np.concatenate([p2, v]), symmetrize(cov), second.timestamp)

    def _delete(self, trk: Track, report: ScanReport | None, reason: str) -> None:
        trk.status = TrackStatus.DELETED
        if report is not None:
            report.deleted.append(trk.id)
        log.debug("track %s deleted: %s", trk.id, reason)

    def _lifecycle(self, report: ScanReport) -> None:
        cfg = self.config
        for trk in self.active_tracks:
            if trk.score <= cfg.delete_threshold or trk.misses >= cfg.max_misses:
                self._delete(trk, report, "score" if trk.score <= cfg.delete_threshold else "misses")
            elif trk.status is TrackStatus.TENTATIVE and trk.score >= cfg.confirm_threshold:
                trk.status = TrackStatus.CONFIRMED

    # -- time update -----------------------------------------------------

    def predict(self, t: float) -> list:
        """Time-update every live track to ``t``; returns ids that failed numerically."""
        failed = []
        cfg = self.config
        for trk in self.active_tracks:
            if trk.estimate.epoch == t:
                continue
            try:
                if trk.pending_fusion is not None:
                    z_f, corr = trk.pending_fusion
                    trk.estimate = fused_time_update(
                        trk.estimate,
                        corr,
                        z_f,
                        t - trk.estimate.epoch,
                        ProcessNoise(cfg.q),
                        cfg.integrator,
                        PhysicalConstants(cfg.mu),
                        cfg.dt_max,
                    )
                else:
                    trk.estimate = self.filter.predict(trk.estimate, t)
            except NUMERICAL_ERRORS as exc:
                log.warning("track %s prediction failed: %s", trk.id, exc)
                self._delete(trk, None, "numerical")
                failed.append(trk.id)
            trk.pending_fusion = None
        return failed

    # -- measurement processing -------------------------------------------

    def _apply(self, trk: Track, meas, model: MeasurementModel, report: ScanReport) -> bool:
        first = trk.init_measurement
        try:
            if (
                self.config.two_point_init
                and first is not None
                and isinstance(meas, RfMeasurement)
                and meas.timestamp > first.timestamp
            ):
                trk.estimate = self._two_point(first, meas)
                trk.init_measurement = None
            else:
                trk.estimate = self.filter.update(trk.estimate, meas.z, model)
        except NUMERICAL_ERRORS as exc:
            report.errors.append(f"track {trk.id} update failed: {exc}")
            return False
        trk.hits += 1
        trk.last_update = meas.timestamp
        trk.sources.append((meas.timestamp, meas.sensor_id, meas.truth_id))
        return True

    def _assign_batch(self, kind, sensor_id, measurements, tracks, model_for, p_d, clutter, report):
        """Solve one per-sensor m x n problem and apply its updates.  Returns
        (updated track ids, unassigned measurement indices)."""
        cfg = self.config
        problem = build_association_matrix(
            measurements, tracks, model_for, self.filter, p_d, cfg.gate_probability, None
        )
        targets = solve_assignment(problem, cfg.assignment_quantum)
        updated, leftover = set(), []  # leftover: (report entry, measurement)
        by_id = {t.id: (j, t) for j, t in enumerate(tracks)}
        for i, target in enumerate(targets):
            meas = measurements[i]
            if target is None:
                entry = {"sensor": sensor_id, "kind": kind, "index": i, "track": None, "truth": meas.truth_id}
                report.assignments.append(entry)
                leftover.append((entry, meas))
                continue
            j, trk = by_id[target]
            gain = problem.values[i, j] - math.log(clutter)
            if self._apply(trk, meas, model_for(meas), report):
                if kind == "rf":
                    trk.score_rf += gain
                else:
                    trk.score_ir += gain
                updated.add(trk.id)
            report.assignments.append(
                {"sensor": sensor_id, "kind": kind, "index": i, "track": trk.id, "truth": meas.truth_id}
            )
        return updated, leftover

    def _rf_visible(self, trk: Track, sensor: RfSensor, t: float) -> bool:
        p = self._enu_transform(sensor, t).apply(trk.estimate.mean)
        return bool(p[2] > 0.0)

    def scan_single_sensor(self, measurements: Sequence[RfMeasurement], t: float | None = None) -> ScanReport:
        """Full ``m x (m + n)`` association for one RF batch with new-track columns."""
        cfg = self.config
        t = measurements[0].timestamp if t is None and measurements else t
        report = ScanReport(t)
        if t is not None:
            self.predict(t)
        tracks = self.active_tracks
        sensor_ids = sorted({m.sensor_id for m in measurements}) or sorted(self.rf_sensors)
        if len(sensor_ids) > 1:
            raise ValueError("scan_single_sensor takes one sensor's batch")
        sensor = self.rf_sensors[sensor_ids[0]] if sensor_ids else None
        p_d = sensor.p_d if sensor else 0.95
        problem = build_association_matrix(
            measurements, tracks, self._rf_model_for, self.filter, p_d, cfg.gate_probability, cfg.new_track_value
        )
        targets = solve_assignment(problem, cfg.assignment_quantum)
        updated = set()
        spawn = []
        for i, target in enumerate(targets):
            meas = measurements[i]
            if target == NEW_TRACK:
                spawn.append(meas)
                continue
            j = problem.track_ids.index(target)
            trk = tracks[j]
            if self._apply(trk, meas, self._rf_model_for(meas), report):
                trk.score_rf += problem.values[i, j] - math.log(cfg.rf_clutter_density)
                updated.add(trk.id)
            report.assignments.append(
                {"sensor": meas.sensor_id, "kind": "rf", "index": i, "track": trk.id, "truth": meas.truth_id}
            )
        self._settle_misses(tracks, updated, {"rf": p_d} if sensor else {})
        for meas in spawn:
            trk = self.initiate_from_rf(meas)
            report.new_tracks.append(trk.id)
            report.assignments.append(
                {"sensor": meas.sensor_id, "kind": "rf", "index": measurements.index(meas), "track": trk.id,
                 "truth": meas.truth_id, "new": True}
            )
        self._lifecycle(report)
        return report

    def _settle_misses(self, tracks, updated, penalties: dict, per_track: dict | None = None) -> None:
        for trk in tracks:
            if trk.id in updated:
                trk.misses = 0
                continue
            trk.misses += 1
            for kind, p_d in penalties.items():
                if per_track is not None and kind not in per_track.get(trk.id, ()):
                    continue
                miss = math.log(max(1.0 - p_d, 1e-9))
                if kind == "rf":
                    trk.score_rf += miss
                else:
                    trk.score_ir += miss

    def scan_multi_sensor(
        self,
        rf_measurements: Sequence[RfMeasurement],
        ir_measurements: Sequence[IrMeasurement] | None = None,
        seeker: Frame | None = None,
        t: float | None = None,
    ) -> ScanReport:
        """Per-sensor ``m x n`` association: RF batches first, then IR against the
        RF-updated tracks.  Leftover RF measurements start tentative tracks."""
        cfg = self.config
        if t is None:
            stamps = [m.timestamp for m in rf_measurements] + [m.timestamp for m in (ir_measurements or ())]
            t = stamps[0] if stamps else None
        if t is not None:
            self.predict(t)
        report = ScanReport(t)
        tracks = self.active_tracks
        updated: set = set()
        done_by: dict = {"rf": set(), "ir": set()}
        owed: dict = {}  # track id -> sensor kinds whose miss penalty applies
        spawn = []
        for sid in sorted(self.rf_sensors):
            sensor = self.rf_sensors[sid]
            batch = [m for m in rf_measurements if m.sensor_id == sid]
            done, leftover = self._assign_batch(
                "rf", sid, batch, tracks, self._rf_model_for, sensor.p_d, cfg.rf_clutter_density, report
            )
            updated |= done
            done_by["rf"] |= done
            spawn.extend(leftover)
            if t is not None:
                for trk in tracks:
                    if trk.id not in done and self._rf_visible(trk, sensor, t):
                        owed.setdefault(trk.id, set()).add("rf")
        if ir_measurements is not None and seeker is not None and self.ir_sensor is not None:
            T = state_transform(ECI, seeker, t)
            ir_done, _ = self._assign_batch(
                "ir",
                self.ir_sensor.id,
                list(ir_measurements),
                tracks,
                lambda m: ir_model(T, m.noise_cov),
                self.ir_sensor.p_d,
                cfg.ir_clutter_density,
                report,
            )
            updated |= ir_done
            done_by["ir"] = ir_done
            for trk in tracks:
                if trk.id not in ir_done and self.ir_sensor.in_fov(T.apply(trk.estimate.mean)[:3]):
                    owed.setdefault(trk.id, set()).add("ir")
        penalties = {}
        if self.rf_sensors:
            penalties["rf"] = min(s.p_d for s in self.rf_sensors.values())
        if self.ir_sensor is not None:
            penalties["ir"] = self.ir_sensor.p_d
        for trk in tracks:
            if trk.id in updated:
                trk.misses = 0
            else:
                trk.misses += 1
            # a sensor that could see the track but did not update it costs ln(1 - P_D)
            for kind in owed.get(trk.id, ()):
                if trk.id in done_by[kind]:
                    continue
                miss = math.log(max(1.0 - penalties[kind], 1e-9))
                if kind == "rf":
                    trk.score_rf += miss
                else:
                    trk.score_ir += miss
        for entry, meas in spawn:
            trk = self.initiate_from_rf(meas)
            report.new_tracks.append(trk.id)
            entry["track"] = trk.id
            entry["new"] = True
        self._lifecycle(report)
        return report

    # -- seeker pointing --------------------------------------------------

    def seeker_point(self, ir_measurements: Sequence[IrMeasurement], seeker: Frame, t: float) -> PointingDirective:
        """Pointing target for the seeker: the IR return associated with the RV
        track, or the RV track's own prediction when no return associates."""
        rv = [trk for trk in self.active_tracks if trk.rv_flag]
        if len(rv) != 1:
            raise ValueError(f"seeker pointing needs exactly one RV track, found {len(rv)}")
        rv_trk = rv[0]
        if self.ir_sensor is None:
            raise ValueError("no IR sensor configured")
        T = state_transform(ECI, seeker, t)
        tracks = self.active_tracks
        problem = build_association_matrix(
            list(ir_measurements),
            tracks,
            lambda m: ir_model(T, m.noise_cov),
            self.filter,
            self.ir_sensor.p_d,
            self.config.gate_probability,
            None,
        )
        targets = solve_assignment(problem, self.config.assignment_quantum)
        dcm_t = seeker.attitude.dcm.T
        H = h_ir_jacobian(T.apply(rv_trk.estimate.mean)[:3]) @ T.matrix
        ang_cov = H @ rv_trk.estimate.cov @ H.T
        sigma = float(math.sqrt(max(np.linalg.eigvalsh(ang_cov).max(), 0.0)))
        for i, target in enumerate(targets):
            if target == rv_trk.id:
                meas = ir_measurements[i]
                los = dcm_t @ ir_to_body_direction(meas.azimuth, meas.elevation)
                return PointingDirective(t, rv_trk.id, meas.azimuth, meas.elevation, los, False, i, sigma)
        p_body = T.apply(rv_trk.estimate.mean)[:3]
        az, el = (float(a) for a in h_ir(p_body))
        los = dcm_t @ (p_body / np.linalg.norm(p_body))
        return PointingDirective(t, rv_trk.id, az, el, los, True, None, sigma)

    # -- remote cues ------------------------------------------------------

    def ingest_cue(self, cue: RemoteCue, t: float) -> CueReport:
        """Propagate a cue to ``t``, associate it with a local track and fuse,
        or start a new local track from it."""
        cfg = self.config
        remote = propagate_cue(cue, t, ProcessNoise(cfg.q), PhysicalConstants(cfg.mu), cfg.dt_max)
        candidates = [(trk.id, trk.estimate) for trk in self.active_tracks if trk.estimate.epoch == t]
        result = associate_remote(remote, candidates, cfg.cue_gate_probability, cfg.cue_new_track_value)
        if result.track_id is None:
            trk = self.spawn_track(remote, (t, cue.source, cue.truth_id))
            return CueReport(cue.id, t, None, trk.id, None, None, cue.truth_id)
        trk = self.track(result.track_id)
        before = float(np.trace(trk.estimate.cov))
        fused = fuse(cfg.fusion_method, trk.estimate, remote, parents=(trk.id, cue.id))
        trk.estimate = fused.estimate
        if cfg.fusion_method == "measurement":
            trk.pending_fusion = (remote.mean, NoiseCorrelation(remote.cov, cfg.s_rl * remote.cov))
        return CueReport(cue.id, t, trk.id, None, before, float(np.trace(trk.estimate.cov)), cue.truth_id)
