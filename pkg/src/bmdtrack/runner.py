"""End-to-end replication loop and its JSON-lines logs."""

from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .association import NUMERICAL_ERRORS, Tracker, TrackerConfig, TrackStatus
from .filters import StateEstimate
from .fusion import RemoteCue
from .scenario import (
    ScenarioConfig,
    generate_remote_cues,
    generate_scan,
    generate_truth,
    interceptor_states,
    rng_streams,
    seeker_frame,
)

log = logging.getLogger(__name__)

LOG_STREAMS = ("truth", "tracks", "assignments", "cues", "directives", "events")
_UPPER = np.triu_indices(6)


@dataclass
class RunLog:
    truth: list = field(default_factory=list)
    tracks: list = field(default_factory=list)
    assignments: list = field(default_factory=list)
    cues: list = field(default_factory=list)
    directives: list = field(default_factory=list)
    events: list = field(default_factory=list)

    def write(self, directory: Path) -> None:
        directory.mkdir(parents=True, exist_ok=True)
        for name in LOG_STREAMS:
            with open(directory / f"{name}.jsonl", "w") as fh:
                for rec in getattr(self, name):
                    fh.write(json.dumps(rec, sort_keys=True) + "\n")

    @classmethod
    def read(cls, directory: Path) -> "RunLog":
        out = cls()
        for name in LOG_STREAMS:
            path = directory / f"{name}.jsonl"
            if path.exists():
                with open(path) as fh:
                    getattr(out, name).extend(json.loads(line) for line in fh if line.strip())
        return out


def _floats(a) -> list:
    return [float(v) for v in np.asarray(a).ravel()]


def _majority_truth(track) -> tuple:
    counts: dict = {}
    for _, _, tid in track.sources:
        counts[tid] = counts.get(tid, 0) + 1
    if not counts:
        return None, 0, 0
    best = max(counts.items(), key=lambda kv: (kv[1], str(kv[0])))
    return best[0], best[1], sum(counts.values())


def flag_rv(tracker: Tracker, rv_ids) -> None:
    """Simulated discrimination: the confirmed track built mostly from RV returns
    carries the RV flag (at most one track)."""
    rv_ids = set(rv_ids)
    best, best_n = None, 0
    for trk in tracker.active_tracks:
        if trk.status is not TrackStatus.CONFIRMED:
            continue
        tid, n, total = _majority_truth(trk)
        if tid in rv_ids and 2 * n > total and (n > best_n or (trk.rv_flag and n == best_n)):
            best, best_n = trk, n
    for trk in tracker.tracks:
        trk.rv_flag = trk is best


def cue_to_record(cue: RemoteCue) -> dict:
    """Cue-stream line: ``id, t, mean[6], cov_upper[21]`` (row-major upper triangle)."""
    est = cue.estimate
    return {
        "id": cue.id,
        "t": float(est.epoch),
        "mean": _floats(est.mean),
        "cov_upper": _floats(est.cov[_UPPER]),
        "delivered": float(cue.delivery_time),
        "source": cue.source,
        "truth": cue.truth_id,
    }


def cue_from_record(rec: dict) -> RemoteCue:
    if len(rec["mean"]) != 6 or len(rec["cov_upper"]) != 21:
        raise ValueError(f"cue {rec.get('id')}: need 6 mean and 21 covariance entries")
    cov = np.zeros((6, 6))
    cov[_UPPER] = rec["cov_upper"]
    cov = cov + np.triu(cov, 1).T
    est = StateEstimate(np.asarray(rec["mean"], dtype=float), cov, float(rec["t"]))
    return RemoteCue(
        str(rec["id"]), est, rec.get("source", "remote"), float(rec["t"]), rec.get("delivered"), rec.get("truth")
    )


def write_cue_stream(cues, path: Path) -> None:
    with open(path, "w") as fh:
        for cue in cues:
            fh.write(json.dumps(cue_to_record(cue), sort_keys=True) + "\n")


def read_cue_stream(path: Path) -> list:
    with open(path) as fh:
        cues = [cue_from_record(json.loads(line)) for line in fh if line.strip()]
    return sorted(cues, key=lambda c: (c.delivery_time, c.id))


def run_replication(
    cfg: ScenarioConfig, tcfg: TrackerConfig, seed: int, cues: list | None = None
) -> tuple[RunLog, list]:
    """Simulate one replication.  Returns its logs and the cue stream it consumed.

    ``cues`` replaces the generated remote cues when given.
    """
    streams = rng_streams(seed)
    truth = generate_truth(cfg)
    inter = interceptor_states(cfg)
    if cues is None:
        cues = generate_remote_cues(truth, cfg.remote, streams["cues"]) if cfg.remote else []
    rv_ids = truth.rv_ids
    ir_sensor = cfg.seeker.sensor if cfg.seeker else None
    tracker = Tracker(tcfg, cfg.rf_sensors, ir_sensor)
    out = RunLog(events=[dict(e) for e in truth.events])
    rng = streams["measurements"]
    los = None
    next_cue = 0
    for k, t in enumerate(truth.times):
        t = float(t)
        active = truth.active(k)
        for oid in sorted(active):
            out.truth.append({"t": t, "id": oid, "rv": truth.rv[oid], "state": _floats(active[oid])})
        for tid in tracker.predict(t):
            out.events.append({"t": t, "event": "numerical", "track": tid, "stage": "predict"})

        frame = None
        if cfg.seeker is not None and t >= cfg.seeker.start_time and not np.isnan(inter[k, 0]):
            if los is None:
                los = _acquisition_los(tracker, active, rv_ids, inter[k])
            if los is not None:
                frame = seeker_frame(inter[k], los)
        rf, ir = generate_scan(active, t, cfg.rf_sensors, rng, ir_sensor, frame)

        if frame is not None and sum(trk.rv_flag for trk in tracker.active_tracks) == 1:
            try:
                d = tracker.seeker_point(ir, frame, t)
            except NUMERICAL_ERRORS as exc:
                out.events.append({"t": t, "event": "numerical", "stage": "pointing", "detail": str(exc)})
            else:
                out.directives.append(_directive_record(d, inter[k], active, rv_ids))
                los = d.los_eci

        try:
            report = tracker.scan_multi_sensor(rf, ir if frame is not None else None, frame, t)
        except NUMERICAL_ERRORS as exc:
            out.events.append({"t": t, "event": "numerical", "stage": "scan", "detail": str(exc)})
        else:
            for a in report.assignments:
                out.assignments.append({"t": t, **a})
            for msg in report.errors:
                out.events.append({"t": t, "event": "numerical", "stage": "update", "detail": msg})
            for tid in report.deleted:
                out.events.append({"t": t, "event": "deleted", "track": tid})

        while next_cue < len(cues) and cues[next_cue].delivery_time <= t + 1e-9:
            cue = cues[next_cue]
            next_cue += 1
            try:
                rep = tracker.ingest_cue(cue, t)
            except NUMERICAL_ERRORS as exc:
                out.events.append({"t": t, "event": "numerical", "stage": "cue", "detail": str(exc)})
                continue
            out.cues.append(
                {
                    "id": cue.id,
                    "t": t,
                    "timestamp": cue.timestamp,
                    "truth": cue.truth_id,
                    "track": rep.track_id,
                    "new_track": rep.new_track,
                    "trace_before": rep.trace_before,
                    "trace_after": rep.trace_after,
                }
            )

        flag_rv(tracker, rv_ids)
        for trk in tracker.active_tracks:
            out.tracks.append(
                {
                    "t": t,
                    "id": trk.id,
                    "status": trk.status.value,
                    "score_rf": trk.score_rf,
                    "score_ir": trk.score_ir,
                    "rv": trk.rv_flag,
                    "mean": _floats(trk.estimate.mean),
                    "cov": _floats(trk.estimate.cov),
                }
            )
    return out, cues


def _acquisition_los(tracker: Tracker, active: dict, rv_ids, interceptor: np.ndarray):
    """Initial seeker boresight: the RV track if one exists, else a handover on the true RV."""
    for trk in tracker.active_tracks:
        if trk.rv_flag:
            d = trk.estimate.mean[:3] - interceptor[:3]
            return d / np.linalg.norm(d)
    for oid in rv_ids:
        if oid in active:
            d = active[oid][:3] - interceptor[:3]
            return d / np.linalg.norm(d)
    return None


def _directive_record(d, interceptor: np.ndarray, active: dict, rv_ids) -> dict:
    rec = {
        "t": d.time,
        "track": d.track_id,
        "azimuth": d.azimuth,
        "elevation": d.elevation,
        "los": _floats(d.los_eci),
        "coasted": d.coasted,
        "measurement": d.measurement_index,
        "sigma": d.sigma,
        "error": None,
    }
    for oid in rv_ids:
        if oid in active:
            true_los = active[oid][:3] - interceptor[:3]
            true_los = true_los / np.linalg.norm(true_los)
            rec["error"] = float(math.atan2(np.linalg.norm(np.cross(true_los, d.los_eci)), true_los @ d.los_eci))
            break
    return rec
