"""JSON experiment configuration: schema, validation and construction."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, fields
from pathlib import Path

import jsonschema
import numpy as np

from .association import TrackerConfig
from .dynamics import MU_EARTH, PhysicalConstants
from .frames import GeodeticSite
from .scenario import RemoteSpec, ScenarioConfig, SeekerSpec, TruthObject, enu_state_to_eci
from .sensors import IrSensor, RfSensor


class ConfigError(ValueError):
    def __init__(self, errors: list[str]):
        self.errors = list(errors)
        super().__init__("; ".join(self.errors))


_NUM = {"type": "number"}
_POS = {"type": "number", "exclusiveMinimum": 0}
_NONNEG = {"type": "number", "minimum": 0}
_PROB = {"type": "number", "minimum": 0, "maximum": 1}


def _vec(n):
    return {"type": "array", "items": _NUM, "minItems": n, "maxItems": n}


_SITE = {
    "type": "object",
    "required": ["lat_deg", "lon_deg"],
    "properties": {"lat_deg": {"type": "number", "minimum": -90, "maximum": 90}, "lon_deg": _NUM, "alt": _NUM},
    "additionalProperties": False,
}

_STATE = {
    "oneOf": [
        _vec(6),
        {
            "type": "object",
            "required": ["site", "position", "velocity"],
            "properties": {"site": _SITE, "position": _vec(3), "velocity": _vec(3)},
            "additionalProperties": False,
        },
    ]
}

SCHEMA = {
    "type": "object",
    "required": ["duration", "scan_interval", "objects"],
    "properties": {
        "duration": _POS,
        "scan_interval": _POS,
        "mu": _POS,
        "seed": {"type": "integer", "minimum": 0},
        "objects": {
            "type": "array",
            "minItems": 1,
            "items": {
                "type": "object",
                "required": ["id", "state"],
                "properties": {
                    "id": {"type": "string"},
                    "state": _STATE,
                    "rv": {"type": "boolean"},
                    "spawn_time": _NONNEG,
                },
                "additionalProperties": False,
            },
        },
        "rf_sensors": {
            "type": "array",
            "items": {
                "type": "object",
                "required": ["id", "site"],
                "properties": {
                    "id": {"type": "string"},
                    "site": _SITE,
                    "noise_std": {"type": "array", "items": _NONNEG, "minItems": 3, "maxItems": 3},
                    "p_d": _PROB,
                    "false_alarm_rate": _NONNEG,
                    "max_range": _POS,
                    "noise_scale": _NONNEG,
                },
                "additionalProperties": False,
            },
        },
        "seeker": {
            "type": "object",
            "required": ["interceptor"],
            "properties": {
                "id": {"type": "string"},
                "interceptor": _STATE,
                "noise_std": {"type": "array", "items": _NONNEG, "minItems": 2, "maxItems": 2},
                "p_d": _PROB,
                "false_alarm_rate": _NONNEG,
                "fov_half_angle_deg": {"type": "number", "exclusiveMinimum": 0, "maximum": 90},
                "start_time": _NONNEG,
                "noise_scale": _NONNEG,
            },
            "additionalProperties": False,
        },
        "remote": {
            "type": "object",
            "properties": {
                "interval": _POS,
                "latency": _NONNEG,
                "start": _NONNEG,
                "pos_std": _NONNEG,
                "vel_std": _NONNEG,
                "s_rl": _NUM,
                "objects": {"type": "array", "items": {"type": "string"}},
                "source": {"type": "string"},
            },
            "additionalProperties": False,
        },
        "tracker": {
            "type": "object",
            "properties": {
                "filter": {"enum": ["ekf", "ukf"]},
                "integrator": {"enum": ["euler", "rk4"]},
                "dt_max": _POS,
                "q": _NONNEG,
                "ukf_kappa": _NUM,
                "ukf_zeta_mode": {"enum": ["standard", "paper_exact"]},
                "joseph": {"type": "boolean"},
                "gate_probability": {"type": "number", "exclusiveMinimum": 0, "exclusiveMaximum": 1},
                "confirm_threshold": _NUM,
                "delete_threshold": _NUM,
                "max_misses": {"type": "integer", "minimum": 1},
                "new_track_value": _NUM,
                "rf_clutter_density": _POS,
                "ir_clutter_density": _POS,
                "init_velocity_std": _POS,
                "two_point_init": {"type": "boolean"},
                "assignment_quantum": _POS,
                "fusion_method": {"enum": ["linear", "measurement", "ci", "independent"]},
                "cue_gate_probability": {"type": "number", "exclusiveMinimum": 0, "exclusiveMaximum": 1},
                "cue_new_track_value": {"type": ["number", "null"]},
            },
            "additionalProperties": False,
        },
        "metrics": {
            "type": "object",
            "properties": {"settle_time": _NONNEG},
            "additionalProperties": False,
        },
    },
    "anyOf": [
        {"required": ["rf_sensors"], "properties": {"rf_sensors": {"minItems": 1}}},
        {"required": ["seeker"]},
    ],
    "additionalProperties": False,
}


@dataclass(frozen=True, eq=False)
class Experiment:
    scenario: ScenarioConfig
    tracker: TrackerConfig
    settle_time: float = 0.0


def _path(err: jsonschema.ValidationError) -> str:
    parts = [str(p) for p in err.absolute_path]
    return "/".join(parts) if parts else "<root>"


def validate(doc: dict) -> None:
    """Raise :class:`ConfigError` listing every violation with its field path."""
    validator = jsonschema.Draft7Validator(SCHEMA)
    errors = sorted(validator.iter_errors(doc), key=lambda e: [str(p) for p in e.absolute_path])
    msgs = []
    for err in errors:
        if err.validator == "anyOf" and not err.absolute_path:
            msgs.append("<root>: at least one sensor (rf_sensors or seeker) is required")
        else:
            msgs.append(f"{_path(err)}: {err.message}")
    if msgs:
        raise ConfigError(msgs)


def _site(d: dict) -> GeodeticSite:
    return GeodeticSite.from_degrees(d["lat_deg"], d["lon_deg"], d.get("alt", 0.0))


def _state(spec) -> np.ndarray:
    if isinstance(spec, dict):
        return enu_state_to_eci(_site(spec["site"]), spec["position"], spec["velocity"])
    return np.asarray(spec, dtype=float)


def build(doc: dict) -> Experiment:
    validate(doc)
    objects = tuple(
        TruthObject(o["id"], _state(o["state"]), o.get("rv", False), o.get("spawn_time", 0.0)) for o in doc["objects"]
    )
    rf = []
    for s in doc.get("rf_sensors", []):
        kw = {k: s[k] for k in ("p_d", "false_alarm_rate", "max_range", "noise_scale") if k in s}
        if "noise_std" in s:
            kw["noise_cov"] = np.diag(np.square(s["noise_std"]))
        rf.append(RfSensor(s["id"], _site(s["site"]), **kw))
    seeker = None
    if "seeker" in doc:
        s = doc["seeker"]
        kw = {k: s[k] for k in ("id", "p_d", "false_alarm_rate", "noise_scale") if k in s}
        if "noise_std" in s:
            kw["noise_cov"] = np.diag(np.square(s["noise_std"]))
        if "fov_half_angle_deg" in s:
            kw["fov_half_angle"] = math.radians(s["fov_half_angle_deg"])
        seeker = SeekerSpec(IrSensor(**kw), _state(s["interceptor"]), s.get("start_time", 0.0))
    remote = None
    if "remote" in doc:
        r = doc["remote"]
        kw = {k: r[k] for k in ("interval", "latency", "start", "s_rl", "source") if k in r}
        if "objects" in r:
            kw["objects"] = tuple(r["objects"])
        pos, vel = r.get("pos_std", 200.0), r.get("vel_std", 5.0)
        remote = RemoteSpec(cov=np.diag([pos**2] * 3 + [vel**2] * 3), **kw)
    mu = doc.get("mu", MU_EARTH)
    try:
        scenario = ScenarioConfig(
            doc["duration"],
            doc["scan_interval"],
            objects,
            tuple(rf),
            seeker,
            remote,
            PhysicalConstants(mu),
            doc.get("seed", 0),
        )
    except ValueError as exc:
        raise ConfigError([f"<root>: {exc}"]) from None
    tracker_kw = dict(doc.get("tracker", {}))
    tracker_kw["mu"] = mu
    if remote is not None:
        tracker_kw["s_rl"] = remote.s_rl
    known = {f.name for f in fields(TrackerConfig)}
    tracker = TrackerConfig(**{k: v for k, v in tracker_kw.items() if k in known})
    return Experiment(scenario, tracker, doc.get("metrics", {}).get("settle_time", 0.0))


def load(path: str | Path) -> tuple[dict, Experiment]:
    try:
        with open(path) as fh:
            doc = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ConfigError([f"<file>: invalid JSON at line {exc.lineno}: {exc.msg}"]) from None
    except OSError as exc:
        raise ConfigError([f"<file>: {exc}"]) from None
    return doc, build(doc)
