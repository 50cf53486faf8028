"""Run metrics recomputable from the logged histories alone."""

from __future__ import annotations

import math
from collections import Counter, defaultdict
from dataclasses import asdict, dataclass, field, fields

import numpy as np

from .runner import RunLog


@dataclass
class TrackMetrics:
    track: int
    truth: str | None
    samples: int
    pos_rmse: float | None
    vel_rmse: float | None
    nees: float | None
    purity: float | None
    updates: int


@dataclass
class RunMetrics:
    empty: bool
    truth_count: int
    confirmed_final: int
    confirmed_ever: int
    pos_rmse: float | None = None  # m
    vel_rmse: float | None = None  # m/s
    nees: float | None = None
    purity: float | None = None
    association_accuracy: float | None = None
    cue_accuracy: float | None = None
    cues_accepted: int = 0
    fusion_trace_ratio: float | None = None
    fusion_trace_decreased: bool | None = None
    uniqueness_violations: int = 0
    directives: int = 0
    coasted: int = 0
    coasted_within_3sigma: float | None = None
    numerical_events: int = 0
    per_track: list = field(default_factory=list)

    def scalars(self) -> dict:
        d = asdict(self)
        d.pop("per_track")
        return d


SCALAR_FIELDS = tuple(f.name for f in fields(RunMetrics) if f.name != "per_track")
TRACK_FIELDS = tuple(f.name for f in fields(TrackMetrics))


def _pair(cost: np.ndarray) -> dict:
    """One-to-one track->truth pairing: greedy on ascending cost, then pairwise
    swaps (including swaps with unpaired truths) until no swap lowers the total."""
    n_trk, n_tru = cost.shape
    pairs: dict = {}
    used: set = set()
    order = sorted(
        ((cost[i, j], i, j) for i in range(n_trk) for j in range(n_tru) if np.isfinite(cost[i, j])),
    )
    for _, i, j in order:
        if i not in pairs and j not in used:
            pairs[i] = j
            used.add(j)

    def c(i, j):
        return cost[i, j] if j is not None else 0.0

    improved = True
    while improved:
        improved = False
        rows = sorted(pairs)
        for a in range(len(rows)):
            i = rows[a]
            for b in range(a + 1, len(rows)):
                k = rows[b]
                ji, jk = pairs[i], pairs[k]
                if c(i, jk) + c(k, ji) < c(i, ji) + c(k, jk) - 1e-9:
                    pairs[i], pairs[k] = jk, ji
                    improved = True
            for j in range(n_tru):
                if j not in pairs.values() and cost[i, j] < cost[i, pairs[i]] - 1e-9:
                    pairs[i] = j
                    improved = True
    return pairs


def _track_updates(assignments) -> dict:
    out = defaultdict(list)
    for a in assignments:
        if a.get("track") is not None:
            out[a["track"]].append(a.get("truth"))
    return out


def compute_metrics(log: RunLog, settle_time: float = 0.0) -> RunMetrics:
    """Metrics for one replication.

    Errors are taken over confirmed-track samples at ``t >= settle_time``
    against the paired truth object.
    """
    truth: dict = defaultdict(dict)
    for r in log.truth:
        truth[r["id"]][r["t"]] = np.asarray(r["state"])
    history: dict = defaultdict(list)
    final_t = max((r["t"] for r in log.tracks), default=None)
    for r in log.tracks:
        history[r["id"]].append(r)
    confirmed = {tid for tid, rs in history.items() if any(r["status"] == "confirmed" for r in rs)}
    confirmed_final = len({r["id"] for r in log.tracks if r["t"] == final_t and r["status"] == "confirmed"})
    numerical = sum(1 for e in log.events if e.get("event") == "numerical")
    m = RunMetrics(not confirmed, len(truth), confirmed_final, len(confirmed), numerical_events=numerical)
    m.uniqueness_violations = uniqueness_violations(log.assignments)
    _pointing(m, log.directives)
    if m.empty:
        return m

    trk_ids = sorted(confirmed)
    tru_ids = sorted(truth)
    samples = {
        tid: [r for r in history[tid] if r["status"] == "confirmed" and r["t"] >= settle_time] for tid in trk_ids
    }
    cost = np.full((len(trk_ids), len(tru_ids)), np.inf)
    for i, tid in enumerate(trk_ids):
        for j, oid in enumerate(tru_ids):
            d = [np.linalg.norm(np.asarray(r["mean"][:3]) - truth[oid][r["t"]][:3]) for r in samples[tid] if r["t"] in truth[oid]]
            if d:
                cost[i, j] = float(np.mean(d))
    pairs = _pair(cost)
    paired = {trk_ids[i]: tru_ids[j] for i, j in pairs.items()}

    updates = _track_updates(log.assignments)
    pos_sq, vel_sq, nees_all = [], [], []
    pure = total = 0
    for tid in trk_ids:
        oid = paired.get(tid)
        ups = updates.get(tid, [])
        majority = Counter(ups).most_common(1)[0][1] if ups else 0
        pure += majority
        total += len(ups)
        tp, tv, tn = [], [], []
        if oid is not None:
            for r in samples[tid]:
                x = truth[oid].get(r["t"])
                if x is None:
                    continue
                e = np.asarray(r["mean"]) - x
                tp.append(float(e[:3] @ e[:3]))
                tv.append(float(e[3:] @ e[3:]))
                cov = np.asarray(r["cov"]).reshape(6, 6)
                tn.append(float(e @ np.linalg.solve(cov, e)))
        pos_sq += tp
        vel_sq += tv
        nees_all += tn
        m.per_track.append(
            TrackMetrics(
                tid,
                oid,
                len(tp),
                math.sqrt(math.fsum(tp) / len(tp)) if tp else None,
                math.sqrt(math.fsum(tv) / len(tv)) if tv else None,
                math.fsum(tn) / len(tn) if tn else None,
                majority / len(ups) if ups else None,
                len(ups),
            )
        )
    if pos_sq:
        m.pos_rmse = math.sqrt(math.fsum(pos_sq) / len(pos_sq))
        m.vel_rmse = math.sqrt(math.fsum(vel_sq) / len(vel_sq))
        m.nees = math.fsum(nees_all) / len(nees_all)
    m.purity = pure / total if total else None

    hits = n = 0
    for a in log.assignments:
        if a.get("track") is None or a.get("new"):
            continue
        n += 1
        hits += paired.get(a["track"]) == a.get("truth")
    m.association_accuracy = hits / n if n else None

    alive_at = defaultdict(set)
    for r in log.tracks:
        alive_at[r["t"]].add(r["id"])
    ok = ratios = 0
    ratio_sum: list = []
    decreased = True
    for c in log.cues:
        if c["track"] is not None:
            ok += paired.get(c["track"]) == c["truth"]
            ratio_sum.append(c["trace_after"] / c["trace_before"])
            decreased &= c["trace_after"] < c["trace_before"]
            ratios += 1
        else:
            ok += not any(paired.get(tid) == c["truth"] for tid in alive_at[c["t"]])
    if log.cues:
        m.cue_accuracy = ok / len(log.cues)
    m.cues_accepted = ratios
    if ratio_sum:
        m.fusion_trace_ratio = math.fsum(ratio_sum) / len(ratio_sum)
        m.fusion_trace_decreased = bool(decreased)
    return m


def uniqueness_violations(assignments) -> int:
    """Tracks given two measurements by one sensor in one scan, plus measurements used twice."""
    tracks: Counter = Counter()
    meas: Counter = Counter()
    for a in assignments:
        key = (a["t"], a["sensor"])
        meas[key + (a["index"],)] += 1
        if a.get("track") is not None:
            tracks[key + (a["track"],)] += 1
    return sum(v - 1 for v in tracks.values() if v > 1) + sum(v - 1 for v in meas.values() if v > 1)


def _pointing(m: RunMetrics, directives) -> None:
    m.directives = len(directives)
    coasted = [d for d in directives if d["coasted"] and d.get("error") is not None]
    m.coasted = sum(1 for d in directives if d["coasted"])
    if coasted:
        m.coasted_within_3sigma = sum(d["error"] < 3.0 * d["sigma"] for d in coasted) / len(coasted)


def aggregate(runs: list) -> dict:
    """Mean and standard error of every numeric scalar across replications."""
    out = {}
    for name in SCALAR_FIELDS:
        vals = [r.scalars()[name] if isinstance(r, RunMetrics) else r[name] for r in runs]
        vals = [float(v) for v in vals if v is not None]
        if not vals:
            out[name] = {"mean": None, "stderr": None, "n": 0}
            continue
        mean = math.fsum(vals) / len(vals)
        se = float(np.std(vals, ddof=1) / math.sqrt(len(vals))) if len(vals) > 1 else 0.0
        out[name] = {"mean": mean, "stderr": se, "n": len(vals)}
    return out
