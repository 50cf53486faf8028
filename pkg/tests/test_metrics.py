import math

import numpy as np
import pytest

from bmdtrack.metrics import RunMetrics, SCALAR_FIELDS, _pair, aggregate, compute_metrics, uniqueness_violations
from bmdtrack.runner import RunLog

COV = np.eye(6).ravel().tolist()


def truth_rows(ids=("a", "b"), steps=5):
    rows = []
    for k in range(steps):
        for n, oid in enumerate(ids):
            rows.append({"t": float(k), "id": oid, "rv": n == 0, "state": [1e6 * (n + 1) + k, 0, 0, 1, 0, 0]})
    return rows


def state(log, oid, t):
    return next(r["state"] for r in log.truth if r["id"] == oid and r["t"] == t)


def track_row(t, tid, mean, status="confirmed"):
    return {"t": t, "id": tid, "status": status, "mean": list(mean), "cov": COV}


def assign(t, tid, truth, index=0, sensor="radar"):
    return {"t": t, "sensor": sensor, "kind": "rf", "index": index, "track": tid, "truth": truth}


def perfect_log(steps=5):
    log = RunLog(truth=truth_rows(steps=steps))
    for k in range(steps):
        t = float(k)
        for i, (tid, oid) in enumerate(((1, "a"), (2, "b"))):
            log.tracks.append(track_row(t, tid, state(log, oid, t)))
            log.assignments.append(assign(t, tid, oid, index=i))
    return log


def test_truth_equal_history():
    m = compute_metrics(perfect_log())
    assert not m.empty
    assert m.pos_rmse == 0.0 and m.vel_rmse == 0.0 and m.nees == 0.0
    assert m.purity == 1.0 and m.association_accuracy == 1.0
    assert m.confirmed_final == 2 and m.truth_count == 2
    assert m.uniqueness_violations == 0
    assert {(p.track, p.truth) for p in m.per_track} == {(1, "a"), (2, "b")}


def test_rmse_hand_value():
    log = RunLog(truth=truth_rows(("a",), steps=3))
    for k, err in enumerate((1.0, 2.0, 2.0)):
        mean = np.array(state(log, "a", float(k)), dtype=float)
        mean[1] += err
        log.tracks.append(track_row(float(k), 1, mean))
    m = compute_metrics(log)
    assert m.pos_rmse == pytest.approx(math.sqrt(3.0), rel=1e-15)
    assert m.vel_rmse == 0.0
    assert m.nees == pytest.approx(3.0)


def test_settle_time_drops_early_samples():
    log = RunLog(truth=truth_rows(("a",), steps=3))
    for k, err in enumerate((100.0, 0.0, 0.0)):
        mean = np.array(state(log, "a", float(k)), dtype=float)
        mean[0] += err
        log.tracks.append(track_row(float(k), 1, mean))
    assert compute_metrics(log).pos_rmse > 50.0
    assert compute_metrics(log, settle_time=1.0).pos_rmse == 0.0


def test_swapped_updates_lower_purity():
    log = perfect_log()
    for a in log.assignments:
        if a["t"] >= 3.0:
            a["truth"] = "b" if a["truth"] == "a" else "a"
    m = compute_metrics(log)
    assert m.purity == pytest.approx(3 / 5)
    assert m.association_accuracy == pytest.approx(3 / 5)


def test_tentative_only_is_empty():
    log = RunLog(truth=truth_rows())
    log.tracks.append(track_row(0.0, 1, state(log, "a", 0.0), status="tentative"))
    m = compute_metrics(log)
    assert m.empty and m.pos_rmse is None and m.purity is None
    assert compute_metrics(RunLog()).empty


def test_uniqueness_violations():
    ok = [assign(0.0, 1, "a", 0), assign(0.0, 2, "b", 1), assign(0.0, 1, "a", 0, sensor="seeker")]
    assert uniqueness_violations(ok) == 0
    assert uniqueness_violations(ok + [assign(0.0, 1, "a", 2)]) == 1
    assert uniqueness_violations(ok + [assign(0.0, 3, "a", 1)]) == 1
    assert uniqueness_violations([assign(0.0, None, None, 0), assign(0.0, None, None, 1)]) == 0


def _greedy(cost):
    pairs, used = {}, set()
    for _, i, j in sorted((cost[i, j], i, j) for i in range(cost.shape[0]) for j in range(cost.shape[1])):
        if i not in pairs and j not in used:
            pairs[i] = j
            used.add(j)
    return pairs


def test_pair_is_swap_stable(rng):
    for _ in range(300):
        n_trk, n_tru = int(rng.integers(1, 5)), int(rng.integers(1, 5))
        cost = rng.random((n_trk, n_tru)) * 10
        pairs = _pair(cost)
        assert len(set(pairs.values())) == len(pairs) == min(n_trk, n_tru)
        total = sum(cost[i, j] for i, j in pairs.items())
        assert total <= sum(cost[i, j] for i, j in _greedy(cost).items()) + 1e-12
        free = set(range(n_tru)) - set(pairs.values())
        for i in pairs:
            assert all(cost[i, pairs[i]] <= cost[i, j] + 1e-9 for j in free)
            for k in pairs:
                swapped = cost[i, pairs[k]] + cost[k, pairs[i]]
                assert swapped >= cost[i, pairs[i]] + cost[k, pairs[k]] - 1e-9
        if n_trk == n_tru == 2:
            best = min(cost[0, 0] + cost[1, 1], cost[0, 1] + cost[1, 0])
            assert total == pytest.approx(best)


def test_pair_prefers_cheaper_swap():
    cost = np.array([[1.0, 2.0], [1.5, 10.0]])
    assert _pair(cost) == {0: 1, 1: 0}


def test_cue_accounting():
    log = perfect_log()
    log.cues = [
        {"id": "c0", "t": 2.0, "truth": "a", "track": 1, "trace_before": 10.0, "trace_after": 4.0},
        {"id": "c1", "t": 2.0, "truth": "b", "track": 1, "trace_before": 10.0, "trace_after": 6.0},
        {"id": "c2", "t": 2.0, "truth": "z", "track": None, "trace_before": 0.0, "trace_after": 0.0},
    ]
    m = compute_metrics(log)
    assert m.cue_accuracy == pytest.approx(2 / 3)
    assert m.cues_accepted == 2
    assert m.fusion_trace_ratio == pytest.approx(0.5)
    assert m.fusion_trace_decreased is True


def test_pointing_summary():
    log = perfect_log()
    log.directives = [
        {"coasted": True, "error": 1e-4, "sigma": 1e-4},
        {"coasted": True, "error": 5e-4, "sigma": 1e-4},
        {"coasted": False, "error": 0.0, "sigma": 1e-4},
    ]
    m = compute_metrics(log)
    assert m.directives == 3 and m.coasted == 2
    assert m.coasted_within_3sigma == 0.5


def test_aggregate_mean_and_stderr(rng):
    runs = []
    vals = rng.normal(size=7) * 3 + 10
    for v in vals:
        r = RunMetrics(False, 2, 2, 2, pos_rmse=float(v))
        runs.append(r if len(runs) % 2 else r.scalars())
    agg = aggregate(runs)
    assert set(agg) == set(SCALAR_FIELDS)
    assert abs(agg["pos_rmse"]["mean"] - np.mean(vals)) < 1e-12
    assert agg["pos_rmse"]["stderr"] == pytest.approx(np.std(vals, ddof=1) / math.sqrt(7))
    assert agg["nees"] == {"mean": None, "stderr": None, "n": 0}
    assert aggregate(runs[:1])["pos_rmse"]["stderr"] == 0.0


def test_log_round_trip(tmp_path):
    log = perfect_log()
    log.write(tmp_path)
    back = RunLog.read(tmp_path)
    assert back.truth == log.truth and back.tracks == log.tracks
    assert compute_metrics(back).scalars() == compute_metrics(log).scalars()
