"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line.

Run with ``pytest tests/test_acceptance.py -v`` to see the verdict lines.
"""

import functools
import itertools
import math
import time
from pathlib import Path

import numpy as np
import pytest
from scipy.stats import chi2

from bmdtrack import cli
from bmdtrack.association import Tracker
from bmdtrack.auction import UNASSIGNED, auction
from bmdtrack.config import load
from bmdtrack.dynamics import kepler_derivative, kepler_jacobian, propagate
from bmdtrack.filters import (
    ProcessNoise,
    StateEstimate,
    UkfParams,
    augmented_model,
    ekf_innovation,
    ekf_time_update,
    ekf_update,
    ekf_update_sequential,
    ir_model,
    linear_model,
    make_filter,
    nees,
    rf_model,
    sigma_points,
    ukf_time_update,
    ukf_update,
)
from bmdtrack.frames import ECI, Attitude, Frame, GeodeticSite, state_transform
from bmdtrack.fusion import (
    NoiseCorrelation,
    covariance_intersection,
    fuse_as_measurement,
    fuse_independent,
    fuse_linear,
    fused_time_update,
    linear_fusion_weights,
)
from bmdtrack.metrics import compute_metrics
from bmdtrack.runner import run_replication
from bmdtrack.sensors import RfSensor, h_ir, h_ir_jacobian, h_rf, h_rf_jacobian, simulate_rf

from conftest import central_difference, random_spd, random_states

SCENARIOS = Path(__file__).resolve().parent.parent / "scenarios"


@pytest.fixture
def verdict(capsys):
    def report(number: int, title: str, ok: bool, detail: str) -> None:
        with capsys.disabled():
            print(f"\n[criterion {number:2d}] {'PASS' if ok else 'FAIL'}  {title}: {detail}")
        assert ok, detail

    return report


@functools.lru_cache(maxsize=None)
def scenario_runs(name: str, seeds: int) -> tuple:
    """(metrics, logs) for seeds 0..seeds-1 of a shipped scenario."""
    _, exp = load(SCENARIOS / f"{name}.json")
    out = []
    for seed in range(seeds):
        log, _ = run_replication(exp.scenario, exp.tracker, seed)
        out.append((compute_metrics(log, exp.settle_time), log))
    return tuple(out)


# 1 -----------------------------------------------------------------------------------


def test_criterion_01_jacobian_fidelity(verdict):
    rng = np.random.default_rng(101)
    start = time.perf_counter()
    worst = {"F": 0.0, "H_RF": 0.0, "H_IR": 0.0}
    for x in random_states(rng, 100):
        F = kepler_jacobian(x)
        fd = central_difference(kepler_derivative, x, np.linalg.norm(x[:3]) * 1e-7)
        # each nonzero block against its own scale: d(p)/dv = I and the gravity gradient
        worst["F"] = max(
            worst["F"],
            np.max(np.abs(F[:3, 3:] - fd[:3, 3:])),
            np.max(np.abs(F[3:, :3] - fd[3:, :3])) / np.max(np.abs(F[3:, :3])),
            np.max(np.abs(fd[:3, :3])) + np.max(np.abs(fd[3:, 3:])),
        )
        # sensor-frame positions well away from the degenerate axes
        p = x[:3] - np.array([6.0e6, 0.0, 0.0]) if np.linalg.norm(x[:3] - [6.0e6, 0, 0]) > 1e5 else x[:3]
        xs = np.concatenate([p, np.zeros(3)])
        step = np.linalg.norm(p) * 1e-6
        for key, h, jac in (("H_RF", h_rf, h_rf_jacobian), ("H_IR", h_ir, h_ir_jacobian)):
            J = jac(p)
            fdh = central_difference(lambda s: h(s[:3]), xs, step)
            for row in range(J.shape[0]):
                worst[key] = max(worst[key], np.max(np.abs(J[row] - fdh[row])) / np.max(np.abs(J[row])))
    elapsed = time.perf_counter() - start
    ok = all(v < 1e-6 for v in worst.values()) and elapsed < 1.0
    verdict(1, "Jacobian fidelity", ok, ", ".join(f"{k} {v:.2e}" for k, v in worst.items()) + f", {elapsed:.2f} s")


# 2 -----------------------------------------------------------------------------------


def test_criterion_02_ukf_moment_matching(verdict):
    rng = np.random.default_rng(202)
    start = time.perf_counter()
    moment_err = 0.0
    for _ in range(50):
        est = StateEstimate(rng.normal(size=6) * 1e6, random_spd(rng, 6, 1e2, 1e6))
        s = sigma_points(est, UkfParams())
        moment_err = max(
            moment_err,
            np.max(np.abs(s.mean() - est.mean)) / np.max(np.abs(est.mean)),
            np.max(np.abs(s.cov() - est.cov)) / np.max(np.abs(est.cov)),
        )

    # linear test doubles against a hand-written Kalman recursion
    dt = 1.0
    A = np.eye(6)
    A[:3, 3:] = dt * np.eye(3)
    Q = ProcessNoise(0.5)
    H = rng.normal(size=(3, 6))
    R = random_spd(rng, 3, 1.0, 10.0)

    def drift(pts, h):
        out = pts.copy()
        out[:, :3] += h * pts[:, 3:]
        return out

    ukf = StateEstimate(rng.normal(size=6), random_spd(rng, 6, 10.0))
    m, P = ukf.mean.copy(), ukf.cov.copy()
    kf_err = 0.0
    for _ in range(20):
        ukf = ukf_time_update(ukf, dt, Q, UkfParams(), dynamics=drift)
        m, P = A @ m, A @ P @ A.T + Q.matrix(dt)
        z = H @ m + rng.normal(size=3)
        ukf = ukf_update(ukf, z, linear_model(H, R), UkfParams())
        S = H @ P @ H.T + R
        K = P @ H.T @ np.linalg.inv(S)
        m, P = m + K @ (z - H @ m), (np.eye(6) - K @ H) @ P
        kf_err = max(kf_err, np.max(np.abs(ukf.mean - m)), np.max(np.abs(ukf.cov - P)))
    elapsed = time.perf_counter() - start
    ok = moment_err < 1e-9 and kf_err < 1e-8 and elapsed < 1.0
    verdict(2, "UKF moment matching", ok, f"moments {moment_err:.2e}, vs Kalman {kf_err:.2e}, {elapsed:.2f} s")


# 3 -----------------------------------------------------------------------------------


def test_criterion_03_filter_consistency(verdict):
    site = GeodeticSite.from_degrees(30.0, 0.0, 0.0)
    ecef = site.ecef()
    up = ecef / np.linalg.norm(ecef)
    east = np.array([0.0, 1.0, 0.0])
    north = np.cross(up, east)
    p0 = ecef + 400e3 * up + 300e3 * north
    v0 = 1000.0 * up - 3500.0 * north + 500.0 * east + np.cross([0.0, 0.0, 7.2921159e-5], p0)
    x0 = np.concatenate([p0, v0])
    sensor = RfSensor("rf", site, p_d=1.0)
    scans = 300
    truth = [x0]
    for _ in range(scans):
        truth.append(propagate(truth[-1], 1.0, integrator="rk4", dt_max=0.1))
    transforms = [state_transform(ECI, sensor.frame, float(k)) for k in range(scans + 1)]
    P0 = np.diag([500.0**2] * 3 + [20.0**2] * 3)
    L0 = np.linalg.cholesky(P0)

    def replicate(kind, seed):
        rng = np.random.default_rng(seed)
        est = StateEstimate(x0 + L0 @ rng.standard_normal(6), P0, 0.0)
        f = make_filter(kind, integrator="rk4", process_noise=ProcessNoise(0.0))
        total = 0.0
        for k in range(1, scans + 1):
            est = f.predict(est, float(k))
            z = simulate_rf(truth[k], float(k), sensor, rng)
            est = f.update(est, z.z, rf_model(transforms[k], z.noise_cov))
            total += nees(est, truth[k])
        return total / scans

    start = time.perf_counter()
    avg = {kind: float(np.mean([replicate(kind, s) for s in range(200)])) for kind in ("ekf", "ukf")}
    elapsed = time.perf_counter() - start
    ok = all(5.29 <= v <= 6.74 for v in avg.values()) and elapsed < 120.0
    verdict(3, "filter consistency", ok, f"NEES ekf {avg['ekf']:.3f}, ukf {avg['ukf']:.3f} in [5.29, 6.74], {elapsed:.1f} s")


# 4 -----------------------------------------------------------------------------------


def test_criterion_04_sequential_equals_augmented(verdict):
    rng = np.random.default_rng(404)
    site = GeodeticSite.from_degrees(30.0, 0.0)
    T_rf = state_transform(ECI, Frame.enu(site), 0.0)
    R_rf = np.diag([25.0, 1e-6, 1e-6])
    R_ir = np.diag([0.25e-6, 0.25e-6])
    worst = 0.0
    for _ in range(1000):
        enu = np.array([rng.uniform(-2e5, 2e5), rng.uniform(1e5, 5e5), rng.uniform(5e4, 5e5)])
        x = T_rf.inverse().apply(np.concatenate([enu, rng.normal(size=3) * 2000]))
        p = x[:3]
        los = rng.normal(size=3)
        los /= np.linalg.norm(los)
        origin = np.concatenate([p - rng.uniform(2e4, 2e5) * los, np.zeros(3)])
        att = Attitude.from_boresight(p - origin[:3] + rng.normal(size=3) * 1e3, -origin[:3])
        T_ir = state_transform(ECI, Frame.body(att, origin), 0.0)
        P = random_spd(rng, 6, 1.0, 1e2) * np.outer([100.0] * 3 + [10.0] * 3, [100.0] * 3 + [10.0] * 3)
        est = StateEstimate(x + np.linalg.cholesky(P) @ rng.standard_normal(6), P)
        rf, ir = rf_model(T_rf, R_rf), ir_model(T_ir, R_ir)
        zr = rf.h(x) + rng.normal(size=3) * np.sqrt(np.diag(R_rf))
        zi = ir.h(x) + rng.normal(size=2) * np.sqrt(np.diag(R_ir))
        seq = ekf_update_sequential(est, [(zr, rf), (zi, ir)], relinearize=False)
        aug = ekf_update(est, np.concatenate([zr, zi]), augmented_model(rf, ir))
        worst = max(
            worst,
            np.max(np.abs(seq.mean - aug.mean)) / np.linalg.norm(est.mean),
            np.max(np.abs(seq.cov - aug.cov)) / np.max(np.abs(aug.cov)),
        )
    verdict(4, "sequential vs augmented update", worst < 1e-8, f"max relative difference {worst:.2e} over 1000 cases")


# 5 -----------------------------------------------------------------------------------


def _brute(values):
    m, n = values.shape
    return max(sum(values[i, j] for i, j in enumerate(cols)) for cols in itertools.permutations(range(n), m))


def test_criterion_05_assignment_optimality(verdict):
    rng = np.random.default_rng(505)
    mismatches = 0
    for _ in range(1000):
        m = int(rng.integers(1, 5))
        n = int(rng.integers(m, 5))
        values = np.round(rng.normal(size=(m, n)) * 10, 3)
        cols = auction(values)
        used = [c for c in cols if c != UNASSIGNED]
        if len(used) != len(set(used)) or abs(values[np.arange(m), cols].sum() - _brute(values)) > 1e-9:
            mismatches += 1
    runs = scenario_runs("crossing", 50) + scenario_runs("terminal", 20) + scenario_runs("cues", 50)
    violations = sum(m.uniqueness_violations for m, _ in runs)
    ok = mismatches == 0 and violations == 0
    verdict(5, "assignment optimality", ok, f"{mismatches} auction/brute-force mismatches, {violations} uniqueness violations over {len(runs)} scenario runs")


# 6 -----------------------------------------------------------------------------------


def test_criterion_06_association_quality(verdict):
    runs = scenario_runs("crossing", 50)
    pure = sum(m.purity == 1.0 for m, _ in runs)
    two = sum(m.confirmed_final == 2 for m, _ in runs)
    ok = pure == 50 and two >= 48
    verdict(6, "association quality", ok, f"purity 1.0 in {pure}/50 seeds, two confirmed tracks in {two}/50")


# 7 -----------------------------------------------------------------------------------


def test_criterion_07_seeker_pointing(verdict, monkeypatch):
    _, exp = load(SCENARIOS / "terminal.json")
    assert exp.scenario.seeker.sensor.p_d == 0.8
    threshold = chi2.ppf(exp.tracker.gate_probability, 2)
    original = Tracker.seeker_point
    calls = []

    def observed(self, ir, seeker, t):
        rv = [trk for trk in self.active_tracks if trk.rv_flag][0]
        T = state_transform(ECI, seeker, t)
        gated = False
        for z in ir:
            inn = ekf_innovation(rv.estimate, z.z, ir_model(T, z.noise_cov))
            gated |= float(inn.nu @ np.linalg.solve(inn.S, inn.nu)) <= threshold
        d = original(self, ir, seeker, t)
        calls.append((gated, d.coasted))
        return d

    monkeypatch.setattr(Tracker, "seeker_point", observed)
    within = coasted = directives = 0
    for seed in range(20):
        calls.clear()
        log, _ = run_replication(exp.scenario, exp.tracker, seed)
        assert len(log.directives) == len(calls)
        directives += len(calls)
        for gated, was_coasted in calls:
            if not gated and not was_coasted:
                verdict(7, "seeker pointing", False, f"seed {seed}: no gated return but directive not coasted")
        for d in log.directives:
            if d["coasted"]:
                coasted += 1
                within += d["error"] < 3.0 * d["sigma"]
    frac = within / coasted if coasted else 0.0
    ok = coasted > 0 and frac >= 0.95
    verdict(7, "seeker pointing", ok, f"{directives} directives, every ungated scan coasted; {within}/{coasted} coasted within 3 sigma ({frac:.3f})")


# 8 -----------------------------------------------------------------------------------


def test_criterion_08_fusion(verdict):
    rng = np.random.default_rng(808)
    weight_err = 0.0
    beaten = 0
    for _ in range(100):
        joint = random_spd(rng, 12, 1.0, 1e2)
        Pr, Pl, C = joint[:6, :6], joint[6:, 6:], joint[:6, 6:]
        a_r, a_l, P = linear_fusion_weights(Pr, Pl, C)
        weight_err = max(weight_err, np.max(np.abs(a_r + a_l - np.eye(6))))
        best = np.trace(P)
        for _ in range(1000):
            b_r = a_r + rng.normal(size=(6, 6)) * rng.choice([0.01, 0.1, 1.0])
            G = np.hstack([b_r, np.eye(6) - b_r])
            if np.trace(G @ joint @ G.T) < best - 1e-9 * best:
                beaten += 1
    agree = 0.0
    for _ in range(1000):
        r = StateEstimate(rng.normal(size=6) * 10, random_spd(rng, 6, 1.0, 1e3))
        l = StateEstimate(rng.normal(size=6) * 10, random_spd(rng, 6, 1.0, 1e3))
        a = fuse_independent(r, l).estimate
        for other in (fuse_linear(r, l, np.zeros((6, 6))).estimate, fuse_as_measurement(l, r).estimate):
            agree = max(
                agree,
                np.max(np.abs(other.mean - a.mean)) / max(1.0, np.abs(a.mean).max()),
                np.max(np.abs(other.cov - a.cov)) / np.abs(a.cov).max(),
            )
    x0 = np.array([7.0e6, 1.0e5, 2.0e5, 100.0, 7000.0, 500.0])
    reduce_err = 0.0
    for _ in range(20):
        e = StateEstimate(x0 + rng.normal(size=6) * 100, random_spd(rng, 6, 1e2, 1e3))
        Q = ProcessNoise(1e-2)
        a = fused_time_update(e, NoiseCorrelation(random_spd(rng, 6, 1e2)), e.mean + rng.normal(size=6), 2.0, Q)
        b = ekf_time_update(e, 2.0, Q)
        reduce_err = max(
            reduce_err,
            np.max(np.abs(a.mean - b.mean) / np.abs(b.mean)),
            np.max(np.abs(a.cov - b.cov)) / np.abs(b.cov).max(),
        )
    ok = weight_err < 1e-10 and beaten == 0 and agree < 1e-9 and reduce_err < 1e-12
    verdict(
        8,
        "fusion optimality and agreement",
        ok,
        f"weights {weight_err:.1e}, {beaten} random weights beat the optimum, agreement {agree:.1e}, S_RL=0 reduction {reduce_err:.1e}",
    )


# 9 -----------------------------------------------------------------------------------


def test_criterion_09_ci_conservative(verdict):
    rng = np.random.default_rng(909)
    failures = 0
    worst = math.inf
    for _ in range(500):
        joint = random_spd(rng, 12, 1.0, 1e2)
        Pr, Pl, C = joint[:6, :6], joint[6:, 6:], joint[:6, 6:]
        r, l = StateEstimate(np.zeros(6), Pr), StateEstimate(np.zeros(6), Pl)
        P_ci = covariance_intersection(r, l).estimate.cov
        P_opt = fuse_linear(r, l, C).estimate.cov
        margin = np.linalg.eigvalsh(P_ci - P_opt).min() / np.trace(P_ci)
        worst = min(worst, margin)
        failures += margin < -1e-9
    verdict(9, "covariance intersection conservativeness", failures == 0, f"{failures}/500 failures, worst min-eig/trace {worst:.2e}")


# 10 ----------------------------------------------------------------------------------


def test_criterion_10_cue_association(verdict):
    runs = scenario_runs("cues", 50)
    total = sum(len(log.cues) for _, log in runs)
    correct = sum(round(m.cue_accuracy * len(log.cues)) for m, log in runs)
    accepted = sum(m.cues_accepted for m, _ in runs)
    decreased = sum(c["trace_after"] < c["trace_before"] for _, log in runs for c in log.cues if c["track"] is not None)
    latencies = {c["t"] - c["timestamp"] for _, log in runs for c in log.cues}
    frac = correct / total if total else 0.0
    ok = total > 0 and frac >= 0.98 and decreased == accepted and latencies == {10.0}
    verdict(10, "cue association", ok, f"{correct}/{total} correct ({frac:.4f}), trace decreased on {decreased}/{accepted} accepted cues")


# 11 ----------------------------------------------------------------------------------


def test_criterion_11_determinism(verdict, tmp_path):
    differing = []
    for path in sorted(SCENARIOS.glob("*.json")):
        outs = [tmp_path / f"{path.stem}_{k}" for k in range(2)]
        for out in outs:
            assert cli.main(["run", "--scenario", str(path), "--reps", "2", "--seed", "11", "--out", str(out)]) == 0
        files = sorted(p.relative_to(outs[0]) for p in outs[0].rglob("*") if p.is_file())
        for f in files:
            if (outs[0] / f).read_bytes() != (outs[1] / f).read_bytes():
                differing.append(f"{path.stem}/{f}")
    verdict(11, "determinism", not differing, f"{len(differing)} differing files across repeated runs of every shipped scenario")
