"""Remote-to-local track association and fusion.

Three fusion rules are provided: the minimum-trace linear combination of two
correlated unbiased estimates, the remote track treated as a full-state
measurement of the local track, and covariance intersection for unknown
cross-correlation.  :func:`fused_time_update` is the one-step prediction that
follows a track-as-measurement fusion when the remote "measurement" noise is
correlated with the local process noise.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy.stats import chi2

from .auction import auction
from .dynamics import DEFAULT_DT_MAX, EARTH, PhysicalConstants
from .filters import (
    FilterError,
    ProcessNoise,
    StateEstimate,
    ekf_time_update,
    flow_with_transition,
    process_matrix,
    symmetrize,
)

_EYE6 = np.eye(6)
_GOLDEN = (math.sqrt(5.0) - 1.0) / 2.0


class FusionError(ArithmeticError):
    pass


@dataclass(frozen=True, eq=False)
class RemoteCue:
    """A remote tracker's estimate, timestamped at its own epoch."""

    id: str
    estimate: StateEstimate
    source: str = "remote"
    timestamp: float = 0.0
    delivered: float | None = None  # local receive time; None means no latency
    truth_id: str | None = None  # simulation label

    @property
    def delivery_time(self) -> float:
        return self.timestamp if self.delivered is None else self.delivered


@dataclass(frozen=True, eq=False)
class NoiseCorrelation:
    """Remote-measurement noise covariance ``R_R`` and its cross-covariance
    ``S_RL`` (per second) with the local process noise."""

    R_R: np.ndarray
    S_RL: np.ndarray = field(default_factory=lambda: np.zeros((6, 6)))


@dataclass(frozen=True, eq=False)
class FusedTrack:
    estimate: StateEstimate
    method: str
    parents: tuple = (None, None)
    weights: tuple[np.ndarray, np.ndarray] | None = None
    omega: float | None = None


def _as_estimate(x) -> StateEstimate:
    return x.estimate if isinstance(x, (RemoteCue, FusedTrack)) else x


def _inv_pd(m: np.ndarray, what: str) -> np.ndarray:
    try:
        np.linalg.cholesky(m)
    except np.linalg.LinAlgError:
        raise FusionError(f"{what} is not positive definite") from None
    return np.linalg.inv(m)


def linear_fusion_weights(
    cov_r: np.ndarray, cov_l: np.ndarray, cross: np.ndarray | None = None
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Weights ``(A_R, A_L)`` and fused covariance for ``x_F = A_R x_R + A_L x_L``.

    ``cross`` is ``E[e_R e_L^T]``.  Weights satisfy ``A_R + A_L = I``.
    """
    cross = np.zeros((6, 6)) if cross is None else np.asarray(cross, dtype=float)
    joint = np.block([[cov_r, cross], [cross.T, cov_l]])
    if np.linalg.eigvalsh(symmetrize(joint)).min() < -1e-12 * np.trace(joint):
        raise FusionError("joint covariance is not positive semi-definite; use covariance_intersection")
    stack = np.vstack([_EYE6, _EYE6])
    try:
        np.linalg.cholesky(joint)
        j_inv_e = np.linalg.solve(joint, stack)
        fused_cov = np.linalg.inv(stack.T @ j_inv_e)
    except np.linalg.LinAlgError:
        raise FusionError("joint covariance is singular; use covariance_intersection") from None
    a_bar = j_inv_e @ fused_cov
    # the stacked solution holds the transposed gains
    return a_bar[:6].T, a_bar[6:].T, symmetrize(fused_cov)


def fuse_linear(remote, local, cross: np.ndarray | None = None, parents=(None, None)) -> FusedTrack:
    r, l = _as_estimate(remote), _as_estimate(local)
    a_r, a_l, cov = linear_fusion_weights(r.cov, l.cov, cross)
    mean = a_r @ r.mean + a_l @ l.mean
    return FusedTrack(StateEstimate(mean, cov, l.epoch), "linear", parents, (a_r, a_l))


def fuse_independent(remote, local, parents=(None, None)) -> FusedTrack:
    """Information-weighted fusion of independent estimates."""
    r, l = _as_estimate(remote), _as_estimate(local)
    info_r = _inv_pd(r.cov, "remote covariance")
    info_l = _inv_pd(l.cov, "local covariance")
    cov = np.linalg.inv(info_r + info_l)
    mean = cov @ (info_r @ r.mean + info_l @ l.mean)
    return FusedTrack(StateEstimate(mean, symmetrize(cov), l.epoch), "independent", parents)


def fuse_as_measurement(local, remote, parents=(None, None)) -> FusedTrack:
    """Kalman update of the local track with the remote mean as a full-state measurement."""
    r, l = _as_estimate(remote), _as_estimate(local)
    try:
        gain = np.linalg.solve(l.cov + r.cov, l.cov).T
    except np.linalg.LinAlgError:
        raise FusionError("local + remote covariance is singular") from None
    mean = l.mean + gain @ (r.mean - l.mean)
    cov = l.cov - gain @ l.cov
    return FusedTrack(StateEstimate(mean, symmetrize(cov), l.epoch), "measurement", parents)


def fused_time_update(
    fused,
    corr: NoiseCorrelation,
    z_f: np.ndarray,
    dt: float,
    Q_L: ProcessNoise | np.ndarray | None = None,
    integrator: str = "euler",
    c: PhysicalConstants = EARTH,
    dt_max: float = DEFAULT_DT_MAX,
    flow: Callable[[np.ndarray, float], tuple[np.ndarray, np.ndarray]] | None = None,
) -> StateEstimate:
    """First prediction after a track-as-measurement fusion.

    With ``Sd = dt * S_RL``:
    mean = f(x) + Sd R^-1 (z_F - x),
    cov = (Phi - Sd R^-1) P (Phi - Sd R^-1)' + Q - Sd R^-1 Sd'.
    ``flow(x, dt) -> (x_next, Phi)`` overrides the Kepler flow.
    """
    est = _as_estimate(fused)
    if dt < 0:
        raise ValueError("dt must be non-negative")
    if dt == 0:
        return est
    r_inv = _inv_pd(np.asarray(corr.R_R, dtype=float), "remote measurement covariance R_R")
    s_d = dt * np.asarray(corr.S_RL, dtype=float)
    k = s_d @ r_inv
    if flow is None:
        x_next, phi = flow_with_transition(est.mean, dt, c, integrator, dt_max)
    else:
        x_next, phi = flow(est.mean, dt)
    mean = x_next + k @ (np.asarray(z_f, dtype=float) - est.mean)
    a = phi - k
    cov = a @ est.cov @ a.T + process_matrix(Q_L, dt) - k @ s_d.T
    return StateEstimate(mean, symmetrize(cov), est.epoch + dt)


def _golden_section(f: Callable[[float], float], lo: float, hi: float, tol: float) -> float:
    a, b = lo, hi
    c = b - _GOLDEN * (b - a)
    d = a + _GOLDEN * (b - a)
    fc, fd = f(c), f(d)
    while b - a > tol:
        if fc <= fd:
            b, d, fd = d, c, fc
            c = b - _GOLDEN * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + _GOLDEN * (b - a)
            fd = f(d)
    # endpoints are admissible and often optimal for dominated inputs
    cands = [(f(lo), lo), (f(0.5 * (a + b)), 0.5 * (a + b)), (f(hi), hi)]
    return min(cands)[1]


def covariance_intersection(
    remote, local, objective: str = "trace", tol: float = 1e-6, parents=(None, None)
) -> FusedTrack:
    """Fuse with unknown cross-correlation: ``P^-1 = w P_L^-1 + (1 - w) P_R^-1``."""
    r, l = _as_estimate(remote), _as_estimate(local)
    info_r = _inv_pd(r.cov, "remote covariance")
    info_l = _inv_pd(l.cov, "local covariance")

    def fused_cov(w):
        return np.linalg.inv(w * info_l + (1.0 - w) * info_r)

    if objective == "trace":
        cost = lambda w: float(np.trace(fused_cov(w)))  # noqa: E731
    elif objective == "det":
        cost = lambda w: float(np.linalg.slogdet(fused_cov(w))[1])  # noqa: E731
    else:
        raise ValueError(f"unknown objective {objective!r}")
    w = _golden_section(cost, 0.0, 1.0, tol)
    cov = fused_cov(w)
    mean = cov @ (w * info_l @ l.mean + (1.0 - w) * info_r @ r.mean)
    return FusedTrack(StateEstimate(mean, symmetrize(cov), l.epoch), "ci", parents, omega=w)


FUSION_METHODS = ("linear", "measurement", "ci", "independent")


def fuse(method: str, local: StateEstimate, remote: StateEstimate, cross=None, parents=(None, None)) -> FusedTrack:
    if method == "linear":
        return fuse_linear(remote, local, cross, parents)
    if method == "measurement":
        return fuse_as_measurement(local, remote, parents)
    if method == "ci":
        return covariance_intersection(remote, local, parents=parents)
    if method == "independent":
        return fuse_independent(remote, local, parents)
    raise ValueError(f"unknown fusion method {method!r}")


@dataclass(frozen=True, eq=False)
class CueAssociation:
    track_id: object | None
    values: np.ndarray  # 1 x (n + 1), last column is the new-track option
    d2: np.ndarray


def associate_remote(
    remote,
    local_tracks: Sequence[tuple[object, StateEstimate]],
    gate_probability: float = 0.997,
    new_track_value: float | None = None,
) -> CueAssociation:
    """Pick the local track that best explains a remote estimate, or none.

    Each candidate is scored with the Gaussian log-likelihood of the mean
    difference under ``P_L + P_R`` (identity observation model), gated at
    ``gate_probability`` with six degrees of freedom.  With
    ``new_track_value=None`` the gate alone decides: any gated track beats
    the new-track option.
    """
    r = _as_estimate(remote)
    threshold = chi2.ppf(gate_probability, 6)
    n = len(local_tracks)
    values = np.full((1, n + 1), -math.inf)
    d2 = np.full(n, math.inf)
    for j, (_, est) in enumerate(local_tracks):
        S = est.cov + r.cov
        nu = r.mean - est.mean
        try:
            d2[j] = float(nu @ np.linalg.solve(S, nu))
        except np.linalg.LinAlgError:
            continue
        if d2[j] <= threshold:
            logdet = np.linalg.slogdet(2.0 * math.pi * S)[1]
            values[0, j] = -0.5 * d2[j] - 0.5 * logdet
    if new_track_value is None:
        gated = values[0, :n][np.isfinite(values[0, :n])]
        new_track_value = float(gated.min()) - 1.0 if gated.size else 0.0
    values[0, n] = new_track_value
    col = int(auction(values)[0])
    track_id = local_tracks[col][0] if col < n else None
    return CueAssociation(track_id, values, d2)


def propagate_cue(
    cue: RemoteCue,
    t: float,
    Q: ProcessNoise | np.ndarray | None = None,
    c: PhysicalConstants = EARTH,
    dt_max: float = DEFAULT_DT_MAX,
) -> StateEstimate:
    """Bring a cue estimate forward to local time with RK4 mean propagation."""
    dt = t - cue.estimate.epoch
    if dt < 0:
        raise FilterError("cue is newer than the local time")
    return ekf_time_update(cue.estimate, dt, Q, "rk4", c, dt_max)
