"""Unscented Kalman filter with 2n+1 symmetric sigma points.

Weights follow the standard parameterization ``W0 = kappa/(n+kappa)``,
``Wi = 1/(2(n+kappa))`` with spread ``sqrt(n+kappa)`` along Cholesky columns.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from ..dynamics import DEFAULT_DT_MAX, EARTH, PhysicalConstants, propagate
from ..frames import StateTransform
from ..sensors import IrMeasurement, RfMeasurement, wrap_angle
from .ekf import Innovation, _check_aligned
from .estimate import FilterError, ProcessNoise, StateEstimate, process_matrix, symmetrize
from .models import MeasurementModel, ir_model, rf_model

ZETA_MODES = ("standard", "paper_exact")


@dataclass(frozen=True)
class UkfParams:
    kappa: float = 0.0
    n: int = 6

    def __post_init__(self):
        if not self.n + self.kappa > 0:
            raise ValueError("n + kappa must be positive")

    @property
    def spread(self) -> float:
        return math.sqrt(self.n + self.kappa)

    @property
    def weights(self) -> np.ndarray:
        w = np.full(2 * self.n + 1, 1.0 / (2.0 * (self.n + self.kappa)))
        w[0] = self.kappa / (self.n + self.kappa)
        return w


@dataclass(frozen=True, eq=False)
class SigmaSet:
    points: np.ndarray  # (2n+1, n); row 0 is the mean
    weights: np.ndarray

    def mean(self) -> np.ndarray:
        return self.weights @ self.points

    def cov(self, mean: np.ndarray | None = None) -> np.ndarray:
        d = self.points - (self.mean() if mean is None else mean)
        return (self.weights[:, None] * d).T @ d


def cholesky(cov: np.ndarray) -> np.ndarray:
    """Lower Cholesky factor; on failure report the first non-positive leading minor."""
    try:
        return np.linalg.cholesky(cov)
    except np.linalg.LinAlgError:
        for k in range(1, cov.shape[0] + 1):
            try:
                np.linalg.cholesky(cov[:k, :k])
            except np.linalg.LinAlgError:
                raise FilterError(f"covariance not positive definite: leading minor of order {k} fails") from None
        raise FilterError("covariance not positive definite") from None


def sigma_points(est: StateEstimate, params: UkfParams = UkfParams()) -> SigmaSet:
    L = cholesky(est.cov) * params.spread
    m = est.mean
    pts = np.vstack([m, m + L.T, m - L.T])
    return SigmaSet(pts, params.weights)


def ukf_time_update(
    est: StateEstimate,
    dt: float,
    Q: ProcessNoise | np.ndarray | None = None,
    params: UkfParams = UkfParams(),
    integrator: str = "euler",
    c: PhysicalConstants = EARTH,
    dt_max: float = DEFAULT_DT_MAX,
    dynamics: Callable[[np.ndarray, float], np.ndarray] | None = None,
    return_sigma: bool = False,
):
    """Push every sigma point through the plant over ``dt`` and re-form the moments.

    ``dynamics(points, dt)`` overrides the Kepler flow (test doubles).  With
    ``return_sigma`` the propagated :class:`SigmaSet` is returned as well.
    """
    if dt < 0:
        raise ValueError("dt must be non-negative")
    if dt == 0:
        return (est, sigma_points(est, params)) if return_sigma else est
    sigma = sigma_points(est, params)
    if dynamics is None:
        pts = propagate(sigma.points, dt, c, integrator, dt_max)
    else:
        pts = dynamics(sigma.points, dt)
    prop = SigmaSet(pts, sigma.weights)
    mean = prop.mean()
    cov = prop.cov(mean) + process_matrix(Q, dt)
    out = StateEstimate(mean, symmetrize(cov), est.epoch + dt)
    return (out, prop) if return_sigma else out


def _observe(sigma: SigmaSet, model: MeasurementModel) -> np.ndarray:
    Z = np.atleast_2d(model.h(sigma.points))
    if model.angle_idx:
        # unwrap angle components about point 0 so weighted sums never straddle the branch cut
        idx = list(model.angle_idx)
        Z = Z.copy()
        Z[:, idx] = Z[0, idx] + wrap_angle(Z[:, idx] - Z[0, idx])
    return Z


def ukf_predicted_observation(
    sigma: SigmaSet, model: MeasurementModel, mode: str = "standard"
) -> np.ndarray:
    """Weighted sum of the propagated points' predicted outputs.

    ``standard`` sums over all points; ``paper_exact`` skips point 0 and keeps
    the remaining weights as they are.
    """
    if mode not in ZETA_MODES:
        raise ValueError(f"unknown zeta mode {mode!r}")
    Z = _observe(sigma, model)
    if mode == "standard":
        zeta = sigma.weights @ Z
    else:
        zeta = sigma.weights[1:] @ Z[1:]
    if model.angle_idx:
        idx = list(model.angle_idx)
        zeta[idx] = wrap_angle(zeta[idx])
    return zeta


def _unscented_moments(est, model, params, sigma, mode):
    if sigma is None:
        sigma = sigma_points(est, params)
    Z = _observe(sigma, model)
    zeta = ukf_predicted_observation(sigma, model, mode)
    dZ = model.residual(Z, zeta)
    dX = sigma.points - est.mean
    w = sigma.weights[:, None]
    Szz = symmetrize((w * dZ).T @ dZ + model.R)
    Sxz = (w * dX).T @ dZ
    return zeta, Szz, Sxz


def ukf_innovation(
    est: StateEstimate,
    z: np.ndarray,
    model: MeasurementModel,
    params: UkfParams = UkfParams(),
    sigma: SigmaSet | None = None,
    mode: str = "standard",
) -> Innovation:
    zeta, Szz, _ = _unscented_moments(est, model, params, sigma, mode)
    return Innovation(zeta, model.residual(z, zeta), Szz)


def ukf_update(
    est: StateEstimate,
    z: np.ndarray,
    model: MeasurementModel,
    params: UkfParams = UkfParams(),
    sigma: SigmaSet | None = None,
    mode: str = "standard",
) -> StateEstimate:
    """Unscented measurement update.

    ``sigma`` defaults to points redrawn from ``est``; pass the propagated set
    from :func:`ukf_time_update` to reuse it.
    """
    zeta, Szz, Sxz = _unscented_moments(est, model, params, sigma, mode)
    try:
        K = np.linalg.solve(Szz, Sxz.T).T
    except np.linalg.LinAlgError as exc:
        raise FilterError("innovation covariance is not invertible") from exc
    mean = est.mean + K @ model.residual(z, zeta)
    cov = est.cov - K @ Szz @ K.T
    return est.replace(mean=mean, cov=symmetrize(cov))


def ukf_update_rf(
    est: StateEstimate, z: RfMeasurement, T: StateTransform, params: UkfParams = UkfParams(), mode: str = "standard"
) -> StateEstimate:
    _check_aligned(est, z.timestamp)
    return ukf_update(est, z.z, rf_model(T, z.noise_cov), params, None, mode)


def ukf_update_ir(
    est: StateEstimate, z: IrMeasurement, T: StateTransform, params: UkfParams = UkfParams(), mode: str = "standard"
) -> StateEstimate:
    _check_aligned(est, z.timestamp)
    return ukf_update(est, z.z, ir_model(T, z.noise_cov), params, None, mode)
