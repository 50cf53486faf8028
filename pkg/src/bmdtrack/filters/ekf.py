"""Extended Kalman filter: Euler-linearized covariance propagation and
block-sequential RF-then-IR measurement updates."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..dynamics import DEFAULT_DT_MAX, EARTH, INTEGRATORS, PhysicalConstants, kepler_jacobian, substeps
from ..frames import StateTransform
from ..sensors import IrMeasurement, RfMeasurement
from .estimate import FilterError, ProcessNoise, StateEstimate, process_matrix, symmetrize
from .models import MeasurementModel, ir_model, rf_model

TIME_TOL = 1e-6  # s


@dataclass(frozen=True, eq=False)
class Innovation:
    zhat: np.ndarray
    nu: np.ndarray
    S: np.ndarray


def flow_with_transition(
    x: np.ndarray,
    dt: float,
    c: PhysicalConstants = EARTH,
    integrator: str = "euler",
    dt_max: float = DEFAULT_DT_MAX,
) -> tuple[np.ndarray, np.ndarray]:
    """Propagated mean and the product of per-substep ``I + h F`` transitions."""
    step = INTEGRATORS[integrator]
    n, h = substeps(dt, dt_max)
    phi = np.eye(6)
    for _ in range(n):
        phi = (np.eye(6) + h * kepler_jacobian(x, c)) @ phi
        x = step(x, h, c)
    return x, phi


def ekf_time_update(
    est: StateEstimate,
    dt: float,
    Q: ProcessNoise | np.ndarray | None = None,
    integrator: str = "euler",
    c: PhysicalConstants = EARTH,
    dt_max: float = DEFAULT_DT_MAX,
) -> StateEstimate:
    """Propagate the mean through the plant and the covariance as ``F_k P F_k' + Q``."""
    if dt < 0:
        raise ValueError("dt must be non-negative")
    if dt == 0:
        return est
    x, phi = flow_with_transition(est.mean, dt, c, integrator, dt_max)
    cov = phi @ est.cov @ phi.T + process_matrix(Q, dt)
    return StateEstimate(x, symmetrize(cov), est.epoch + dt)


def _check_aligned(est: StateEstimate, timestamp: float) -> None:
    if abs(est.epoch - timestamp) > TIME_TOL:
        raise ValueError(f"estimate epoch {est.epoch} not aligned with measurement time {timestamp}")


def ekf_innovation(
    est: StateEstimate, z: np.ndarray, model: MeasurementModel, linearize_at: np.ndarray | None = None
) -> Innovation:
    x = est.mean
    if linearize_at is None:
        H = model.jacobian(x)
        zhat = model.h(x)
    else:
        H = model.jacobian(linearize_at)
        zhat = model.h(linearize_at) + H @ (x - linearize_at)
    S = symmetrize(H @ est.cov @ H.T + model.R)
    return Innovation(zhat, model.residual(z, zhat), S)


def ekf_update(
    est: StateEstimate,
    z: np.ndarray,
    model: MeasurementModel,
    joseph: bool = False,
    linearize_at: np.ndarray | None = None,
) -> StateEstimate:
    """Generic EKF measurement update in ECI.

    ``linearize_at`` pins the Jacobian and predicted output to a fixed point
    (first-order expansion about it) instead of the current mean.
    """
    P = est.cov
    xl = est.mean if linearize_at is None else linearize_at
    H = model.jacobian(xl)
    inn = ekf_innovation(est, z, model, linearize_at)
    HP = H @ P
    try:
        K = np.linalg.solve(inn.S, HP).T
    except np.linalg.LinAlgError as exc:
        raise FilterError("innovation covariance is not invertible") from exc
    mean = est.mean + K @ inn.nu
    if joseph:
        ikh = np.eye(6) - K @ H
        cov = ikh @ P @ ikh.T + K @ model.R @ K.T
    else:
        cov = P - K @ HP
    return est.replace(mean=mean, cov=symmetrize(cov))


def ekf_update_rf(
    est: StateEstimate, z: RfMeasurement, T: StateTransform, joseph: bool = False
) -> StateEstimate:
    """RF update; ``T`` is the ECI->ENU transform of the measuring site."""
    _check_aligned(est, z.timestamp)
    return ekf_update(est, z.z, rf_model(T, z.noise_cov), joseph)


def ekf_update_ir(
    est: StateEstimate, z: IrMeasurement, T: StateTransform, joseph: bool = False
) -> StateEstimate:
    """IR update; ``T`` is the ECI->BODY transform of the seeker."""
    _check_aligned(est, z.timestamp)
    return ekf_update(est, z.z, ir_model(T, z.noise_cov), joseph)


def ekf_update_sequential(
    est: StateEstimate,
    updates: list[tuple[np.ndarray, MeasurementModel]],
    relinearize: bool = True,
    joseph: bool = False,
) -> StateEstimate:
    """Block-sequential updates in order (RF first, then IR by convention).

    With ``relinearize=False`` every block is linearized about the prior mean,
    which makes the result identical to one augmented update.
    """
    prior = est.mean
    for z, model in updates:
        est = ekf_update(est, z, model, joseph, None if relinearize else prior)
    return est
