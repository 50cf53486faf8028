"""Measurement models expressed directly on the ECI state.

A model bundles a vectorized observation function, its ECI Jacobian, the noise
covariance and which components are angles (wrapped on subtraction).  The RF
and IR models chain the sensor-frame Jacobian through the affine frame
transform, so the gain equations operate in ECI.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy.linalg import block_diag

from ..frames import StateTransform
from ..sensors import h_ir, h_ir_jacobian, h_rf, h_rf_jacobian, wrap_angle


@dataclass(frozen=True, eq=False)
class MeasurementModel:
    h: Callable[[np.ndarray], np.ndarray]
    jacobian: Callable[[np.ndarray], np.ndarray]
    R: np.ndarray
    angle_idx: tuple[int, ...] = ()

    @property
    def dim(self) -> int:
        return self.R.shape[0]

    def residual(self, z: np.ndarray, zhat: np.ndarray) -> np.ndarray:
        """``z - zhat`` with angle components wrapped to (-pi, pi]; broadcasts."""
        d = np.array(z, dtype=float) - np.asarray(zhat, dtype=float)
        if self.angle_idx:
            idx = list(self.angle_idx)
            d[..., idx] = wrap_angle(d[..., idx])
        return d


def rf_model(T: StateTransform, R: np.ndarray) -> MeasurementModel:
    """RF model for a site whose ECI->ENU transform at scan time is ``T``."""

    def h(x):
        return h_rf(T.apply(x)[..., :3])

    def jac(x):
        return h_rf_jacobian(T.apply(x)[:3]) @ T.matrix

    return MeasurementModel(h, jac, np.asarray(R, dtype=float), (1,))


def ir_model(T: StateTransform, R: np.ndarray) -> MeasurementModel:
    """IR model for a seeker whose ECI->BODY transform at scan time is ``T``."""

    def h(x):
        return h_ir(T.apply(x)[..., :3])

    def jac(x):
        return h_ir_jacobian(T.apply(x)[:3]) @ T.matrix

    return MeasurementModel(h, jac, np.asarray(R, dtype=float), (0,))


def linear_model(H: np.ndarray, R: np.ndarray) -> MeasurementModel:
    H = np.asarray(H, dtype=float)
    return MeasurementModel(lambda x: np.asarray(x) @ H.T, lambda x: H, np.asarray(R, dtype=float))


def identity_model(R: np.ndarray) -> MeasurementModel:
    """The full state observed directly (remote track as a measurement)."""
    return linear_model(np.eye(6), R)


def augmented_model(*models: MeasurementModel) -> MeasurementModel:
    """Stack several models into one joint output with block-diagonal noise."""

    def h(x):
        return np.concatenate([m.h(x) for m in models], axis=-1)

    def jac(x):
        return np.vstack([m.jacobian(x) for m in models])

    angles, offset = [], 0
    for m in models:
        angles.extend(offset + i for i in m.angle_idx)
        offset += m.dim
    return MeasurementModel(h, jac, block_diag(*[m.R for m in models]), tuple(angles))
