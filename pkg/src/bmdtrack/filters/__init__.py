"""EKF and UKF estimators over Kepler dynamics with RF and IR updates."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..dynamics import DEFAULT_DT_MAX, EARTH, INTEGRATORS, PhysicalConstants
from .ekf import (
    Innovation,
    ekf_innovation,
    ekf_time_update,
    ekf_update,
    ekf_update_ir,
    ekf_update_rf,
    ekf_update_sequential,
    flow_with_transition,
)
from .estimate import FilterError, ProcessNoise, StateEstimate, nees, process_matrix, symmetrize
from .models import (
    MeasurementModel,
    augmented_model,
    identity_model,
    ir_model,
    linear_model,
    rf_model,
)
from .ukf import (
    ZETA_MODES,
    SigmaSet,
    UkfParams,
    sigma_points,
    ukf_innovation,
    ukf_predicted_observation,
    ukf_time_update,
    ukf_update,
    ukf_update_ir,
    ukf_update_rf,
)


@dataclass
class ExtendedKalmanFilter:
    constants: PhysicalConstants = EARTH
    integrator: str = "euler"
    dt_max: float = DEFAULT_DT_MAX
    process_noise: ProcessNoise = field(default_factory=ProcessNoise)
    joseph: bool = False

    def __post_init__(self):
        if self.integrator not in INTEGRATORS:
            raise ValueError(f"unknown integrator {self.integrator!r}")

    def predict(self, est: StateEstimate, t: float) -> StateEstimate:
        return ekf_time_update(
            est, t - est.epoch, self.process_noise, self.integrator, self.constants, self.dt_max
        )

    def innovation(self, est: StateEstimate, z: np.ndarray, model: MeasurementModel) -> Innovation:
        return ekf_innovation(est, z, model)

    def update(self, est: StateEstimate, z: np.ndarray, model: MeasurementModel) -> StateEstimate:
        return ekf_update(est, z, model, self.joseph)


@dataclass
class UnscentedKalmanFilter:
    constants: PhysicalConstants = EARTH
    integrator: str = "euler"
    dt_max: float = DEFAULT_DT_MAX
    process_noise: ProcessNoise = field(default_factory=ProcessNoise)
    params: UkfParams = field(default_factory=UkfParams)
    zeta_mode: str = "standard"

    def __post_init__(self):
        if self.integrator not in INTEGRATORS:
            raise ValueError(f"unknown integrator {self.integrator!r}")
        if self.zeta_mode not in ZETA_MODES:
            raise ValueError(f"unknown zeta mode {self.zeta_mode!r}")

    def predict(self, est: StateEstimate, t: float) -> StateEstimate:
        return ukf_time_update(
            est, t - est.epoch, self.process_noise, self.params, self.integrator, self.constants, self.dt_max
        )

    def innovation(self, est: StateEstimate, z: np.ndarray, model: MeasurementModel) -> Innovation:
        return ukf_innovation(est, z, model, self.params, None, self.zeta_mode)

    def update(self, est: StateEstimate, z: np.ndarray, model: MeasurementModel) -> StateEstimate:
        return ukf_update(est, z, model, self.params, None, self.zeta_mode)


def make_filter(kind: str = "ekf", **kwargs):
    if kind == "ekf":
        kwargs.pop("params", None)
        kwargs.pop("zeta_mode", None)
        return ExtendedKalmanFilter(**kwargs)
    if kind == "ukf":
        kwargs.pop("joseph", None)
        return UnscentedKalmanFilter(**kwargs)
    raise ValueError(f"unknown filter {kind!r}")


__all__ = [
    "ExtendedKalmanFilter",
    "FilterError",
    "Innovation",
    "MeasurementModel",
    "ProcessNoise",
    "SigmaSet",
    "StateEstimate",
    "UkfParams",
    "UnscentedKalmanFilter",
    "augmented_model",
    "ekf_innovation",
    "ekf_time_update",
    "ekf_update",
    "ekf_update_ir",
    "ekf_update_rf",
    "ekf_update_sequential",
    "flow_with_transition",
    "identity_model",
    "ir_model",
    "linear_model",
    "make_filter",
    "nees",
    "process_matrix",
    "rf_model",
    "sigma_points",
    "symmetrize",
    "ukf_innovation",
    "ukf_predicted_observation",
    "ukf_time_update",
    "ukf_update",
    "ukf_update_ir",
    "ukf_update_rf",
]
