"""Gaussian state estimates, process noise and small matrix helpers."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..frames import ECI, State6


class FilterError(ArithmeticError):
    """Numerical failure inside a filter step (non-invertible innovation, failed Cholesky)."""


def symmetrize(m: np.ndarray) -> np.ndarray:
    return 0.5 * (m + m.T)


@dataclass(frozen=True, eq=False)
class StateEstimate:
    """ECI mean six-vector with its 6x6 covariance at ``epoch`` seconds."""

    mean: np.ndarray
    cov: np.ndarray
    epoch: float = 0.0

    def __post_init__(self):
        mean = np.array(self.mean, dtype=float).reshape(6)
        cov = np.array(self.cov, dtype=float)
        if cov.shape != (6, 6):
            raise ValueError("covariance must be 6x6")
        mean.setflags(write=False)
        cov.setflags(write=False)
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "cov", cov)

    @property
    def state(self) -> State6:
        return State6.from_vector(self.mean, ECI, self.epoch)

    def replace(self, mean=None, cov=None, epoch=None) -> "StateEstimate":
        return StateEstimate(
            self.mean if mean is None else mean,
            self.cov if cov is None else cov,
            self.epoch if epoch is None else epoch,
        )


@dataclass(frozen=True)
class ProcessNoise:
    """White acceleration noise: ``Q = diag(0, 0, 0, q, q, q) * dt``."""

    q: float = 1e-4  # m^2/s^3

    def __post_init__(self):
        if self.q < 0:
            raise ValueError("process noise intensity must be non-negative")

    def matrix(self, dt: float) -> np.ndarray:
        return np.diag([0.0, 0.0, 0.0, self.q, self.q, self.q]) * dt


def process_matrix(q: ProcessNoise | np.ndarray | None, dt: float) -> np.ndarray:
    """Resolve a per-step Q; raw arrays are taken as the whole-step matrix."""
    if q is None:
        return np.zeros((6, 6))
    if isinstance(q, ProcessNoise):
        return q.matrix(dt)
    q = np.asarray(q, dtype=float)
    if q.shape != (6, 6):
        raise ValueError("process noise matrix must be 6x6")
    return q


def nees(est: StateEstimate, truth: np.ndarray) -> float:
    """Normalized estimation error squared against a true ECI six-state."""
    err = np.asarray(truth, dtype=float) - est.mean
    return float(err @ np.linalg.solve(est.cov, err))
