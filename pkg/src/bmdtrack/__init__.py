"""Ballistic target tracking: Kepler dynamics, RF/IR measurement models,
EKF/UKF estimation, auction-based association and track fusion."""

__version__ = "0.1.0"
