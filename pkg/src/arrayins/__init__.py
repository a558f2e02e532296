"""Inertial navigation with an accelerometer array on a Lie-group EKF."""

__version__ = "0.1.0"
