"""Wearable fall-risk pipeline: torso sway-covariance metrics, perturbation
detection, egocentric depth panoramas, and trajectory-prediction datasets."""

__version__ = "0.1.0"
