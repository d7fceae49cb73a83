"""Torso sway-covariance ellipse metric.

Pipeline: project the torso frame's vertical unit axis onto the ground
plane (the start frame's z = 0 plane), collect the projected points into a
sliding window, fit a 2D Gaussian, and turn its covariance into the 95%
prediction ellipse. The ellipse area sigma_z and its backward-difference
rate delta_sigma_z are the per-tick outputs; the companion tilt-angle
series theta_z / delta_theta_z is the baseline metric used for comparison.

The window (default 50 ticks = 2.5 s) acts as a low-pass filter: a sudden
excursion is an outlier to the fitted Gaussian at first and inflates the
ellipse only as it accumulates in the window.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .core import (
    TICK_SECONDS,
    InsufficientDataError,
    InvalidCovarianceError,
    InvalidInputError,
    UnitQuaternion,
    quat_array_rotate,
    rotate_vector,
)

# chi-squared(2 dof) value with CDF 0.95; scales eigenvalues to the 95%
# prediction ellipse axes.
CHI2_95_2DOF = 5.991

DEFAULT_WINDOW = 50

_SYMMETRY_TOL = 1e-9
_EIGEN_CLAMP = -1e-12


@dataclass(frozen=True)
class GroundProjection:
    """Ground-plane shadow of the torso's vertical axis at one tick."""

    timestamp: float
    point: np.ndarray

    def __post_init__(self):
        pt = np.asarray(self.point, dtype=float)
        if pt.shape != (2,):
            raise InvalidInputError(f"projection point must be a 2-vector, got {pt.shape}")
        object.__setattr__(self, "point", pt)


@dataclass(frozen=True)
class SwayEllipse:
    """95% prediction ellipse of the fitted sway distribution.

    axes = (m1, m2) with m1 >= m2 >= 0 and m_i = sqrt(5.991 * lambda_i) for
    covariance eigenvalues lambda_1 >= lambda_2; area = pi * m1 * m2.
    """

    mean: np.ndarray
    cov: np.ndarray
    axes: tuple
    rotation: float
    area: float

    def mahalanobis_sq(self, points: np.ndarray) -> np.ndarray:
        """Squared Mahalanobis distance of (n, 2) points from the mean."""
        pts = np.atleast_2d(np.asarray(points, dtype=float)) - self.mean
        cov = self.cov + np.eye(2) * 1e-300  # guard exact singularity
        sol = np.linalg.solve(cov, pts.T)
        return np.einsum("ij,ji->i", pts, sol)

    def contains(self, points: np.ndarray) -> np.ndarray:
        """Boolean mask of points inside the 95% ellipse."""
        return self.mahalanobis_sq(points) <= CHI2_95_2DOF


@dataclass(frozen=True)
class SwaySeries:
    """Per-tick sway area and its backward-difference rate.

    Values start once the window is full, so the series is window_len - 1
    ticks shorter than its input stream. delta_sigma_z of the first emitted
    tick is 0 by convention.
    """

    timestamps: np.ndarray
    sigma_z: np.ndarray
    delta_sigma_z: np.ndarray
    window_len: int


@dataclass(frozen=True)
class TiltSeries:
    """Per-tick torso tilt from vertical and its backward-difference rate."""

    timestamps: np.ndarray
    theta_z: np.ndarray
    delta_theta_z: np.ndarray


def project_torso_vertical(orientation: UnitQuaternion) -> np.ndarray:
    """Project the torso-frame +Z axis onto the ground plane.

    Returns the (x, y) components of R(q) @ [0, 0, 1]; an upright torso
    projects to the origin and any pure yaw leaves the projection at zero.
    """
    return rotate_vector(orientation, (0.0, 0.0, 1.0))[:2]


def project_orientation_array(quats: np.ndarray) -> np.ndarray:
    """Vectorized ground projections of an (n, 4) quaternion array."""
    quats = np.asarray(quats, dtype=float)
    up = np.broadcast_to(np.array([0.0, 0.0, 1.0]), (quats.shape[0], 3))
    return quat_array_rotate(quats, up)[:, :2]


def fit_gaussian(points: Sequence[Sequence[float]] | np.ndarray):
    """Sample mean and unbiased (1/(n-1)) sample covariance of 2D points.

    Raises InsufficientDataError for fewer than 3 points. Identical points
    yield a zero covariance, which downstream code treats as a degenerate
    (zero-area) ellipse.
    """
    pts = np.asarray(points, dtype=float)
    if pts.ndim != 2 or pts.shape[1] != 2:
        raise InvalidInputError(f"expected (n, 2) points, got shape {pts.shape}")
    if pts.shape[0] < 3:
        raise InsufficientDataError(f"need at least 3 points, got {pts.shape[0]}")
    if not np.all(np.isfinite(pts)):
        raise InvalidInputError("points contain non-finite values")
    mean = pts.mean(axis=0)
    dev = pts - mean
    cov = dev.T @ dev / (pts.shape[0] - 1)
    return mean, cov


def ellipse_from_cov(mean: Sequence[float], cov: np.ndarray) -> SwayEllipse:
    """Build the 95% prediction ellipse from a fitted mean and covariance.

    Closed-form 2x2 eigen-decomposition of cov = [a, b; b, c]:
    lambda_{1,2} = (a + c)/2 +- sqrt(((a - c)/2)^2 + b^2), with the ellipse
    rotation atan2(lambda_1 - a, b). Eigenvalues in [-1e-12, 0) are clamped
    to zero; anything lower is rejected as indefinite.
    """
    mean = np.asarray(mean, dtype=float)
    cov = np.asarray(cov, dtype=float)
    if cov.shape != (2, 2):
        raise InvalidCovarianceError(f"covariance must be 2x2, got {cov.shape}")
    a, b, b2, c = cov[0, 0], cov[0, 1], cov[1, 0], cov[1, 1]
    scale = max(abs(a), abs(c), abs(b), 1.0)
    if abs(b - b2) > _SYMMETRY_TOL * scale:
        raise InvalidCovarianceError(f"covariance is asymmetric: {b} vs {b2}")
    half_tr = 0.5 * (a + c)
    disc = math.sqrt((0.5 * (a - c)) ** 2 + b * b)
    lam1, lam2 = half_tr + disc, half_tr - disc
    if lam2 < _EIGEN_CLAMP * scale:
        raise InvalidCovarianceError(f"covariance is indefinite (eigenvalue {lam2})")
    lam1, lam2 = max(lam1, 0.0), max(lam2, 0.0)
    m1 = math.sqrt(CHI2_95_2DOF * lam1)
    m2 = math.sqrt(CHI2_95_2DOF * lam2)
    rotation = math.atan2(lam1 - a, b)
    sym_cov = np.array([[a, 0.5 * (b + b2)], [0.5 * (b + b2), c]])
    return SwayEllipse(mean=mean, cov=sym_cov, axes=(m1, m2),
                       rotation=rotation, area=math.pi * m1 * m2)


def fit_sway_ellipse(points) -> SwayEllipse:
    """fit_gaussian followed by ellipse_from_cov."""
    mean, cov = fit_gaussian(points)
    return ellipse_from_cov(mean, cov)


def _window_sigma(points: np.ndarray, window_len: int) -> np.ndarray:
    """sigma_z for every full window of an (n, 2) point stream.

    Vectorized equivalent of fitting a Gaussian per window and taking
    pi * 5.991 * sqrt(det cov); the determinant form avoids the explicit
    eigen-decomposition. Cross-checked against the per-window path in the
    test suite.
    """
    win = sliding_window_view(points, window_len, axis=0)  # (m, 2, w)
    mean = win.mean(axis=-1)
    dev = win - mean[..., None]
    sxx = np.einsum("mw,mw->m", dev[:, 0, :], dev[:, 0, :])
    syy = np.einsum("mw,mw->m", dev[:, 1, :], dev[:, 1, :])
    sxy = np.einsum("mw,mw->m", dev[:, 0, :], dev[:, 1, :])
    det = (sxx * syy - sxy * sxy) / float(window_len - 1) ** 2
    return math.pi * CHI2_95_2DOF * np.sqrt(np.maximum(det, 0.0))


def sway_series(projections: Sequence[GroundProjection] | np.ndarray,
                window_len: int = DEFAULT_WINDOW,
                timestamps: np.ndarray | None = None) -> SwaySeries:
    """Sliding-window sway area over a tick-spaced projection stream.

    Accepts either GroundProjection objects or a raw (n, 2) array plus
    explicit timestamps. Emits nothing for the first window_len - 1 ticks
    (warm-up); the first emitted tick has delta_sigma_z = 0 and later ticks
    use the backward difference over TICK_SECONDS.
    """
    if window_len < 3:
        raise InvalidInputError("window_len must be >= 3")
    if isinstance(projections, np.ndarray):
        pts = np.asarray(projections, dtype=float)
        if timestamps is None:
            timestamps = np.arange(pts.shape[0]) * TICK_SECONDS
    else:
        pts = np.asarray([p.point for p in projections], dtype=float)
        timestamps = np.asarray([p.timestamp for p in projections], dtype=float)
    if pts.ndim != 2 or pts.shape[1] != 2:
        raise InvalidInputError(f"expected (n, 2) projections, got {pts.shape}")
    n = pts.shape[0]
    if n < window_len:
        raise InsufficientDataError(
            f"stream of {n} ticks is shorter than the window ({window_len})")
    sigma = _window_sigma(pts, window_len)
    delta = np.empty_like(sigma)
    delta[0] = 0.0
    delta[1:] = np.diff(sigma) / TICK_SECONDS
    return SwaySeries(
        timestamps=np.asarray(timestamps, dtype=float)[window_len - 1:],
        sigma_z=sigma,
        delta_sigma_z=delta,
        window_len=window_len,
    )


def torso_tilt_series(quats: np.ndarray,
                      timestamps: np.ndarray | None = None) -> TiltSeries:
    """Tilt of the torso vertical from the ground normal, per tick.

    theta_z = arccos of the z component of the rotated vertical axis
    (clamped to [-1, 1]); delta_theta_z is the backward difference over
    TICK_SECONDS with the first tick at 0.
    """
    quats = np.asarray(quats, dtype=float)
    if quats.ndim != 2 or quats.shape[1] != 4:
        raise InvalidInputError(f"expected (n, 4) quaternions, got {quats.shape}")
    if timestamps is None:
        timestamps = np.arange(quats.shape[0]) * TICK_SECONDS
    up = np.broadcast_to(np.array([0.0, 0.0, 1.0]), (quats.shape[0], 3))
    z_comp = np.clip(quat_array_rotate(quats, up)[:, 2], -1.0, 1.0)
    theta = np.arccos(z_comp)
    delta = np.empty_like(theta)
    delta[0] = 0.0
    delta[1:] = np.diff(theta) / TICK_SECONDS
    return TiltSeries(np.asarray(timestamps, dtype=float), theta, delta)
