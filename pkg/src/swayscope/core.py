"""Shared domain types, quaternion/frame math, and the canonical 20 Hz time base.

Frame conventions:
    - Start frame: +X forward, +Y to the left, +Z opposite gravity. All
      positions and point clouds are expressed here unless noted.
    - Torso orientation quaternions rotate torso-frame vectors into the
      start frame: v_start = R(q) * v_torso.
    - Quaternions are stored [w, x, y, z], unit norm, canonical sign w >= 0
      so that serialized streams are deterministic under the double cover.

Time base:
    Timestamps are float seconds since trajectory start. The canonical tick
    spacing after resampling is TICK_SECONDS = 0.05 s (20 Hz).

All types are immutable values and all operations are pure functions, so
they are safe to use from any number of workers without shared state.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

# Canonical tick spacing of the published state/panorama streams.
TICK_SECONDS = 0.05
TICK_RATE_HZ = 20.0

# Number of numeric values in a flattened state vector (timestamp excluded).
STATE_SIZE = 24

# Channel names of the flattened state vector, in serialization order.
# 3 position + 4 quaternion + 3 linear velocity + 3 angular velocity
# + sway area + step frequency + 9 joint angles = 24.
STATE_CHANNELS = (
    "pos_x", "pos_y", "pos_z",
    "quat_w", "quat_x", "quat_y", "quat_z",
    "linvel_x", "linvel_y", "linvel_z",
    "angvel_x", "angvel_y", "angvel_z",
    "sway_area",
    "step_frequency",
    "hip_flexion_l", "hip_flexion_r",
    "hip_abduction_l", "hip_abduction_r",
    "hip_rotation_l", "hip_rotation_r",
    "knee_flexion_l", "knee_flexion_r",
    "thigh_roll",
)

_UNIT_NORM_TOL = 1e-9


class SwayScopeError(Exception):
    """Base class for all errors raised by this package."""


class InvalidInputError(SwayScopeError, ValueError):
    """An argument violates a documented precondition."""


class InvalidQuaternionError(InvalidInputError):
    """Quaternion norm differs from 1 beyond tolerance."""


class DataError(SwayScopeError):
    """Base class for data/schema problems (CLI exit code 3)."""


class InsufficientDataError(DataError):
    """Too few samples to perform the requested computation."""


class InvalidCovarianceError(DataError):
    """Covariance matrix is asymmetric or indefinite beyond tolerance."""


class InvalidScheduleError(DataError):
    """Perturbation schedule entries overlap."""


class ResampleGapError(DataError):
    """A raw stream has a gap larger than the allowed maximum.

    Attributes:
        gap_start, gap_end: timestamps (s) bounding the offending interval.
    """

    def __init__(self, gap_start: float, gap_end: float):
        self.gap_start = float(gap_start)
        self.gap_end = float(gap_end)
        super().__init__(
            f"stream gap of {gap_end - gap_start:.3f} s in [{gap_start:.3f}, {gap_end:.3f}]"
        )


class SchemaError(DataError):
    """A serialized artifact does not match the expected schema version/keys."""


class ShapeError(DataError):
    """A serialized payload has the wrong shape or byte count."""


class PayloadError(DataError):
    """A serialized payload contains non-finite values."""


@dataclass(frozen=True)
class UnitQuaternion:
    """Unit quaternion [w, x, y, z] with canonical sign w >= 0.

    Construction validates the unit norm to 1e-9 and flips the sign when
    w < 0 so q and -q map to the same stored value. Use :meth:`normalized`
    for inputs that are only approximately unit.
    """

    w: float
    x: float
    y: float
    z: float

    def __post_init__(self):
        n2 = self.w * self.w + self.x * self.x + self.y * self.y + self.z * self.z
        if not math.isfinite(n2) or abs(math.sqrt(n2) - 1.0) > _UNIT_NORM_TOL:
            raise InvalidQuaternionError(
                f"quaternion norm {math.sqrt(n2) if math.isfinite(n2) else n2:.12g} "
                "differs from 1 beyond 1e-9"
            )
        if self.w < 0.0:
            object.__setattr__(self, "w", -self.w)
            object.__setattr__(self, "x", -self.x)
            object.__setattr__(self, "y", -self.y)
            object.__setattr__(self, "z", -self.z)

    @classmethod
    def identity(cls) -> "UnitQuaternion":
        return cls(1.0, 0.0, 0.0, 0.0)

    @classmethod
    def normalized(cls, w: float, x: float, y: float, z: float) -> "UnitQuaternion":
        """Build a unit quaternion from arbitrary non-zero components."""
        n = math.sqrt(w * w + x * x + y * y + z * z)
        if not math.isfinite(n) or n < 1e-12:
            raise InvalidQuaternionError(f"cannot normalize quaternion with norm {n}")
        return cls(w / n, x / n, y / n, z / n)

    @classmethod
    def from_axis_angle(cls, axis: Sequence[float], angle_rad: float) -> "UnitQuaternion":
        ax = np.asarray(axis, dtype=float)
        n = float(np.linalg.norm(ax))
        if n < 1e-12:
            raise InvalidInputError("rotation axis must be non-zero")
        half = 0.5 * angle_rad
        s = math.sin(half) / n
        return cls.normalized(math.cos(half), ax[0] * s, ax[1] * s, ax[2] * s)

    @classmethod
    def from_euler_zyx(cls, yaw: float, pitch: float, roll: float) -> "UnitQuaternion":
        """Intrinsic Z-Y-X (yaw, then pitch, then roll) to quaternion."""
        cy, sy = math.cos(0.5 * yaw), math.sin(0.5 * yaw)
        cp, sp = math.cos(0.5 * pitch), math.sin(0.5 * pitch)
        cr, sr = math.cos(0.5 * roll), math.sin(0.5 * roll)
        return cls.normalized(
            cy * cp * cr + sy * sp * sr,
            cy * cp * sr - sy * sp * cr,
            cy * sp * cr + sy * cp * sr,
            sy * cp * cr - cy * sp * sr,
        )

    def conjugate(self) -> "UnitQuaternion":
        return UnitQuaternion(self.w, -self.x, -self.y, -self.z)

    def multiply(self, other: "UnitQuaternion") -> "UnitQuaternion":
        """Hamilton product self * other (apply other first, then self)."""
        w1, x1, y1, z1 = self.w, self.x, self.y, self.z
        w2, x2, y2, z2 = other.w, other.x, other.y, other.z
        return UnitQuaternion.normalized(
            w1 * w2 - x1 * x2 - y1 * y2 - z1 * z2,
            w1 * x2 + x1 * w2 + y1 * z2 - z1 * y2,
            w1 * y2 - x1 * z2 + y1 * w2 + z1 * x2,
            w1 * z2 + x1 * y2 - y1 * x2 + z1 * w2,
        )

    def as_array(self) -> np.ndarray:
        return np.array([self.w, self.x, self.y, self.z], dtype=float)

    def rotation_matrix(self) -> np.ndarray:
        w, x, y, z = self.w, self.x, self.y, self.z
        return np.array([
            [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
            [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
            [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)],
        ])


def rotate_vector(q: UnitQuaternion, v: Sequence[float]) -> np.ndarray:
    """Rotate a 3-vector by a unit quaternion: returns R(q) @ v.

    Preserves the vector norm. Raises InvalidQuaternionError for non-unit
    quaternions (enforced by the UnitQuaternion type itself).
    """
    if not isinstance(q, UnitQuaternion):
        raise InvalidQuaternionError("rotate_vector requires a UnitQuaternion")
    vec = np.asarray(v, dtype=float)
    if vec.shape != (3,):
        raise InvalidInputError(f"expected a 3-vector, got shape {vec.shape}")
    return q.rotation_matrix() @ vec


@dataclass(frozen=True)
class Pose:
    """Timestamped torso pose in the start frame."""

    timestamp: float
    position: np.ndarray
    orientation: UnitQuaternion

    def __post_init__(self):
        pos = np.asarray(self.position, dtype=float)
        if pos.shape != (3,):
            raise InvalidInputError(f"position must be a 3-vector, got {pos.shape}")
        object.__setattr__(self, "position", pos)

    @classmethod
    def identity(cls, timestamp: float = 0.0) -> "Pose":
        return cls(timestamp, np.zeros(3), UnitQuaternion.identity())


@dataclass(frozen=True)
class StateVector:
    """Per-tick user state: 24 numeric values plus a timestamp.

    The flattened layout (see STATE_CHANNELS) is position (3), orientation
    quaternion (4), linear velocity (3, m/s), angular velocity (3, rad/s),
    sway ellipse area (1), step frequency (1, Hz), joint angles (9, rad).
    """

    timestamp: float
    position: np.ndarray
    orientation: UnitQuaternion
    linear_velocity: np.ndarray
    angular_velocity: np.ndarray
    sway_area: float
    step_frequency: float
    joint_angles: np.ndarray

    def __post_init__(self):
        for name, size in (("position", 3), ("linear_velocity", 3),
                           ("angular_velocity", 3), ("joint_angles", 9)):
            arr = np.asarray(getattr(self, name), dtype=float)
            if arr.shape != (size,):
                raise InvalidInputError(f"{name} must have shape ({size},), got {arr.shape}")
            object.__setattr__(self, name, arr)
        if self.sway_area < 0:
            raise InvalidInputError("sway_area must be >= 0")
        if self.step_frequency < 0:
            raise InvalidInputError("step_frequency must be >= 0")

    def to_array(self) -> np.ndarray:
        """Flatten to the 24-value layout of STATE_CHANNELS."""
        return np.concatenate([
            self.position,
            self.orientation.as_array(),
            self.linear_velocity,
            self.angular_velocity,
            [self.sway_area, self.step_frequency],
            self.joint_angles,
        ])

    @classmethod
    def from_array(cls, timestamp: float, values: Sequence[float]) -> "StateVector":
        arr = np.asarray(values, dtype=float)
        if arr.shape != (STATE_SIZE,):
            raise InvalidInputError(f"state vector must have {STATE_SIZE} values, got {arr.shape}")
        return cls(
            timestamp=timestamp,
            position=arr[0:3],
            orientation=UnitQuaternion.normalized(*arr[3:7]),
            linear_velocity=arr[7:10],
            angular_velocity=arr[10:13],
            sway_area=float(max(arr[13], 0.0)),
            step_frequency=float(max(arr[14], 0.0)),
            joint_angles=arr[15:24],
        )


@dataclass(frozen=True)
class PointCloud:
    """Timestamped set of 3D points in the start frame.

    source_pose is the torso pose at capture time; it travels with the cloud
    so rasterization can reason about the emitting sensor. Clouds may be
    empty.
    """

    timestamp: float
    points: np.ndarray
    source_pose: Pose = field(default_factory=Pose.identity)

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=float)
        if pts.size == 0:
            pts = pts.reshape(0, 3)
        if pts.ndim != 2 or pts.shape[1] != 3:
            raise InvalidInputError(f"points must have shape (n, 3), got {pts.shape}")
        if not np.all(np.isfinite(pts)):
            raise InvalidInputError("point cloud contains non-finite coordinates")
        object.__setattr__(self, "points", pts)

    def __len__(self) -> int:
        return self.points.shape[0]


def transform_to_frame(cloud: PointCloud, target: Pose) -> PointCloud:
    """Express a start-frame cloud in the frame of the target pose.

    Every point p becomes R(q)^T (p - t) for the target's orientation q and
    position t. The source_pose is preserved unchanged.
    """
    rot = target.orientation.rotation_matrix()
    pts = (cloud.points - target.position) @ rot  # (p - t) @ R == R^T (p - t)
    return PointCloud(cloud.timestamp, pts, cloud.source_pose)


# ---------------------------------------------------------------------------
# Vectorized quaternion helpers (arrays of shape (n, 4), [w, x, y, z] rows)
# ---------------------------------------------------------------------------

def quat_array_normalize(q: np.ndarray) -> np.ndarray:
    """Normalize rows and canonicalize sign (w >= 0) of an (n, 4) array."""
    q = np.asarray(q, dtype=float)
    norms = np.linalg.norm(q, axis=-1, keepdims=True)
    if np.any(norms < 1e-12):
        raise InvalidQuaternionError("cannot normalize near-zero quaternion")
    out = q / norms
    flip = out[..., 0] < 0
    out[flip] = -out[flip]
    return out

def quat_array_from_euler_zyx(yaw: np.ndarray, pitch: np.ndarray, roll: np.ndarray) -> np.ndarray:
    """Vectorized intrinsic Z-Y-X Euler angles to (n, 4) quaternions."""
    cy, sy = np.cos(0.5 * yaw), np.sin(0.5 * yaw)
    cp, sp = np.cos(0.5 * pitch), np.sin(0.5 * pitch)
    cr, sr = np.cos(0.5 * roll), np.sin(0.5 * roll)
    q = np.stack([
        cy * cp * cr + sy * sp * sr,
        cy * cp * sr - sy * sp * cr,
        cy * sp * cr + sy * cp * sr,
        sy * cp * cr - cy * sp * sr,
    ], axis=-1)
    return quat_array_normalize(q)

def quat_array_multiply(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Row-wise Hamilton product of (n, 4) quaternion arrays."""
    w1, x1, y1, z1 = a[..., 0], a[..., 1], a[..., 2], a[..., 3]
    w2, x2, y2, z2 = b[..., 0], b[..., 1], b[..., 2], b[..., 3]
    return np.stack([
        w1 * w2 - x1 * x2 - y1 * y2 - z1 * z2,
        w1 * x2 + x1 * w2 + y1 * z2 - z1 * y2,
        w1 * y2 - x1 * z2 + y1 * w2 + z1 * x2,
        w1 * z2 + x1 * y2 - y1 * x2 + z1 * w2,
    ], axis=-1)

def quat_array_conjugate(q: np.ndarray) -> np.ndarray:
    out = np.array(q, dtype=float, copy=True)
    out[..., 1:] = -out[..., 1:]
    return out

def quat_array_rotate(q: np.ndarray, v: np.ndarray) -> np.ndarray:
    """Rotate (n, 3) vectors by (n, 4) quaternions, row by row."""
    qv = q[..., 1:]
    qw = q[..., 0:1]
    t = 2.0 * np.cross(qv, v)
    return v + qw * t + np.cross(qv, t)

def quat_array_to_rotvec(q: np.ndarray) -> np.ndarray:
    """Rotation vectors (axis * angle) of (n, 4) quaternions."""
    q = quat_array_normalize(q)
    sin_half = np.linalg.norm(q[..., 1:], axis=-1)
    angle = 2.0 * np.arctan2(sin_half, q[..., 0])
    # sinc-safe scale: angle / sin(angle/2), -> 2 as angle -> 0
    scale = np.where(sin_half > 1e-12, angle / np.maximum(sin_half, 1e-300), 2.0)
    return q[..., 1:] * scale[..., None]


def central_linear_velocity(positions: np.ndarray, dt: float = TICK_SECONDS) -> np.ndarray:
    """Central-difference velocities of an (n, 3) position series.

    Endpoints fall back to one-sided differences.
    """
    positions = np.asarray(positions, dtype=float)
    n = positions.shape[0]
    vel = np.zeros_like(positions)
    if n >= 3:
        vel[1:-1] = (positions[2:] - positions[:-2]) / (2.0 * dt)
    if n >= 2:
        vel[0] = (positions[1] - positions[0]) / dt
        vel[-1] = (positions[-1] - positions[-2]) / dt
    return vel


def central_angular_velocity(quats: np.ndarray, dt: float = TICK_SECONDS) -> np.ndarray:
    """World-frame angular velocity of an (n, 4) quaternion series.

    omega_k = rotvec(q_{k+1} * conj(q_{k-1})) / (2 dt), with one-sided
    differences at the endpoints.
    """
    quats = np.asarray(quats, dtype=float)
    n = quats.shape[0]
    omega = np.zeros((n, 3))
    if n >= 3:
        rel = quat_array_multiply(quats[2:], quat_array_conjugate(quats[:-2]))
        omega[1:-1] = quat_array_to_rotvec(rel) / (2.0 * dt)
    if n >= 2:
        rel0 = quat_array_multiply(quats[1:2], quat_array_conjugate(quats[0:1]))
        omega[0] = quat_array_to_rotvec(rel0)[0] / dt
        reln = quat_array_multiply(quats[-1:], quat_array_conjugate(quats[-2:-1]))
        omega[-1] = quat_array_to_rotvec(reln)[0] / dt
    return omega
