"""Egocentric depth panoramas from queued point clouds.

A panorama is a 180 x 360 spherical depth grid in the torso frame: each
pixel covers a 1 deg x 1 deg box, depths are capped at 10 m, and untouched
cells hold the 10.0 m sentinel. The rasterizer consumes a fixed-length FIFO
of start-frame point clouds, so geometry that left the sensor's field of
view persists behind the walker until its cloud is evicted.

Pixel convention (frozen in the file format): row 0 spans elevations
(+89 deg, +90 deg], col 0 spans azimuths [-180 deg, -179 deg), azimuth
measured counter-clockwise from +X (so +Y, the wearer's left, is +90 deg).
Cell conflicts resolve to the minimum depth (nearest surface wins).
"""

from __future__ import annotations

import math
import struct
from collections import deque
from dataclasses import dataclass, field

import numpy as np

from .core import (
    InvalidInputError,
    PointCloud,
    Pose,
    SchemaError,
    ShapeError,
    transform_to_frame,
)

PANO_ROWS = 180
PANO_COLS = 360
MAX_DEPTH_M = 10.0
DEFAULT_QUEUE_CAPACITY = 40  # 2 s of clouds at 20 Hz

_MAGIC = b"PANO"
_HEADER = struct.Struct("<4sHHII")  # magic, rows, cols, reserved, reserved


@dataclass(frozen=True)
class DepthPanorama:
    """180 x 360 float32 depth grid (meters) plus the pose it is seen from."""

    grid: np.ndarray
    frame_pose: Pose

    def __post_init__(self):
        grid = np.asarray(self.grid, dtype=np.float32)
        if grid.shape != (PANO_ROWS, PANO_COLS):
            raise InvalidInputError(
                f"panorama grid must be {PANO_ROWS}x{PANO_COLS}, got {grid.shape}")
        object.__setattr__(self, "grid", grid)


def project_point_to_pixel(p) -> tuple | None:
    """Map one torso-frame point to its (row, col, depth) pixel.

    Returns None for points at the origin or beyond the 10 m cap. Edge
    angles (azimuth exactly +180 deg, elevation -90 deg) clamp into the
    valid index range.
    """
    p = np.asarray(p, dtype=float)
    if p.shape != (3,) or not np.all(np.isfinite(p)):
        raise InvalidInputError(f"expected a finite 3-vector, got {p}")
    depth = float(np.linalg.norm(p))
    if depth == 0.0 or depth > MAX_DEPTH_M:
        return None
    azimuth = math.atan2(p[1], p[0])
    elevation = math.asin(max(-1.0, min(1.0, p[2] / depth)))
    col = min(max(int(math.floor(math.degrees(azimuth) + 180.0)), 0), PANO_COLS - 1)
    row = min(max(int(math.floor(90.0 - math.degrees(elevation))), 0), PANO_ROWS - 1)
    return row, col, depth


def project_points(points: np.ndarray):
    """Vectorized pixel projection of (n, 3) torso-frame points.

    Returns (rows, cols, depths) for the points that survive the depth cap;
    same convention as project_point_to_pixel.
    """
    pts = np.asarray(points, dtype=float)
    if pts.size == 0:
        empty = np.empty(0, dtype=np.int64)
        return empty, empty, np.empty(0)
    depths = np.linalg.norm(pts, axis=1)
    keep = (depths > 0.0) & (depths <= MAX_DEPTH_M)
    pts, depths = pts[keep], depths[keep]
    azimuth = np.degrees(np.arctan2(pts[:, 1], pts[:, 0]))
    elevation = np.degrees(np.arcsin(np.clip(pts[:, 2] / depths, -1.0, 1.0)))
    cols = np.clip(np.floor(azimuth + 180.0).astype(np.int64), 0, PANO_COLS - 1)
    rows = np.clip(np.floor(90.0 - elevation).astype(np.int64), 0, PANO_ROWS - 1)
    return rows, cols, depths


@dataclass
class CloudQueue:
    """Fixed-capacity FIFO of point clouds; eviction is strictly oldest-first."""

    capacity: int
    entries: deque = field(default_factory=deque)

    def __post_init__(self):
        if self.capacity < 0:
            raise InvalidInputError("queue capacity must be >= 0")
        self.entries = deque(self.entries, maxlen=self.capacity)

    def push(self, cloud: PointCloud) -> "CloudQueue":
        if self.capacity > 0:
            self.entries.append(cloud)
        return self

    def __len__(self) -> int:
        return len(self.entries)


def push_cloud(queue: CloudQueue, cloud: PointCloud) -> CloudQueue:
    """Append a cloud, evicting the oldest entry when over capacity."""
    return queue.push(cloud)


def build_panorama(queue: CloudQueue, torso: Pose) -> DepthPanorama:
    """Rasterize every queued cloud into a torso-frame depth panorama.

    Each cloud is re-expressed in the torso frame, projected to pixels, and
    written with a min-depth rule, so the result is independent of cloud
    order and bit-identical across runs on the same inputs.
    """
    grid = np.full((PANO_ROWS, PANO_COLS), MAX_DEPTH_M, dtype=np.float32)
    for cloud in queue.entries:
        local = transform_to_frame(cloud, torso)
        rows, cols, depths = project_points(local.points)
        np.minimum.at(grid, (rows, cols), depths.astype(np.float32))
    return DepthPanorama(grid=grid, frame_pose=torso)


def panorama_coverage(pano: DepthPanorama) -> float:
    """Fraction of cells carrying a real return (depth below the sentinel)."""
    return float(np.count_nonzero(pano.grid < MAX_DEPTH_M)) / (PANO_ROWS * PANO_COLS)


# ---------------------------------------------------------------------------
# File format: 16-byte header (magic "PANO", u16 rows, u16 cols, two u32
# reserved words) followed by rows*cols little-endian float32, row-major.
# ---------------------------------------------------------------------------

def write_panorama(path, pano: DepthPanorama) -> None:
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(_MAGIC, PANO_ROWS, PANO_COLS, 0, 0))
        fh.write(np.ascontiguousarray(pano.grid, dtype="<f4").tobytes())


def read_panorama(path, frame_pose: Pose | None = None) -> DepthPanorama:
    with open(path, "rb") as fh:
        header = fh.read(_HEADER.size)
        if len(header) != _HEADER.size:
            raise ShapeError(f"{path}: truncated panorama header")
        magic, rows, cols, _, _ = _HEADER.unpack(header)
        if magic != _MAGIC:
            raise SchemaError(f"{path}: bad magic {magic!r}")
        if (rows, cols) != (PANO_ROWS, PANO_COLS):
            raise ShapeError(f"{path}: unexpected grid {rows}x{cols}")
        payload = fh.read()
    expected = PANO_ROWS * PANO_COLS * 4
    if len(payload) != expected:
        raise ShapeError(f"{path}: expected {expected} payload bytes, got {len(payload)}")
    grid = np.frombuffer(payload, dtype="<f4").reshape(PANO_ROWS, PANO_COLS)
    return DepthPanorama(grid=grid.copy(), frame_pose=frame_pose or Pose.identity())


def export_pgm(path, pano: DepthPanorama) -> None:
    """8-bit PGM preview with depth scaled 0-10 m onto 0-255."""
    scaled = np.clip(np.rint(pano.grid / MAX_DEPTH_M * 255.0), 0, 255).astype(np.uint8)
    with open(path, "wb") as fh:
        fh.write(f"P5\n{PANO_COLS} {PANO_ROWS}\n255\n".encode("ascii"))
        fh.write(scaled.tobytes())
