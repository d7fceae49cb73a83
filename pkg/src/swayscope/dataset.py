"""Stream resampling, training windows, the curvature filter, and every file
format the pipeline reads or writes.

Formats owned here:
  - trial directory: states.csv, truth.json, meta.json, and one .npy file
    per cloud-stream array (plain .npy keeps re-runs byte-identical).
  - states CSV: time_s plus the 24 named state channels, one row per tick.
  - exchange directory (the primary <-> predictor contract): manifest.json,
    states.bin (little-endian f32, [window, tick, 24]) and panos.bin
    (f32, [window, tick, 180, 360]). Training windows carry all 200 ticks
    per window; prediction sets mirror the layout for the 50 label ticks.

Windows are 200 contiguous ticks (10 s) split 150 input / 50 label.
"""

from __future__ import annotations

import csv
import json
import math
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .core import (
    STATE_CHANNELS,
    STATE_SIZE,
    TICK_SECONDS,
    InsufficientDataError,
    InvalidInputError,
    PayloadError,
    PointCloud,
    Pose,
    ResampleGapError,
    SchemaError,
    ShapeError,
    StateVector,
    UnitQuaternion,
    central_angular_velocity,
    central_linear_velocity,
    quat_array_normalize,
)
from .panorama import (
    DEFAULT_QUEUE_CAPACITY,
    PANO_COLS,
    PANO_ROWS,
    CloudQueue,
    DepthPanorama,
    build_panorama,
)
from .simgait import PerturbationSpec, SimTrial

SCHEMA_VERSION = 1
WINDOW_TICKS = 200
INPUT_TICKS = 150
LABEL_TICKS = 50
DEFAULT_STRIDE = 20
MAX_RESAMPLE_GAP_S = 0.25
CURVATURE_RADIUS_LIMIT_M = 2.0

SCENARIOS = ("indoor", "outdoor_cluttered", "outdoor_free", "treadmill")


@dataclass(frozen=True)
class Trajectory:
    """Aligned state and panorama series on the exact 0.05 s grid."""

    id: str
    scenario: str
    states: list
    panoramas: list

    def __post_init__(self):
        if self.scenario not in SCENARIOS:
            raise InvalidInputError(f"unknown scenario {self.scenario!r}")
        if len(self.states) != len(self.panoramas):
            raise InvalidInputError(
                f"{len(self.states)} states vs {len(self.panoramas)} panoramas")
        times = np.array([s.timestamp for s in self.states])
        if times.size >= 2:
            if not np.allclose(np.diff(times), TICK_SECONDS, atol=1e-9):
                raise InvalidInputError("states are not on the 0.05 s grid")

    def __len__(self) -> int:
        return len(self.states)

    def state_array(self) -> np.ndarray:
        return np.stack([s.to_array() for s in self.states])

    def pano_array(self) -> np.ndarray:
        return np.stack([p.grid for p in self.panoramas])

    def timestamps(self) -> np.ndarray:
        return np.array([s.timestamp for s in self.states])


@dataclass(frozen=True)
class SequenceWindow:
    """One 200-tick training sample: 150 input ticks, 50 label ticks."""

    source_id: str
    scenario: str
    start_tick: int
    timestamps: np.ndarray
    states: np.ndarray      # (200, 24)
    panoramas: np.ndarray   # (200, 180, 360) float32

    def __post_init__(self):
        if self.states.shape != (WINDOW_TICKS, STATE_SIZE):
            raise ShapeError(f"window states shape {self.states.shape}")
        if self.panoramas.shape != (WINDOW_TICKS, PANO_ROWS, PANO_COLS):
            raise ShapeError(f"window panorama shape {self.panoramas.shape}")

    @property
    def input_states(self) -> np.ndarray:
        return self.states[:INPUT_TICKS]

    @property
    def label_states(self) -> np.ndarray:
        return self.states[INPUT_TICKS:]

    @property
    def input_panoramas(self) -> np.ndarray:
        return self.panoramas[:INPUT_TICKS]

    @property
    def label_panoramas(self) -> np.ndarray:
        return self.panoramas[INPUT_TICKS:]


@dataclass(frozen=True)
class ResampledStream:
    timestamps: np.ndarray
    positions: np.ndarray
    quaternions: np.ndarray
    linear_velocity: np.ndarray
    angular_velocity: np.ndarray
    scalars: dict


def resample_20hz(timestamps: np.ndarray, positions: np.ndarray,
                  quaternions: np.ndarray,
                  scalars: dict | None = None) -> ResampledStream:
    """Zero-order-hold resampling of an irregular pose stream onto the grid.

    The grid runs from the first raw timestamp in steps of 0.05 s up to the
    last raw timestamp. Each grid tick takes the latest raw sample at or
    before it (quaternions are re-normalized); velocities are recomputed on
    the grid by central differences. A raw gap above 0.25 s raises
    ResampleGapError naming the interval.
    """
    t = np.asarray(timestamps, dtype=float)
    if t.ndim != 1 or t.size < 2:
        raise InsufficientDataError("need at least 2 raw samples")
    if np.any(np.diff(t) < 0):
        raise InvalidInputError("raw timestamps must be monotone non-decreasing")
    gaps = np.diff(t)
    bad = np.flatnonzero(gaps > MAX_RESAMPLE_GAP_S + 1e-12)
    if bad.size:
        raise ResampleGapError(t[bad[0]], t[bad[0] + 1])
    positions = np.asarray(positions, dtype=float)
    quaternions = np.asarray(quaternions, dtype=float)
    n_ticks = int(math.floor((t[-1] - t[0]) / TICK_SECONDS + 1e-9)) + 1
    grid = t[0] + np.arange(n_ticks) * TICK_SECONDS
    idx = np.searchsorted(t, grid + 1e-12, side="right") - 1
    pos_g = positions[idx]
    quat_g = quat_array_normalize(quaternions[idx])
    scal_g = {name: np.asarray(vals, dtype=float)[idx]
              for name, vals in (scalars or {}).items()}
    return ResampledStream(
        timestamps=grid,
        positions=pos_g,
        quaternions=quat_g,
        linear_velocity=central_linear_velocity(pos_g),
        angular_velocity=central_angular_velocity(quat_g),
        scalars=scal_g,
    )


def window_sequences(traj: Trajectory, stride: int = DEFAULT_STRIDE) -> list:
    """Cut a trajectory into 200-tick windows at the given stride.

    Returns an empty list (not an error) for trajectories shorter than one
    window; window k starts at tick k * stride.
    """
    if stride < 1:
        raise InvalidInputError("stride must be >= 1")
    n = len(traj)
    if n < WINDOW_TICKS:
        return []
    states = traj.state_array()
    panos = traj.pano_array()
    times = traj.timestamps()
    windows = []
    for start in range(0, n - WINDOW_TICKS + 1, stride):
        windows.append(SequenceWindow(
            source_id=traj.id,
            scenario=traj.scenario,
            start_tick=start,
            timestamps=times[start:start + WINDOW_TICKS],
            states=states[start:start + WINDOW_TICKS],
            panoramas=panos[start:start + WINDOW_TICKS],
        ))
    return windows


def min_turning_radius(positions: np.ndarray, min_speed: float = 0.1) -> float:
    """Minimum turning radius of a 2D path sampled at the 0.05 s grid.

    The path is smoothed with a 1 s (21-tap) centered moving average, then
    curvature kappa = |x'y'' - y'x''| / (x'^2 + y'^2)^(3/2) is evaluated by
    finite differences. Ticks slower than min_speed are skipped (standing
    in place is not turning). Straight paths (max kappa < 1e-6) return inf.
    """
    pts = np.asarray(positions, dtype=float)
    if pts.ndim != 2 or pts.shape[1] != 2:
        raise InvalidInputError(f"expected (n, 2) positions, got {pts.shape}")
    taps = 21
    if pts.shape[0] < taps + 2:
        raise InsufficientDataError(
            f"need at least {taps + 2} points for the curvature filter")
    kernel = np.ones(taps) / taps
    x = np.convolve(pts[:, 0], kernel, mode="valid")
    y = np.convolve(pts[:, 1], kernel, mode="valid")
    if x.size < 3:
        raise InsufficientDataError("too few points after smoothing")
    dx = np.gradient(x, TICK_SECONDS)
    dy = np.gradient(y, TICK_SECONDS)
    ddx = np.gradient(dx, TICK_SECONDS)
    ddy = np.gradient(dy, TICK_SECONDS)
    speed2 = dx * dx + dy * dy
    valid = speed2 >= min_speed ** 2
    if not np.any(valid):
        return math.inf
    kappa = np.abs(dx * ddy - dy * ddx) / np.power(speed2, 1.5, where=speed2 > 0,
                                                   out=np.full_like(speed2, np.inf))
    kappa_max = float(np.max(kappa[valid]))
    if kappa_max < 1e-6:
        return math.inf
    return 1.0 / kappa_max


def passes_curvature_filter(positions: np.ndarray,
                            limit_m: float = CURVATURE_RADIUS_LIMIT_M) -> bool:
    """True when the path turns tighter than the radius limit."""
    return min_turning_radius(positions) < limit_m


# ---------------------------------------------------------------------------
# Trial directory I/O
# ---------------------------------------------------------------------------

def write_states_csv(path, states: Sequence[StateVector]) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(("time_s",) + STATE_CHANNELS)
        for s in states:
            writer.writerow([f"{s.timestamp:.9g}"]
                            + [f"{v:.9g}" for v in s.to_array()])


def read_states_csv(path) -> list:
    states = []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if tuple(header) != ("time_s",) + STATE_CHANNELS:
            raise SchemaError(f"{path}: unexpected CSV header")
        for row in reader:
            states.append(StateVector.from_array(
                float(row[0]), [float(v) for v in row[1:]]))
    return states


def save_trial(trial_dir, trial: SimTrial, trial_id: str,
               extra_meta: dict | None = None) -> None:
    """Serialize one simulated trial (states, truth, clouds, metadata)."""
    trial_dir = Path(trial_dir)
    trial_dir.mkdir(parents=True, exist_ok=True)
    write_states_csv(trial_dir / "states.csv", trial.states)
    with open(trial_dir / "truth.json", "w") as fh:
        json.dump([{"onset": p.onset, "direction": p.direction,
                    "magnitude": p.magnitude, "duration": p.duration}
                   for p in trial.truth], fh, indent=2)
    meta = {"trial_id": trial_id, "scene_label": trial.scene_label,
            "n_ticks": len(trial.states), "n_clouds": len(trial.clouds)}
    meta.update(extra_meta or {})
    with open(trial_dir / "meta.json", "w") as fh:
        json.dump(meta, fh, indent=2)
    if trial.clouds:
        offsets = np.zeros(len(trial.clouds) + 1, dtype=np.int64)
        for i, c in enumerate(trial.clouds):
            offsets[i + 1] = offsets[i] + len(c)
        points = (np.concatenate([c.points for c in trial.clouds])
                  if offsets[-1] else np.zeros((0, 3)))
        np.save(trial_dir / "cloud_points.npy", points.astype(np.float32))
        np.save(trial_dir / "cloud_offsets.npy", offsets)
        np.save(trial_dir / "cloud_times.npy",
                np.array([c.timestamp for c in trial.clouds]))
        np.save(trial_dir / "cloud_src_pos.npy",
                np.array([c.source_pose.position for c in trial.clouds]))
        np.save(trial_dir / "cloud_src_quat.npy",
                np.array([c.source_pose.orientation.as_array()
                          for c in trial.clouds]))


def load_trial(trial_dir) -> tuple:
    """Load a trial directory; returns (SimTrial, meta dict)."""
    trial_dir = Path(trial_dir)
    states = read_states_csv(trial_dir / "states.csv")
    with open(trial_dir / "truth.json") as fh:
        truth = [PerturbationSpec(p["onset"], p["direction"], p["magnitude"],
                                  p.get("duration", 0.3))
                 for p in json.load(fh)]
    with open(trial_dir / "meta.json") as fh:
        meta = json.load(fh)
    clouds = []
    if (trial_dir / "cloud_offsets.npy").exists():
        points = np.load(trial_dir / "cloud_points.npy").astype(float)
        offsets = np.load(trial_dir / "cloud_offsets.npy")
        times = np.load(trial_dir / "cloud_times.npy")
        src_pos = np.load(trial_dir / "cloud_src_pos.npy")
        src_quat = np.load(trial_dir / "cloud_src_quat.npy")
        for i in range(len(times)):
            clouds.append(PointCloud(
                timestamp=float(times[i]),
                points=points[offsets[i]:offsets[i + 1]],
                source_pose=Pose(float(times[i]), src_pos[i],
                                 UnitQuaternion.normalized(*src_quat[i])),
            ))
    return SimTrial(states=states, clouds=clouds, truth=truth,
                    scene_label=meta.get("scene_label", "treadmill")), meta


def trajectory_from_trial(trial: SimTrial, trial_id: str, scenario: str,
                          queue_capacity: int = DEFAULT_QUEUE_CAPACITY) -> Trajectory:
    """Rasterize a trial's cloud stream into per-tick panoramas.

    Clouds are pushed into the FIFO as they arrive; each tick's panorama is
    built in that tick's torso frame. Trials without clouds (treadmill) get
    all-empty panoramas.
    """
    queue = CloudQueue(queue_capacity)
    clouds_by_time = {round(c.timestamp / TICK_SECONDS): c for c in trial.clouds}
    panoramas = []
    for s in trial.states:
        tick = round(s.timestamp / TICK_SECONDS)
        if tick in clouds_by_time:
            queue.push(clouds_by_time[tick])
        torso = Pose(s.timestamp, s.position, s.orientation)
        panoramas.append(build_panorama(queue, torso))
    return Trajectory(id=trial_id, scenario=scenario,
                      states=list(trial.states), panoramas=panoramas)


# ---------------------------------------------------------------------------
# Exchange format (training windows and prediction sets)
# ---------------------------------------------------------------------------

def _write_manifest(path, payload: dict) -> None:
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=2)


def export_training_set(windows: Sequence[SequenceWindow], out_dir,
                        stride: int | None = None) -> None:
    """Write windows to an exchange directory (manifest + two .bin files)."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    manifest = {
        "schema_version": SCHEMA_VERSION,
        "kind": "windows",
        "n_windows": len(windows),
        "window_ticks": WINDOW_TICKS,
        "input_ticks": INPUT_TICKS,
        "label_ticks": LABEL_TICKS,
        "tick_seconds": TICK_SECONDS,
        "state_channels": list(STATE_CHANNELS),
        "pano_rows": PANO_ROWS,
        "pano_cols": PANO_COLS,
        "stride": stride,
        "windows": [{"source_id": w.source_id, "scenario": w.scenario,
                     "start_tick": int(w.start_tick)} for w in windows],
    }
    _write_manifest(out / "manifest.json", manifest)
    with open(out / "states.bin", "wb") as fh:
        for w in windows:
            fh.write(np.ascontiguousarray(w.states, dtype="<f4").tobytes())
    with open(out / "panos.bin", "wb") as fh:
        for w in windows:
            fh.write(np.ascontiguousarray(w.panoramas, dtype="<f4").tobytes())


@dataclass(frozen=True)
class WindowSet:
    """Memory-mapped view of an exchange directory holding training windows."""

    manifest: dict
    states: np.ndarray   # (n, 200, 24) float32
    panoramas: np.ndarray  # (n, 200, 180, 360) float32

    @property
    def n_windows(self) -> int:
        return int(self.manifest["n_windows"])

    def scenario(self, index: int) -> str:
        return self.manifest["windows"][index]["scenario"]

    def label_states(self) -> np.ndarray:
        return self.states[:, INPUT_TICKS:, :]

    def label_panoramas(self) -> np.ndarray:
        return self.panoramas[:, INPUT_TICKS:, :, :]


@dataclass(frozen=True)
class PredictionSet:
    """Memory-mapped view of a predictions directory (label ticks only)."""

    manifest: dict
    states: np.ndarray    # (n, 50, 24) float32
    panoramas: np.ndarray  # (n, 50, 180, 360) float32

    @property
    def variant(self) -> str:
        return self.manifest.get("variant", "model")

    @property
    def n_windows(self) -> int:
        return int(self.manifest["n_windows"])


def _load_manifest(path: Path, kind: str) -> dict:
    manifest_path = path / "manifest.json"
    if not manifest_path.exists():
        raise SchemaError(f"{path}: missing manifest.json")
    with open(manifest_path) as fh:
        manifest = json.load(fh)
    if manifest.get("schema_version") != SCHEMA_VERSION:
        raise SchemaError(
            f"{path}: schema_version {manifest.get('schema_version')} != {SCHEMA_VERSION}")
    if manifest.get("kind") != kind:
        raise SchemaError(f"{path}: kind {manifest.get('kind')!r}, expected {kind!r}")
    if manifest.get("label_ticks") != LABEL_TICKS:
        raise SchemaError(f"{path}: label_ticks must be {LABEL_TICKS}")
    if list(manifest.get("state_channels", [])) != list(STATE_CHANNELS):
        raise SchemaError(f"{path}: state channel names do not match")
    if (manifest.get("pano_rows"), manifest.get("pano_cols")) != (PANO_ROWS, PANO_COLS):
        raise SchemaError(f"{path}: panorama grid must be {PANO_ROWS}x{PANO_COLS}")
    return manifest


def _map_bin(path: Path, shape: tuple) -> np.ndarray:
    expected = int(np.prod(shape)) * 4
    actual = os.path.getsize(path)
    if actual != expected:
        raise ShapeError(f"{path}: expected {expected} bytes for {shape}, got {actual}")
    if expected == 0:
        return np.zeros(shape, dtype="<f4")
    return np.memmap(path, dtype="<f4", mode="r", shape=shape)


def _scan_payload(arr: np.ndarray, name: str) -> None:
    # chunked scan so GB-scale files do not need to fit in memory
    for w in range(arr.shape[0]):
        block = np.asarray(arr[w])
        if not np.all(np.isfinite(block)):
            tick = int(np.argwhere(~np.isfinite(block))[0][0])
            raise PayloadError(f"{name}: non-finite value in window {w}, tick {tick}")


def import_training_set(in_dir) -> WindowSet:
    path = Path(in_dir)
    manifest = _load_manifest(path, "windows")
    if manifest.get("window_ticks") != WINDOW_TICKS or manifest.get("input_ticks") != INPUT_TICKS:
        raise SchemaError(f"{path}: windows must be {INPUT_TICKS}+{LABEL_TICKS} ticks")
    n = int(manifest["n_windows"])
    states = _map_bin(path / "states.bin", (n, WINDOW_TICKS, STATE_SIZE))
    panos = _map_bin(path / "panos.bin", (n, WINDOW_TICKS, PANO_ROWS, PANO_COLS))
    _scan_payload(states, str(path / "states.bin"))
    _scan_payload(panos, str(path / "panos.bin"))
    return WindowSet(manifest=manifest, states=states, panoramas=panos)


def export_predictions(out_dir, states: np.ndarray, panoramas: np.ndarray,
                       variant: str, source_manifest: dict | None = None) -> None:
    """Write a prediction set mirroring the exchange layout (label ticks)."""
    states = np.asarray(states, dtype="<f4")
    panoramas = np.asarray(panoramas, dtype="<f4")
    if states.ndim != 3 or states.shape[1:] != (LABEL_TICKS, STATE_SIZE):
        raise ShapeError(f"prediction states shape {states.shape}")
    if panoramas.shape != (states.shape[0], LABEL_TICKS, PANO_ROWS, PANO_COLS):
        raise ShapeError(f"prediction panorama shape {panoramas.shape}")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    manifest = {
        "schema_version": SCHEMA_VERSION,
        "kind": "predictions",
        "variant": variant,
        "n_windows": int(states.shape[0]),
        "label_ticks": LABEL_TICKS,
        "tick_seconds": TICK_SECONDS,
        "state_channels": list(STATE_CHANNELS),
        "pano_rows": PANO_ROWS,
        "pano_cols": PANO_COLS,
        "windows": (source_manifest or {}).get("windows"),
    }
    _write_manifest(out / "manifest.json", manifest)
    states.tofile(out / "states.bin")
    panoramas.tofile(out / "panos.bin")


def import_predictions(in_dir) -> PredictionSet:
    """Load and validate a predictions directory written by a predictor."""
    path = Path(in_dir)
    manifest = _load_manifest(path, "predictions")
    n = int(manifest["n_windows"])
    states = _map_bin(path / "states.bin", (n, LABEL_TICKS, STATE_SIZE))
    panos = _map_bin(path / "panos.bin", (n, LABEL_TICKS, PANO_ROWS, PANO_COLS))
    _scan_payload(states, str(path / "states.bin"))
    _scan_payload(panos, str(path / "panos.bin"))
    return PredictionSet(manifest=manifest, states=states, panoramas=panos)
