"""Synthetic walking trials: torso pose streams, joint angles, depth-sensor
point clouds, and ground-truth perturbation schedules.

The walker is a kinematic stand-in, not a biomechanical model: baseline
torso sway is a pair of gait-locked sinusoids (roll at the stride rate,
pitch at the step rate) plus seeded band-limited Gaussian jitter, and an
external perturbation adds a directional tilt impulse that rises over its
0.3 s duration and then decays exponentially. The model exists to exercise
the detection and prediction machinery with known ground truth; its
response amplitude is linear in the injected tilt by construction.

Treadmill trials walk in place and carry no point clouds. Scene trials
follow a smoothed waypoint route at constant speed through simple 3D
geometry (walls, boxes, pillars, ground plane) observed by a forward
depth sensor with an 87 deg x 58 deg field of view and 10 m range.

Everything is deterministic given the config seed; batch helpers seed each
trial independently as seed + trial index.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from .core import (
    TICK_SECONDS,
    InvalidInputError,
    InvalidScheduleError,
    PointCloud,
    Pose,
    StateVector,
    UnitQuaternion,
    central_angular_velocity,
    central_linear_velocity,
    quat_array_from_euler_zyx,
    quat_array_rotate,
)
from . import sway as sway_mod

DIRECTIONS = ("front", "back", "left", "right")
MAGNITUDES = (0.075, 0.15)
PERTURBATION_DURATION_S = 0.3
MIN_GAP_S = 16.0
MAX_GAP_S = 21.0

SENSOR_FOV_AZ_DEG = 87.0
SENSOR_FOV_EL_DEG = 58.0
SENSOR_RANGE_M = 10.0
SENSOR_RAY_STEP_DEG = 1.0  # matches the 1 deg panorama pixel pitch

# Push direction -> (tilt axis, sign). A front push rocks the torso back.
_DIRECTION_AXIS = {
    "front": ("pitch", -1.0),
    "back": ("pitch", 1.0),
    "left": ("roll", 1.0),
    "right": ("roll", -1.0),
}


@dataclass(frozen=True)
class PerturbationSpec:
    """One scheduled pelvis push."""

    onset: float
    direction: str
    magnitude: float
    duration: float = PERTURBATION_DURATION_S

    def __post_init__(self):
        if self.direction not in DIRECTIONS:
            raise InvalidInputError(f"unknown direction {self.direction!r}")
        if not any(abs(self.magnitude - m) < 1e-9 for m in MAGNITUDES):
            raise InvalidInputError(
                f"magnitude must be one of {MAGNITUDES}, got {self.magnitude}")
        if self.duration <= 0:
            raise InvalidInputError("duration must be positive")


@dataclass(frozen=True)
class WalkConfig:
    """Simulation parameters; every trial is deterministic given the seed.

    baseline_sway_deg and tilt_deg_per_bw are the free calibration of the
    synthetic walker: the default tilt mapping sends a 7.5% body-weight
    push to a 4 deg peak tilt and a 15% push to 8 deg.
    """

    speed: float = 1.25
    step_frequency: float = 1.9
    duration: float = 60.0
    seed: int = 0
    scene: str = "treadmill"
    sway_noise_scale: float = 0.06  # deg, std of baseline angle jitter
    recovery_time_constant: float = 1.0
    baseline_sway_deg: float = 1.25
    tilt_deg_per_bw: float = 4.0 / 0.075
    torso_height: float = 1.4

    def __post_init__(self):
        if self.speed <= 0:
            raise InvalidInputError("speed must be > 0")
        if self.duration <= 0:
            raise InvalidInputError("duration must be > 0")
        if self.scene not in ("treadmill", "indoor", "outdoor_cluttered", "outdoor_free"):
            raise InvalidInputError(f"unknown scene {self.scene!r}")


@dataclass(frozen=True)
class SimTrial:
    """States at 20 Hz, aligned point clouds, and the true schedule."""

    states: list
    clouds: list
    truth: list
    scene_label: str

    def quaternions(self) -> np.ndarray:
        return np.array([s.orientation.as_array() for s in self.states])

    def timestamps(self) -> np.ndarray:
        return np.array([s.timestamp for s in self.states])

    def positions(self) -> np.ndarray:
        return np.array([s.position for s in self.states])


SCHEDULE_END_MARGIN_S = 2.5


def schedule_perturbations(duration: float, seed: int) -> list:
    """Pseudo-random schedule: onsets spaced U(16, 21) s, direction and
    magnitude drawn uniformly. Deterministic per seed.

    Onsets inside the last 2.5 s are dropped so every scheduled push leaves
    room for its response inside the trial.
    """
    rng = np.random.default_rng(seed)
    specs = []
    t = 0.0
    while True:
        t += rng.uniform(MIN_GAP_S, MAX_GAP_S)
        if t > duration - SCHEDULE_END_MARGIN_S:
            break
        specs.append(PerturbationSpec(
            onset=t,
            direction=DIRECTIONS[rng.integers(len(DIRECTIONS))],
            magnitude=MAGNITUDES[rng.integers(len(MAGNITUDES))],
        ))
    return specs


def _validate_schedule(perturbations: Sequence[PerturbationSpec]) -> list:
    specs = sorted(perturbations, key=lambda p: p.onset)
    for prev, nxt in zip(specs, specs[1:]):
        if nxt.onset < prev.onset + prev.duration:
            raise InvalidScheduleError(
                f"perturbations at {prev.onset:.2f}s and {nxt.onset:.2f}s overlap")
    return specs


def _harmonic_jitter(rng: np.random.Generator, t: np.ndarray, std_rad: float,
                     n_harmonics: int = 6) -> np.ndarray:
    """Band-limited Gaussian process: a fixed sum of seeded random harmonics.

    Realizations are bounded, so the tails of any derived rate series stay
    well inside a MAD-relative detection threshold on unperturbed gait.
    """
    if std_rad <= 0:
        return np.zeros_like(t)
    freqs = rng.uniform(0.15, 1.2, n_harmonics)
    amps = rng.normal(0.0, 1.0, n_harmonics)
    phases = rng.uniform(0.0, 2.0 * math.pi, n_harmonics)
    sig = np.zeros_like(t)
    for f, a, ph in zip(freqs, amps, phases):
        sig += a * np.sin(2.0 * math.pi * f * t + ph)
    rms = math.sqrt(float(np.sum(amps ** 2)) / 2.0)
    if rms < 1e-12:
        return np.zeros_like(t)
    return sig * (std_rad / rms)


def _tilt_response(t: np.ndarray, spec: PerturbationSpec, peak_rad: float,
                   tau: float) -> np.ndarray:
    """Tilt impulse: linear rise over the push duration, then exp decay."""
    u = t - spec.onset
    rise = np.clip(u / spec.duration, 0.0, 1.0)
    decay = np.where(u > spec.duration,
                     np.exp(-(u - spec.duration) / max(tau, 1e-6)), 1.0)
    return np.where(u >= 0.0, peak_rad * rise * decay, 0.0)


def _joint_angle_template(t: np.ndarray, step_freq: float) -> np.ndarray:
    """Kinematic sinusoid template for the 9 joint channels, radians."""
    stride = math.pi * step_freq  # rad/s of the stride cycle (= 2*pi*f/2)
    ph = 2.0 * stride * t
    deg = math.pi / 180.0
    hip_l = 20.0 * deg * np.sin(ph / 2.0)
    hip_r = 20.0 * deg * np.sin(ph / 2.0 + math.pi)
    abd_l = 4.0 * deg * np.sin(ph / 2.0 + 0.5)
    abd_r = 4.0 * deg * np.sin(ph / 2.0 + 0.5 + math.pi)
    rot_l = 6.0 * deg * np.sin(ph / 2.0 + 1.1)
    rot_r = 6.0 * deg * np.sin(ph / 2.0 + 1.1 + math.pi)
    knee_l = 30.0 * deg * 0.5 * (1.0 - np.cos(ph / 2.0 + 0.9))
    knee_r = 30.0 * deg * 0.5 * (1.0 - np.cos(ph / 2.0 + 0.9 + math.pi))
    thigh_roll = 3.0 * deg * np.sin(ph / 2.0 + 2.0)
    return np.stack([hip_l, hip_r, abd_l, abd_r, rot_l, rot_r,
                     knee_l, knee_r, thigh_roll], axis=1)


def _assemble_states(times: np.ndarray, positions: np.ndarray, quats: np.ndarray,
                     sigma_z: np.ndarray, step_freq: float,
                     joints: np.ndarray) -> list:
    """Fill velocities by central differences and build StateVector objects."""
    n = len(times)
    linvel = central_linear_velocity(positions)
    angvel = central_angular_velocity(quats)
    states = []
    for k in range(n):
        states.append(StateVector(
            timestamp=float(times[k]),
            position=positions[k],
            orientation=UnitQuaternion(*quats[k]),
            linear_velocity=linvel[k],
            angular_velocity=angvel[k],
            sway_area=float(max(sigma_z[k], 0.0)),
            step_frequency=step_freq,
            joint_angles=joints[k],
        ))
    return states


def _baseline_angles(cfg: WalkConfig, t: np.ndarray, rng: np.random.Generator):
    """Baseline roll/pitch oscillation plus jitter over an extended timeline."""
    amp = math.radians(cfg.baseline_sway_deg)
    stride_hz = 0.5 * cfg.step_frequency
    roll = amp * np.sin(2.0 * math.pi * stride_hz * t)
    pitch = amp * np.sin(2.0 * math.pi * cfg.step_frequency * t + 0.8)
    noise_rad = math.radians(cfg.sway_noise_scale)
    roll = roll + _harmonic_jitter(rng, t, noise_rad)
    pitch = pitch + _harmonic_jitter(rng, t, noise_rad)
    yaw_jitter = _harmonic_jitter(rng, t, 0.5 * noise_rad)
    return roll, pitch, yaw_jitter


def _apply_perturbations(cfg: WalkConfig, t: np.ndarray, roll: np.ndarray,
                         pitch: np.ndarray, specs: Sequence[PerturbationSpec]):
    for spec in specs:
        peak = math.radians(cfg.tilt_deg_per_bw * spec.magnitude)
        axis, sign = _DIRECTION_AXIS[spec.direction]
        response = sign * _tilt_response(t, spec, peak, cfg.recovery_time_constant)
        if axis == "pitch":
            pitch = pitch + response
        else:
            roll = roll + response
    return roll, pitch


def simulate_treadmill_trial(cfg: WalkConfig,
                             perturbations: Sequence[PerturbationSpec]) -> SimTrial:
    """Treadmill walking with injected pelvis pushes; no point clouds.

    The torso walks in place (zero net displacement), so the emitted states
    carry only a small periodic center-of-mass wobble. The stream carries a
    hidden 2.5 s warm-up so sway_area is defined from the very first tick.
    """
    specs = _validate_schedule(perturbations)
    rng = np.random.default_rng(cfg.seed)
    n = int(round(cfg.duration / TICK_SECONDS))
    warm = sway_mod.DEFAULT_WINDOW - 1
    t_ext = (np.arange(n + warm) - warm) * TICK_SECONDS

    roll, pitch, yaw = _baseline_angles(cfg, t_ext, rng)
    roll, pitch = _apply_perturbations(cfg, t_ext, roll, pitch, specs)
    quats_ext = quat_array_from_euler_zyx(yaw, pitch, roll)

    proj = sway_mod.project_orientation_array(quats_ext)
    sigma = sway_mod.sway_series(proj, timestamps=t_ext).sigma_z

    t_emit = t_ext[warm:]
    stride_hz = 0.5 * cfg.step_frequency
    positions = np.stack([
        0.01 * np.sin(2.0 * math.pi * cfg.step_frequency * t_emit),
        0.02 * np.sin(2.0 * math.pi * stride_hz * t_emit),
        cfg.torso_height + 0.01 * np.sin(2.0 * math.pi * cfg.step_frequency * t_emit + 1.0),
    ], axis=1)
    joints = _joint_angle_template(t_emit, cfg.step_frequency)
    states = _assemble_states(t_emit, positions, quats_ext[warm:], sigma,
                              cfg.step_frequency, joints)
    return SimTrial(states=states, clouds=[], truth=list(specs),
                    scene_label="treadmill")


def make_treadmill_batch(n_trials: int, seed: int, duration: float = 50.0,
                         base_cfg: WalkConfig | None = None) -> list:
    """Perturbation-trial batch: magnitudes alternate per trial, directions
    come from the per-trial schedule, each trial seeded as seed + index."""
    cfg0 = base_cfg or WalkConfig(duration=duration)
    trials = []
    for i in range(n_trials):
        cfg = replace(cfg0, seed=seed + i, duration=duration, scene="treadmill")
        mag = MAGNITUDES[i % 2]
        specs = [replace(s, magnitude=mag)
                 for s in schedule_perturbations(duration, seed + i)]
        trials.append(simulate_treadmill_trial(cfg, specs))
    return trials


def make_control_batch(n_trials: int, seed: int, duration: float = 50.0,
                       base_cfg: WalkConfig | None = None) -> list:
    """Unperturbed constant-gait trials for false-positive checks."""
    cfg0 = base_cfg or WalkConfig(duration=duration)
    return [simulate_treadmill_trial(
        replace(cfg0, seed=seed + i, duration=duration, scene="treadmill"), [])
        for i in range(n_trials)]


# ---------------------------------------------------------------------------
# Scene geometry and the simulated depth sensor
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Wall:
    p1: tuple
    p2: tuple
    height: float = 2.7


@dataclass(frozen=True)
class Box:
    min_corner: tuple
    max_corner: tuple


@dataclass(frozen=True)
class Pillar:
    center: tuple
    radius: float
    height: float = 3.0


@dataclass(frozen=True)
class Scene:
    walls: tuple = ()
    boxes: tuple = ()
    pillars: tuple = ()
    ground: bool = True
    label: str = "indoor"

    def to_json(self) -> dict:
        return {
            "label": self.label,
            "ground": self.ground,
            "walls": [{"p1": list(w.p1), "p2": list(w.p2), "height": w.height}
                      for w in self.walls],
            "boxes": [{"min": list(b.min_corner), "max": list(b.max_corner)}
                      for b in self.boxes],
            "pillars": [{"center": list(p.center), "radius": p.radius,
                         "height": p.height} for p in self.pillars],
        }

    @classmethod
    def from_json(cls, data: dict) -> "Scene":
        return cls(
            walls=tuple(Wall(tuple(w["p1"]), tuple(w["p2"]), w.get("height", 2.7))
                        for w in data.get("walls", [])),
            boxes=tuple(Box(tuple(b["min"]), tuple(b["max"]))
                        for b in data.get("boxes", [])),
            pillars=tuple(Pillar(tuple(p["center"]), p["radius"], p.get("height", 3.0))
                          for p in data.get("pillars", [])),
            ground=bool(data.get("ground", True)),
            label=data.get("label", "indoor"),
        )


def load_scene(path) -> Scene:
    with open(path) as fh:
        return Scene.from_json(json.load(fh))


def save_scene(path, scene: Scene) -> None:
    with open(path, "w") as fh:
        json.dump(scene.to_json(), fh, indent=2)


def _sensor_rays():
    """Ray grid (azimuth, elevation) of the sensor in the torso frame.

    Rays sit at panorama cell centers (half-step offsets), so the live
    field of view rasterizes to a stable cell set instead of flickering on
    bin boundaries as the walker sways.
    """
    az = np.deg2rad(np.arange(-SENSOR_FOV_AZ_DEG / 2, SENSOR_FOV_AZ_DEG / 2,
                              SENSOR_RAY_STEP_DEG))
    el = np.deg2rad(np.arange(-SENSOR_FOV_EL_DEG / 2 + SENSOR_RAY_STEP_DEG / 2,
                              SENSOR_FOV_EL_DEG / 2, SENSOR_RAY_STEP_DEG))
    az_g, el_g = np.meshgrid(az, el)
    return az_g.ravel(), el_g.ravel()


_MIN_RAY_T = 0.05


def _raycast(scene: Scene, origin: np.ndarray, dirs: np.ndarray) -> np.ndarray:
    """Nearest hit distance per unit ray; inf where nothing is hit in range."""
    n = dirs.shape[0]
    best = np.full(n, np.inf)

    if scene.ground:
        dz = dirs[:, 2]
        with np.errstate(divide="ignore", invalid="ignore"):
            t = -origin[2] / dz
        ok = (dz < -1e-9) & (t > _MIN_RAY_T)
        best = np.where(ok, np.minimum(best, t), best)

    for wall in scene.walls:
        p1 = np.asarray(wall.p1, dtype=float)
        seg = np.asarray(wall.p2, dtype=float) - p1
        seg_len2 = float(seg @ seg)
        if seg_len2 < 1e-12:
            continue
        normal = np.array([-seg[1], seg[0]])
        denom = dirs[:, :2] @ normal
        with np.errstate(divide="ignore", invalid="ignore"):
            t = ((p1 - origin[:2]) @ normal) / denom
        pt = origin[None, :] + t[:, None] * dirs
        s = ((pt[:, :2] - p1) @ seg) / seg_len2
        ok = (np.abs(denom) > 1e-9) & (t > _MIN_RAY_T) & (s >= 0.0) & (s <= 1.0) \
            & (pt[:, 2] >= 0.0) & (pt[:, 2] <= wall.height)
        best = np.where(ok & (t < best), t, best)

    for box in scene.boxes:
        lo = np.asarray(box.min_corner, dtype=float)
        hi = np.asarray(box.max_corner, dtype=float)
        with np.errstate(divide="ignore", invalid="ignore"):
            t1 = (lo[None, :] - origin[None, :]) / dirs
            t2 = (hi[None, :] - origin[None, :]) / dirs
        tmin = np.nanmax(np.minimum(t1, t2), axis=1)
        tmax = np.nanmin(np.maximum(t1, t2), axis=1)
        ok = (tmax >= tmin) & (tmin > _MIN_RAY_T)
        best = np.where(ok & (tmin < best), tmin, best)

    for pillar in scene.pillars:
        c = np.asarray(pillar.center, dtype=float)
        oc = origin[:2] - c
        a = np.einsum("ij,ij->i", dirs[:, :2], dirs[:, :2])
        b = 2.0 * (dirs[:, :2] @ oc)
        cc = float(oc @ oc) - pillar.radius ** 2
        disc = b * b - 4.0 * a * cc
        with np.errstate(divide="ignore", invalid="ignore"):
            sq = np.sqrt(np.maximum(disc, 0.0))
            t = (-b - sq) / (2.0 * a)
        z = origin[2] + t * dirs[:, 2]
        ok = (disc >= 0.0) & (a > 1e-12) & (t > _MIN_RAY_T) & (z >= 0.0) & (z <= pillar.height)
        best = np.where(ok & (t < best), t, best)

    return best


def _fillet_path(waypoints: np.ndarray, fillet_radius: float | None,
                 max_miss: float = 0.15, sample_step: float = 0.02) -> np.ndarray:
    """Densely sampled polyline through the waypoints with rounded corners.

    When fillet_radius is None the per-corner radius is capped so the path
    misses each waypoint by at most max_miss; an explicit radius is honored
    (subject to segment-length limits) even if it cuts corners wider.
    """
    pts = [waypoints[0]]
    for i in range(1, len(waypoints) - 1):
        a, b, c = waypoints[i - 1], waypoints[i], waypoints[i + 1]
        v1, v2 = b - a, c - b
        l1, l2 = np.linalg.norm(v1), np.linalg.norm(v2)
        u1, u2 = v1 / l1, v2 / l2
        cos_turn = float(np.clip(u1 @ u2, -1.0, 1.0))
        turn = math.acos(cos_turn)
        if turn < math.radians(2.0):
            pts.append(b)
            continue
        if turn > math.radians(150.0):
            raise InvalidInputError(f"turn at waypoint {i} is too sharp to fillet")
        half = 0.5 * turn
        if fillet_radius is None:
            r = max_miss / (1.0 / math.cos(half) - 1.0)
            r = min(r, 2.0)
        else:
            r = fillet_radius
        trim = r * math.tan(half)
        trim_max = 0.45 * min(l1, l2)
        if trim > trim_max:
            r *= trim_max / trim
            trim = trim_max
        start = b - u1 * trim
        end = b + u2 * trim
        # arc center sits off the corner bisector
        turn_sign = math.copysign(1.0, u1[0] * u2[1] - u1[1] * u2[0])
        normal1 = turn_sign * np.array([-u1[1], u1[0]])
        center = start + normal1 * r
        ang0 = math.atan2(*(start - center)[::-1])
        ang1 = math.atan2(*(end - center)[::-1])
        sweep = (ang1 - ang0) % (2.0 * math.pi)
        if turn_sign < 0:
            sweep -= 2.0 * math.pi
        n_arc = max(int(abs(sweep) * r / sample_step), 2)
        angles = ang0 + sweep * np.linspace(0.0, 1.0, n_arc)
        pts.append(start)
        for ang in angles[1:]:
            pts.append(center + r * np.array([math.cos(ang), math.sin(ang)]))
    pts.append(waypoints[-1])
    return np.asarray(pts)


def simulate_walk_scene(cfg: WalkConfig, waypoints: Sequence[Sequence[float]],
                        scene: Scene | None = None,
                        fillet_radius: float | None = None) -> SimTrial:
    """Walk a smoothed waypoint route through scene geometry at cfg.speed.

    The trial ends when the route completes or cfg.duration elapses,
    whichever comes first. Turns add a centripetal lean proportional to the
    local path curvature on top of the baseline gait sway, and every tick
    emits the point cloud seen by the forward depth sensor from that pose.
    """
    wps = np.asarray(waypoints, dtype=float)
    if wps.ndim != 2 or wps.shape[1] != 2 or wps.shape[0] < 2:
        raise InvalidInputError("need at least 2 waypoints of shape (n, 2)")
    if np.any(np.linalg.norm(np.diff(wps, axis=0), axis=1) < 1e-9):
        raise InvalidInputError("consecutive waypoints must be distinct")
    if scene is None:
        scene = make_scene(cfg.scene, cfg.seed)

    rng = np.random.default_rng(cfg.seed)
    dense = _fillet_path(wps, fillet_radius)
    seg = np.diff(dense, axis=0)
    arclen = np.concatenate([[0.0], np.cumsum(np.linalg.norm(seg, axis=1))])
    total_len = float(arclen[-1])
    n = int(min(total_len / cfg.speed, cfg.duration) / TICK_SECONDS)
    if n < 2:
        raise InvalidInputError("route is too short for even two ticks")

    warm = sway_mod.DEFAULT_WINDOW - 1
    t_emit = np.arange(n) * TICK_SECONDS
    s_emit = cfg.speed * t_emit
    x = np.interp(s_emit, arclen, dense[:, 0])
    y = np.interp(s_emit, arclen, dense[:, 1])

    # heading and curvature from the resampled path
    dx = np.gradient(x, TICK_SECONDS)
    dy = np.gradient(y, TICK_SECONDS)
    yaw = np.unwrap(np.arctan2(dy, dx))
    yaw_rate = np.gradient(yaw, TICK_SECONDS)
    curvature = yaw_rate / cfg.speed
    lean = -(cfg.speed ** 2) * curvature / 9.81

    t_ext = (np.arange(n + warm) - warm) * TICK_SECONDS
    roll, pitch, yaw_jit = _baseline_angles(cfg, t_ext, rng)
    roll[warm:] += lean
    yaw_ext = np.concatenate([np.full(warm, yaw[0]), yaw]) + yaw_jit
    quats_ext = quat_array_from_euler_zyx(yaw_ext, pitch, roll)

    proj = sway_mod.project_orientation_array(quats_ext)
    sigma = sway_mod.sway_series(proj, timestamps=t_ext).sigma_z

    positions = np.stack([x, y, np.full(n, cfg.torso_height)], axis=1)
    quats = quats_ext[warm:]
    joints = _joint_angle_template(t_emit, cfg.step_frequency)
    states = _assemble_states(t_emit, positions, quats, sigma,
                              cfg.step_frequency, joints)

    ray_az, ray_el = _sensor_rays()
    local = np.stack([np.cos(ray_el) * np.cos(ray_az),
                      np.cos(ray_el) * np.sin(ray_az),
                      np.sin(ray_el)], axis=1)
    clouds = []
    for k in range(n):
        world = quat_array_rotate(np.broadcast_to(quats[k], (local.shape[0], 4)), local)
        dist = _raycast(scene, positions[k], world)
        hit = dist <= SENSOR_RANGE_M
        pts = positions[k][None, :] + dist[hit, None] * world[hit]
        clouds.append(PointCloud(
            timestamp=float(t_emit[k]),
            points=pts,
            source_pose=Pose(float(t_emit[k]), positions[k], states[k].orientation),
        ))
    return SimTrial(states=states, clouds=clouds, truth=[],
                    scene_label=scene.label)


def make_scene(kind: str, seed: int = 0) -> Scene:
    """Built-in scene geometry per scenario, lightly randomized by seed."""
    rng = np.random.default_rng(seed ^ 0x5CE7E)
    if kind == "treadmill":
        return Scene(ground=False, label="treadmill")
    if kind == "indoor":
        half = 1.3
        turn_x = 14.0
        leg2_y = 12.0
        walls = (
            Wall((-2.0, -half), (turn_x + half, -half)),
            Wall((-2.0, half), (turn_x - half, half)),
            Wall((turn_x + half, -half), (turn_x + half, leg2_y)),
            Wall((turn_x - half, half), (turn_x - half, leg2_y)),
        )
        boxes = []
        for i in range(3):
            bx = rng.uniform(2.0, 11.0)
            side = -1.0 if i % 2 else 1.0
            by = side * (half - 0.35)
            size = rng.uniform(0.3, 0.5)
            boxes.append(Box((bx, by - size / 2, 0.0), (bx + size, by + size / 2, size * 2)))
        return Scene(walls=walls, boxes=tuple(boxes), ground=True, label="indoor")
    if kind == "outdoor_cluttered":
        boxes = []
        pillars = []
        for _ in range(10):
            bx, by = rng.uniform(1.0, 18.0), rng.uniform(-6.0, 8.0)
            size = rng.uniform(0.4, 1.2)
            boxes.append(Box((bx, by, 0.0), (bx + size, by + size, rng.uniform(0.4, 1.5))))
        for _ in range(6):
            pillars.append(Pillar((rng.uniform(1.0, 18.0), rng.uniform(-6.0, 8.0)),
                                  rng.uniform(0.15, 0.35)))
        return Scene(boxes=tuple(boxes), pillars=tuple(pillars), ground=True,
                     label="outdoor_cluttered")
    if kind == "outdoor_free":
        pillars = (Pillar((rng.uniform(6.0, 9.0), rng.uniform(4.0, 7.0)), 0.3),)
        return Scene(pillars=pillars, ground=True, label="outdoor_free")
    raise InvalidInputError(f"unknown scene kind {kind!r}")


def default_route(kind: str, seed: int = 0) -> np.ndarray:
    """Waypoint route matching the built-in scene of the same kind."""
    rng = np.random.default_rng(seed ^ 0x407E5)
    jit = lambda s: rng.uniform(-s, s)
    if kind == "indoor":
        return np.array([
            [0.0, jit(0.3)],
            [7.0 + jit(0.5), jit(0.3)],
            [14.0, 0.0],
            [14.0 + jit(0.2), 11.0],
        ])
    if kind == "outdoor_cluttered":
        return np.array([
            [0.0, 0.0],
            [6.0 + jit(0.5), jit(0.5)],
            [10.0, 4.0 + jit(0.5)],
            [14.0 + jit(0.5), 0.5 + jit(0.5)],
            [18.0, 4.0],
        ])
    if kind == "outdoor_free":
        return np.array([
            [0.0, 0.0],
            [10.0 + jit(0.5), jit(0.5)],
            [16.0, 5.0 + jit(0.5)],
            [10.0 + jit(0.5), 10.0],
        ])
    raise InvalidInputError(f"no default route for scene {kind!r}")
