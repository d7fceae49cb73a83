"""Acceptance suite: one test per release criterion, each printing a
pass/fail line with its measured numbers (run with -s to see them inline).

Every tolerance is pinned here; the suite needs no trained predictor (the
exchange round-trip criterion scores an identity-prediction file).
"""

import math
import time

import numpy as np
import pytest

from swayscope.core import Pose, UnitQuaternion
from swayscope.dataset import (
    INPUT_TICKS,
    LABEL_TICKS,
    WINDOW_TICKS,
    export_predictions,
    export_training_set,
    import_predictions,
    import_training_set,
    min_turning_radius,
    window_sequences,
)
from swayscope.detector import compare_metrics, detect_events, trial_traces
from swayscope.evaluate import horizon_curves, score_predictions
from swayscope.panorama import (
    MAX_DEPTH_M,
    CloudQueue,
    build_panorama,
    panorama_coverage,
)
from swayscope.core import PointCloud
from swayscope.simgait import (
    WalkConfig,
    default_route,
    make_control_batch,
    make_treadmill_batch,
    simulate_walk_scene,
)
from swayscope.sway import CHI2_95_2DOF, fit_sway_ellipse
from test_dataset import circle_path, synthetic_trajectory

ACCEPTANCE_SEED = 20260810


def report(name, ok, detail):
    print(f"[{'PASS' if ok else 'FAIL'}] {name}: {detail}")
    assert ok, f"{name}: {detail}"


class TestAcceptance:
    def test_ellipse_math(self):
        t0 = time.perf_counter()
        rng = np.random.default_rng(ACCEPTANCE_SEED)
        coverages = []
        max_area_err = 0.0
        for _ in range(20):
            a = rng.normal(size=(2, 2))
            cov = a @ a.T + 0.03 * np.eye(2)
            mean = rng.normal(size=2) * 5.0
            samples = rng.multivariate_normal(mean, cov, size=10_000)
            ellipse = fit_sway_ellipse(samples)
            coverages.append(float(np.mean(ellipse.contains(samples))))
            expected = math.pi * CHI2_95_2DOF * math.sqrt(np.linalg.det(ellipse.cov))
            max_area_err = max(max_area_err,
                               abs(ellipse.area - expected) / expected)
        elapsed = time.perf_counter() - t0
        ok = (min(coverages) >= 0.94 and max(coverages) <= 0.96
              and max_area_err < 1e-9 and elapsed < 5.0)
        report("ellipse-math", ok,
               f"coverage in [{min(coverages):.4f}, {max(coverages):.4f}] "
               f"(need [0.94, 0.96]), area rel err {max_area_err:.2e} < 1e-9, "
               f"runtime {elapsed:.1f}s < 5s")

    def test_metric_superiority(self):
        t0 = time.perf_counter()
        trials = make_treadmill_batch(192, seed=ACCEPTANCE_SEED, duration=50.0)
        controls = make_control_batch(16, seed=ACCEPTANCE_SEED + 500_000,
                                      duration=50.0)
        sway_rep, angle_rep = compare_metrics(trials)
        false_positives = 0
        for trial in controls:
            tr = trial_traces(trial)
            false_positives += len(detect_events(tr.delta_sigma_z,
                                                 tr.sway_timestamps))
        rate_15 = sway_rep.by_magnitude[0.15]["detection_rate"]
        rate_075 = sway_rep.by_magnitude[0.075]["detection_rate"]
        ptn_15 = sway_rep.by_magnitude[0.15]["mean_peak_to_noise"]
        ptn_075 = sway_rep.by_magnitude[0.075]["mean_peak_to_noise"]
        elapsed = time.perf_counter() - t0
        ok = (rate_15 == 1.0 and rate_075 >= 0.95 and false_positives == 0
              and sway_rep.mean_peak_to_noise > angle_rep.mean_peak_to_noise
              and ptn_15 > ptn_075 and elapsed < 120.0)
        report("metric-superiority", ok,
               f"192 trials: rate@15%={rate_15:.2f} (need 1.00), "
               f"rate@7.5%={rate_075:.2f} (need >=0.95), "
               f"control FPs={false_positives} (need 0), "
               f"PTN sway {sway_rep.mean_peak_to_noise:.1f} > "
               f"angle {angle_rep.mean_peak_to_noise:.1f}, "
               f"PTN 15% {ptn_15:.1f} > 7.5% {ptn_075:.1f}, "
               f"runtime {elapsed:.0f}s < 120s")

    def test_panorama_exactness(self):
        t0 = time.perf_counter()
        # analytic corridor: walls at y = +-1.5 m; points placed on the
        # cell-center rays so the expected (row, col, depth) is closed-form
        wall_y = 1.5
        points, expected = [], []
        for col in range(185, 355, 3):        # left wall: azimuth in (5, 175) deg
            for row in range(65, 116, 5):     # elevation in (-26, 25) deg
                az = math.radians(col - 180 + 0.5)
                el = math.radians(90 - row - 0.5)
                depth = wall_y / (math.cos(el) * math.sin(az))
                if depth <= 0 or depth > MAX_DEPTH_M:
                    continue
                points.append([depth * math.cos(el) * math.cos(az),
                               depth * math.cos(el) * math.sin(az),
                               depth * math.sin(el)])
                expected.append((row, col, depth))
        torso = Pose(0.0, np.array([2.0, -0.5, 1.3]),
                     UnitQuaternion.from_axis_angle((0, 0, 1), 0.6))
        rot = torso.orientation.rotation_matrix()
        world_points = np.asarray(points) @ rot.T + torso.position
        queue = CloudQueue(4).push(PointCloud(0.0, world_points))
        pano = build_panorama(queue, torso)
        max_depth_err = 0.0
        for row, col, depth in expected:
            got = pano.grid[row, col]
            assert got < MAX_DEPTH_M, (row, col)
            max_depth_err = max(max_depth_err, abs(float(got) - depth))
        empty = build_panorama(CloudQueue(3), torso)
        empty_ok = bool(np.all(empty.grid == MAX_DEPTH_M))

        walk = simulate_walk_scene(
            WalkConfig(duration=12.0, seed=ACCEPTANCE_SEED, scene="indoor"),
            default_route("indoor", ACCEPTANCE_SEED))
        monotone = True
        strictly_larger = True
        for tick in (80, 160, 235):
            covs = []
            for cap in (1, 10, 40):
                q = CloudQueue(cap)
                for cloud in walk.clouds[max(0, tick - cap + 1):tick + 1]:
                    q.push(cloud)
                state = walk.states[tick]
                covs.append(panorama_coverage(build_panorama(
                    q, Pose(state.timestamp, state.position, state.orientation))))
            monotone &= covs[0] <= covs[1] <= covs[2]
            strictly_larger &= covs[2] > covs[0]
        elapsed = time.perf_counter() - t0
        ok = (max_depth_err < 1e-4 and empty_ok and monotone
              and strictly_larger and elapsed < 30.0)
        report("panorama-exactness", ok,
               f"{len(expected)} wall cells exact, depth err {max_depth_err:.2e} "
               f"< 1e-4 m, empty queue all-10.0: {empty_ok}, coverage monotone "
               f"over queue {{1,10,40}}: {monotone}, runtime {elapsed:.1f}s < 30s")

    def test_dataset_protocol(self):
        t0 = time.perf_counter()
        counts_ok = True
        for n in (200, 260, 1000):
            for stride in (20, 50):
                windows = window_sequences(synthetic_trajectory(n), stride=stride)
                counts_ok &= len(windows) == (n - WINDOW_TICKS) // stride + 1
        windows = window_sequences(synthetic_trajectory(260))
        split_ok = all(
            w.input_states.shape[0] == INPUT_TICKS
            and w.label_states.shape[0] == LABEL_TICKS
            and abs((w.timestamps[INPUT_TICKS] - w.timestamps[INPUT_TICKS - 1])
                    - 0.05) < 1e-12
            for w in windows)
        r15 = min_turning_radius(circle_path(1.5))
        r50 = min_turning_radius(circle_path(5.0))
        straight = np.stack([np.arange(300) * 0.0625, np.zeros(300)], axis=1)
        r_inf = min_turning_radius(straight)
        filter_ok = (r15 < 2.0 and r50 >= 2.0 and math.isinf(r_inf)
                     and abs(r15 - 1.5) <= 0.1 and abs(r50 - 5.0) <= 0.3)
        elapsed = time.perf_counter() - t0
        ok = counts_ok and split_ok and filter_ok and elapsed < 10.0
        report("dataset-protocol", ok,
               f"window counts match formula: {counts_ok}, 150/50 tick-exact: "
               f"{split_ok}, curvature radii 1.5m->{r15:.2f} (include), "
               f"5m->{r50:.2f} (exclude), straight->inf, "
               f"runtime {elapsed:.1f}s < 10s")

    def test_exchange_round_trip(self, tmp_path):
        t0 = time.perf_counter()
        windows = window_sequences(synthetic_trajectory(240, seed=3), stride=40)
        export_training_set(windows, tmp_path / "xchg", stride=40)
        ws = import_training_set(tmp_path / "xchg")
        round_trip_ok = all(
            np.array_equal(np.asarray(ws.states[k]),
                           windows[k].states.astype(np.float32))
            and np.array_equal(np.asarray(ws.panoramas[k]),
                               windows[k].panoramas.astype(np.float32))
            for k in range(len(windows)))
        export_predictions(tmp_path / "preds", ws.label_states(),
                           ws.label_panoramas(), variant="identity",
                           source_manifest=ws.manifest)
        preds = import_predictions(tmp_path / "preds")
        cases = score_predictions(ws, preds)
        curves = horizon_curves(cases)
        zero_ok = all(np.all(curve.mean == 0.0) and np.all(curve.std == 0.0)
                      for curve in curves)
        elapsed = time.perf_counter() - t0
        ok = round_trip_ok and zero_ok and len(curves) == 5
        report("exchange-round-trip", ok,
               f"f32 export/import identity: {round_trip_ok}, identity "
               f"predictions score exactly 0 on all {len(curves)} metrics: "
               f"{zero_ok}, runtime {elapsed:.1f}s")
