import numpy as np
import pytest

from swayscope.core import InsufficientDataError
from swayscope.detector import (
    METRIC_ANGLE,
    METRIC_SWAY,
    UndefinedRatioError,
    compare_metrics,
    detect_events,
    evaluate_batch,
    noise_floor,
    peak_to_noise,
    trial_traces,
    write_report_json,
    write_trace_csv,
)
from swayscope.simgait import (
    PerturbationSpec,
    WalkConfig,
    make_control_batch,
    make_treadmill_batch,
    simulate_treadmill_trial,
)


def ticks(n):
    return np.arange(n) * 0.05


class TestNoiseFloor:
    def test_constant_series(self):
        assert noise_floor(np.full(200, 3.0)) == 0.0

    def test_gaussian_matches_monte_carlo(self):
        # oracle: the MAD-scale of |N(0,1)| estimated from 10^6 samples
        rng = np.random.default_rng(100)
        big = np.abs(rng.standard_normal(1_000_000))
        oracle = 1.4826 * np.median(np.abs(big - np.median(big)))
        sigma = 0.37
        sample = sigma * rng.standard_normal(50_000)
        got = noise_floor(sample)
        assert got == pytest.approx(sigma * oracle, rel=0.02)

    def test_exclusion_contract(self):
        rng = np.random.default_rng(101)
        base = rng.standard_normal(2000)
        spiked = base.copy()
        spiked[1000:1010] += 500.0
        t = ticks(2000)
        window = [(t[1000], t[1009])]
        clean = noise_floor(base, t, exclusions=window)
        excluded = noise_floor(spiked, t, exclusions=window)
        assert excluded == clean
        # and the spike is invisible: same result as the spike-free series
        assert abs(excluded - noise_floor(base, t)) < 0.05 * clean

    def test_too_few_ticks(self):
        with pytest.raises(InsufficientDataError):
            noise_floor(np.ones(50))
        with pytest.raises(InsufficientDataError):
            noise_floor(np.ones(200), ticks(200), exclusions=[(0.0, 7.5)])


class TestDetectEvents:
    def test_flat_series(self):
        rng = np.random.default_rng(1)
        vals = rng.standard_normal(500)
        assert detect_events(vals * 0.0 + 0.01, ticks(500), floor=0.01) == []

    def test_single_spike(self):
        # bounded background noise: uniform never crosses 5x its MAD scale
        rng = np.random.default_rng(2)
        vals = rng.uniform(-0.1, 0.1, size=1000)
        vals[400] = 30.0
        events = detect_events(vals, ticks(1000))
        assert len(events) == 1
        assert events[0].onset == pytest.approx(400 * 0.05)
        assert events[0].peak_value == pytest.approx(30.0)

    def test_refractory_merge(self):
        rng = np.random.default_rng(3)
        vals = rng.uniform(-0.1, 0.1, size=2000)
        vals[500] = 25.0
        vals[520] = 40.0  # 1 s later -> same event
        events = detect_events(vals, ticks(2000))
        assert len(events) == 1
        assert events[0].peak_value == pytest.approx(40.0)

    def test_separate_events(self):
        rng = np.random.default_rng(4)
        vals = rng.uniform(-0.1, 0.1, size=2000)
        vals[500] = 25.0
        vals[800] = -25.0  # 15 s later -> distinct
        events = detect_events(vals, ticks(2000))
        assert len(events) == 2
        assert events[1].peak_value == pytest.approx(-25.0)
        assert events[1].onset - events[0].onset >= 2.5

    def test_scale_invariance(self):
        rng = np.random.default_rng(5)
        vals = rng.uniform(-0.2, 0.2, size=3000)
        vals[700] = 8.0
        vals[1500] = -6.5
        base = detect_events(vals, ticks(3000))
        scaled = detect_events(3.0 * vals, ticks(3000))
        assert [e.onset for e in base] == [e.onset for e in scaled]
        assert len(base) == 2


class TestPeakToNoise:
    def test_constructed_ratio(self):
        rng = np.random.default_rng(6)
        vals = rng.standard_normal(4000)
        floor = noise_floor(vals, ticks(4000), exclusions=[(100.0, 102.5)])
        vals[2000] = 4.0 * floor
        ratios, _, mean = peak_to_noise(vals, ticks(4000), [100.0])
        assert ratios[0] == pytest.approx(4.0, rel=0.05)
        assert mean == pytest.approx(ratios[0])

    def test_zero_floor_raises(self):
        vals = np.zeros(1000)
        vals[500] = 1.0
        with pytest.raises(UndefinedRatioError):
            peak_to_noise(vals, ticks(1000), [500 * 0.05])


class TestSimulatorIntegration:
    def test_one_event_per_perturbation(self):
        cfg = WalkConfig(duration=60.0, seed=12)
        specs = [PerturbationSpec(18.0, "front", 0.15),
                 PerturbationSpec(40.0, "left", 0.15)]
        trial = simulate_treadmill_trial(cfg, specs)
        tr = trial_traces(trial)
        events = detect_events(tr.delta_sigma_z, tr.sway_timestamps)
        assert len(events) == 2
        for spec, event in zip(specs, events):
            assert spec.onset <= event.onset <= spec.onset + 2.5

    def test_zero_false_positives_on_controls(self):
        controls = make_control_batch(6, seed=500, duration=50.0)
        for trial in controls:
            tr = trial_traces(trial)
            assert detect_events(tr.delta_sigma_z, tr.sway_timestamps) == []

    def test_magnitude_ordering_and_metric_superiority(self):
        trials = make_treadmill_batch(12, seed=300, duration=50.0)
        sway_rep, angle_rep = compare_metrics(trials)
        assert sway_rep.mean_peak_to_noise > angle_rep.mean_peak_to_noise
        assert (sway_rep.by_magnitude[0.15]["mean_peak_to_noise"]
                > sway_rep.by_magnitude[0.075]["mean_peak_to_noise"])
        assert (angle_rep.by_magnitude[0.15]["mean_peak_to_noise"]
                > angle_rep.by_magnitude[0.075]["mean_peak_to_noise"])
        assert sway_rep.detection_rate >= angle_rep.detection_rate

    def test_paired_ratio_per_trial(self):
        trials = make_treadmill_batch(8, seed=900, duration=50.0)
        traces = [trial_traces(t) for t in trials]
        sway_rep = evaluate_batch(trials, METRIC_SWAY, traces=traces)
        angle_rep = evaluate_batch(trials, METRIC_ANGLE, traces=traces)
        assert sway_rep.mean_peak_to_noise / angle_rep.mean_peak_to_noise > 1.0


class TestCompareMetrics:
    def test_zero_perturbation_trials(self):
        controls = make_control_batch(2, seed=40, duration=40.0)
        sway_rep, angle_rep = compare_metrics(controls)
        assert sway_rep.detection_rate is None
        assert angle_rep.detection_rate is None
        assert sway_rep.false_positives_per_minute == 0.0

    def test_single_trial_plumbing(self):
        trial = simulate_treadmill_trial(
            WalkConfig(duration=45.0, seed=2),
            [PerturbationSpec(20.0, "back", 0.15)])
        sway_rep, angle_rep = compare_metrics([trial])
        assert sway_rep.n_trials == 1
        assert angle_rep.n_trials == 1
        assert len(sway_rep.true_events) == 1

    def test_report_serialization(self, tmp_path):
        trial = simulate_treadmill_trial(
            WalkConfig(duration=45.0, seed=2),
            [PerturbationSpec(20.0, "right", 0.15)])
        sway_rep, angle_rep = compare_metrics([trial])
        path = tmp_path / "report.json"
        write_report_json(path, [sway_rep, angle_rep])
        import json
        data = json.loads(path.read_text())
        assert data["sway_area"]["detection_rate"] == sway_rep.detection_rate
        assert data["torso_angle"]["n_trials"] == 1

    def test_trace_csv(self, tmp_path):
        trial = simulate_treadmill_trial(
            WalkConfig(duration=45.0, seed=3),
            [PerturbationSpec(20.0, "front", 0.15)])
        tr = trial_traces(trial)
        events = detect_events(tr.delta_sigma_z, tr.sway_timestamps)
        path = tmp_path / "trace.csv"
        write_trace_csv(path, tr, events)
        lines = path.read_text().splitlines()
        assert lines[0] == "tick,time_s,sigma_z,delta_sigma_z,theta_z,delta_theta_z,event_flag"
        assert len(lines) == 1 + tr.tilt_timestamps.size
        # warm-up rows carry empty sway columns
        assert lines[1].split(",")[2] == ""
        flagged = [line for line in lines[1:] if line.endswith(",1")]
        assert flagged
