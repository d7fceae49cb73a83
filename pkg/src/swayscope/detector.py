"""Perturbation detection from sway-area and torso-angle rate series.

The detection rule is threshold-over-noise: a robust noise scale (1.4826 x
median absolute deviation of the rectified series outside known event
windows) defines the floor, an event opens when |value| exceeds
threshold_mult x floor, its peak is tracked over a refractory span, and no
two events may open closer than the refractory. Because the threshold is
noise-relative, the detected event set is invariant under uniform scaling
of the series.

compare_metrics runs the same machinery on the sway-area rate
(delta_sigma_z) and on the torso tilt rate (delta_theta_z) over identical
trials, producing a paired report.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field, asdict
from typing import Sequence

import numpy as np

from .core import InsufficientDataError, InvalidInputError, DataError
from .sway import (
    DEFAULT_WINDOW,
    project_orientation_array,
    sway_series,
    torso_tilt_series,
)

MAD_TO_SIGMA = 1.4826
DEFAULT_THRESHOLD_MULT = 5.0
DEFAULT_REFRACTORY_S = 2.5  # one sway window
MIN_NOISE_TICKS = 100

METRIC_SWAY = "sway_area"
METRIC_ANGLE = "torso_angle"


class UndefinedRatioError(DataError):
    """Peak-to-noise is undefined because the noise floor is zero."""


@dataclass(frozen=True)
class PerturbationEvent:
    onset: float
    peak_value: float
    peak_time: float
    metric: str


@dataclass
class DetectionReport:
    """Batch detection outcome for one metric."""

    metric: str
    n_trials: int = 0
    events: list = field(default_factory=list)         # (trial_index, event)
    true_events: list = field(default_factory=list)    # (trial_index, onset, magnitude)
    detection_rate: float | None = None
    false_positives_per_minute: float = 0.0
    mean_peak_to_noise: float | None = None
    mean_peak_over_mean: float | None = None
    mean_detection_latency: float | None = None
    by_magnitude: dict = field(default_factory=dict)

    def to_json(self) -> dict:
        out = {
            "metric": self.metric,
            "n_trials": self.n_trials,
            "n_events": len(self.events),
            "n_true_events": len(self.true_events),
            "detection_rate": self.detection_rate,
            "false_positives_per_minute": self.false_positives_per_minute,
            "mean_peak_to_noise": self.mean_peak_to_noise,
            "mean_peak_over_mean": self.mean_peak_over_mean,
            "mean_detection_latency": self.mean_detection_latency,
            "by_magnitude": {str(k): v for k, v in self.by_magnitude.items()},
            "events": [
                {"trial": t, **asdict(e)} for t, e in self.events
            ],
            "true_events": [
                {"trial": t, "onset": onset, "magnitude": mag}
                for t, onset, mag in self.true_events
            ],
        }
        return out


def noise_floor(values: np.ndarray, timestamps: np.ndarray | None = None,
                exclusions: Sequence[tuple] = ()) -> float:
    """Robust scale of a rate series outside excluded windows.

    Computes 1.4826 x MAD of |values| using only ticks outside every
    (start, end) exclusion window. Requires at least 100 unexcluded ticks.
    """
    values = np.asarray(values, dtype=float)
    if timestamps is None:
        timestamps = np.arange(values.size) * 0.05
    timestamps = np.asarray(timestamps, dtype=float)
    keep = np.ones(values.size, dtype=bool)
    for start, end in exclusions:
        keep &= ~((timestamps >= start) & (timestamps <= end))
    kept = np.abs(values[keep])
    if kept.size < MIN_NOISE_TICKS:
        raise InsufficientDataError(
            f"need >= {MIN_NOISE_TICKS} ticks outside exclusions, got {kept.size}")
    med = np.median(kept)
    return float(MAD_TO_SIGMA * np.median(np.abs(kept - med)))


def detect_events(values: np.ndarray, timestamps: np.ndarray,
                  metric: str = METRIC_SWAY,
                  threshold_mult: float = DEFAULT_THRESHOLD_MULT,
                  refractory: float = DEFAULT_REFRACTORY_S,
                  floor: float | None = None) -> list:
    """Threshold detection with a refractory span.

    An event opens at the first tick where |value| exceeds threshold_mult x
    noise floor. Super-threshold ticks closer than the refractory merge
    into the same event (so a perturbation's recovery tail cannot re-
    trigger), which also guarantees no two onsets are closer than the
    refractory. The recorded peak is the signed value of largest magnitude
    over the event span (at least [onset, onset + refractory]).
    """
    values = np.asarray(values, dtype=float)
    timestamps = np.asarray(timestamps, dtype=float)
    if values.shape != timestamps.shape:
        raise InvalidInputError("values and timestamps must align")
    if floor is None:
        floor = noise_floor(values, timestamps)
    threshold = threshold_mult * floor
    hot_idx = np.flatnonzero(np.abs(values) > threshold)
    events = []
    group: list = []
    for idx in hot_idx:
        if group and timestamps[idx] - timestamps[group[-1]] >= refractory:
            events.append(_close_event(values, timestamps, group, refractory, metric))
            group = []
        group.append(idx)
    if group:
        events.append(_close_event(values, timestamps, group, refractory, metric))
    return events


def _close_event(values, timestamps, group, refractory, metric) -> PerturbationEvent:
    onset = timestamps[group[0]]
    end = max(timestamps[group[-1]], onset + refractory)
    span = (timestamps >= onset) & (timestamps <= end)
    seg_vals = values[span]
    seg_times = timestamps[span]
    peak_idx = int(np.argmax(np.abs(seg_vals)))
    return PerturbationEvent(
        onset=float(onset),
        peak_value=float(seg_vals[peak_idx]),
        peak_time=float(seg_times[peak_idx]),
        metric=metric,
    )


def peak_to_noise(values: np.ndarray, timestamps: np.ndarray,
                  true_onsets: Sequence[float],
                  window_s: float = DEFAULT_REFRACTORY_S):
    """Per-event ratio of post-onset peak magnitude to the noise floor.

    The floor is computed with the event windows excluded. Also returns the
    peak-over-baseline-mean ratios, since published jump figures may be
    quoted against the baseline mean rather than the noise scale.
    """
    values = np.asarray(values, dtype=float)
    timestamps = np.asarray(timestamps, dtype=float)
    exclusions = [(onset, onset + window_s) for onset in true_onsets]
    floor = noise_floor(values, timestamps, exclusions)
    if floor <= 0.0:
        raise UndefinedRatioError("noise floor is zero; peak-to-noise undefined")
    keep = np.ones(values.size, dtype=bool)
    for start, end in exclusions:
        keep &= ~((timestamps >= start) & (timestamps <= end))
    baseline_mean = float(np.mean(np.abs(values[keep])))
    ratios, over_mean = [], []
    for onset in true_onsets:
        span = (timestamps >= onset) & (timestamps <= onset + window_s)
        if not np.any(span):
            ratios.append(math.nan)
            over_mean.append(math.nan)
            continue
        peak = float(np.max(np.abs(values[span])))
        ratios.append(peak / floor)
        over_mean.append(peak / baseline_mean if baseline_mean > 0 else math.nan)
    valid = [r for r in ratios if not math.isnan(r)]
    mean_ratio = float(np.mean(valid)) if valid else None
    return ratios, over_mean, mean_ratio


@dataclass(frozen=True)
class TrialTraces:
    """Aligned metric traces of one trial (sway values start after warm-up)."""

    sway_timestamps: np.ndarray
    sigma_z: np.ndarray
    delta_sigma_z: np.ndarray
    tilt_timestamps: np.ndarray
    theta_z: np.ndarray
    delta_theta_z: np.ndarray


def trial_traces(trial, window_len: int = DEFAULT_WINDOW) -> TrialTraces:
    """Compute both candidate metrics from a trial's orientation stream."""
    quats = trial.quaternions()
    times = trial.timestamps()
    proj = project_orientation_array(quats)
    sw = sway_series(proj, window_len=window_len, timestamps=times)
    tilt = torso_tilt_series(quats, timestamps=times)
    return TrialTraces(sw.timestamps, sw.sigma_z, sw.delta_sigma_z,
                       tilt.timestamps, tilt.theta_z, tilt.delta_theta_z)


def _metric_series(traces: TrialTraces, metric: str):
    if metric == METRIC_SWAY:
        return traces.delta_sigma_z, traces.sway_timestamps
    if metric == METRIC_ANGLE:
        return traces.delta_theta_z, traces.tilt_timestamps
    raise InvalidInputError(f"unknown metric {metric!r}")


def evaluate_batch(trials: Sequence, metric: str,
                   threshold_mult: float = DEFAULT_THRESHOLD_MULT,
                   refractory: float = DEFAULT_REFRACTORY_S,
                   window_len: int = DEFAULT_WINDOW,
                   traces: Sequence[TrialTraces] | None = None) -> DetectionReport:
    """Detect on every trial and score against simulator ground truth.

    A true event counts as detected when some event onset falls within
    [true onset, true onset + refractory]; unmatched events are false
    positives. Detection rate is None when the batch has no true events.
    """
    report = DetectionReport(metric=metric, n_trials=len(trials))
    latencies = []
    ptn_all, pom_all = [], []
    ptn_by_mag: dict = {}
    n_detected = 0
    total_minutes = 0.0
    for idx, trial in enumerate(trials):
        tr = traces[idx] if traces is not None else trial_traces(trial, window_len)
        values, times = _metric_series(tr, metric)
        total_minutes += (times[-1] - times[0]) / 60.0 if times.size > 1 else 0.0
        events = detect_events(values, times, metric=metric,
                               threshold_mult=threshold_mult,
                               refractory=refractory)
        report.events.extend((idx, e) for e in events)
        true_onsets = [p.onset for p in trial.truth]
        report.true_events.extend(
            (idx, p.onset, p.magnitude) for p in trial.truth)
        matched_events = set()
        for t_i, onset in enumerate(true_onsets):
            hit = None
            for e_i, ev in enumerate(events):
                if e_i in matched_events:
                    continue
                if onset <= ev.onset <= onset + refractory:
                    hit = e_i
                    break
            if hit is not None:
                matched_events.add(hit)
                n_detected += 1
                latencies.append(events[hit].onset - onset)
        fp = len(events) - len(matched_events)
        report.false_positives_per_minute += fp
        if true_onsets:
            ratios, over_mean, _ = peak_to_noise(values, times, true_onsets,
                                                 window_s=refractory)
            ptn_all.extend(r for r in ratios if not math.isnan(r))
            pom_all.extend(r for r in over_mean if not math.isnan(r))
            for p, r in zip(trial.truth, ratios):
                if not math.isnan(r):
                    ptn_by_mag.setdefault(p.magnitude, []).append(r)

    n_true = len(report.true_events)
    report.detection_rate = (n_detected / n_true) if n_true else None
    report.false_positives_per_minute = (
        report.false_positives_per_minute / total_minutes if total_minutes > 0 else 0.0)
    report.mean_peak_to_noise = float(np.mean(ptn_all)) if ptn_all else None
    report.mean_peak_over_mean = float(np.mean(pom_all)) if pom_all else None
    report.mean_detection_latency = float(np.mean(latencies)) if latencies else None
    report.by_magnitude = {}
    for mag, ratios in sorted(ptn_by_mag.items()):
        mag_true = [(t, o) for t, o, m in report.true_events if m == mag]
        mag_detected = 0
        for t_idx, onset in mag_true:
            for e_t, ev in report.events:
                if e_t == t_idx and onset <= ev.onset <= onset + refractory:
                    mag_detected += 1
                    break
        report.by_magnitude[mag] = {
            "n_true_events": len(mag_true),
            "detection_rate": mag_detected / len(mag_true) if mag_true else None,
            "mean_peak_to_noise": float(np.mean(ratios)),
        }
    return report


def compare_metrics(trials: Sequence,
                    threshold_mult: float = DEFAULT_THRESHOLD_MULT,
                    refractory: float = DEFAULT_REFRACTORY_S,
                    window_len: int = DEFAULT_WINDOW):
    """Head-to-head sway-area vs torso-angle detection on identical trials."""
    if len(trials) < 1:
        raise InsufficientDataError("need at least one trial")
    traces = [trial_traces(t, window_len) for t in trials]
    sway_report = evaluate_batch(trials, METRIC_SWAY, threshold_mult,
                                 refractory, window_len, traces=traces)
    angle_report = evaluate_batch(trials, METRIC_ANGLE, threshold_mult,
                                  refractory, window_len, traces=traces)
    return sway_report, angle_report


def write_report_json(path, reports: Sequence[DetectionReport]) -> None:
    with open(path, "w") as fh:
        json.dump({r.metric: r.to_json() for r in reports}, fh, indent=2)


def write_trace_csv(path, traces: TrialTraces, events: Sequence[PerturbationEvent],
                    refractory: float = DEFAULT_REFRACTORY_S) -> None:
    """Per-tick trace CSV; sway columns are empty during window warm-up."""
    flagged = [(e.onset, e.onset + refractory) for e in events]
    sway_start = traces.tilt_timestamps.size - traces.sway_timestamps.size
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["tick", "time_s", "sigma_z", "delta_sigma_z",
                         "theta_z", "delta_theta_z", "event_flag"])
        for k, t in enumerate(traces.tilt_timestamps):
            in_event = any(start <= t <= end for start, end in flagged)
            if k >= sway_start:
                sigma = f"{traces.sigma_z[k - sway_start]:.9g}"
                dsigma = f"{traces.delta_sigma_z[k - sway_start]:.9g}"
            else:
                sigma = dsigma = ""
            writer.writerow([k, f"{t:.3f}", sigma, dsigma,
                             f"{traces.theta_z[k]:.9g}",
                             f"{traces.delta_theta_z[k]:.9g}",
                             int(in_event)])
