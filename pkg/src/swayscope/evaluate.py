"""Prediction scoring and horizon curves.

Position and velocity predictions are scored by the per-tick Euclidean
distance between aligned vectors, sway area by a per-tick L1 difference,
and panoramas by a depth-weighted L1 that up-weights cells close to the
wearer: mean over cells of (1 - 0.5 * I / max(I)) * |Ihat - I| with I the
ground-truth grid. A cumulative-mean position column is emitted alongside
the per-tick losses since displacement-style reporting is common.

horizon_report aggregates per-case losses into mean/std per prediction
tick, grouped by (scenario, variant, metric), and writes the CSV contract
(scenario,variant,metric,horizon_s,mean,std,n) plus SVG line plots.
"""

from __future__ import annotations

import csv
from collections import defaultdict
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

from .core import InvalidInputError, ShapeError
from .dataset import LABEL_TICKS, PredictionSet, WindowSet
from .panorama import MAX_DEPTH_M

_POS = slice(0, 3)
_LINVEL = slice(7, 10)
_SWAY = 13

METRICS = ("position", "velocity", "sway_area", "panorama", "position_cum")


def traj_loss(pred: np.ndarray, truth: np.ndarray) -> np.ndarray:
    """Per-tick Euclidean distance between aligned 3-vector series."""
    pred = np.asarray(pred, dtype=float)
    truth = np.asarray(truth, dtype=float)
    if pred.shape != truth.shape:
        raise ShapeError(f"shape mismatch {pred.shape} vs {truth.shape}")
    if pred.ndim != 2 or pred.shape[1] != 3:
        raise InvalidInputError(f"expected (n, 3) series, got {pred.shape}")
    return np.linalg.norm(pred - truth, axis=1)


def area_loss(pred_sigma: np.ndarray, truth_sigma: np.ndarray) -> np.ndarray:
    """Per-tick L1 difference of predicted vs true sway ellipse area."""
    pred = np.asarray(pred_sigma, dtype=float)
    truth = np.asarray(truth_sigma, dtype=float)
    if pred.shape != truth.shape:
        raise ShapeError(f"shape mismatch {pred.shape} vs {truth.shape}")
    return np.abs(pred - truth)


def pano_loss(pred: np.ndarray, truth: np.ndarray, eps: float = 1e-9) -> float:
    """Depth-weighted L1 between panoramas, averaged over cells.

    The weight (1 - 0.5 * I / max(I)) halves the penalty at the far cap and
    keeps full weight near the wearer; an all-zero truth grid degenerates
    to weight 1 everywhere (max guarded at eps).
    """
    pred = np.asarray(pred, dtype=float)
    truth = np.asarray(truth, dtype=float)
    if pred.shape != truth.shape:
        raise ShapeError(f"shape mismatch {pred.shape} vs {truth.shape}")
    peak = max(float(truth.max()), eps)
    weight = 1.0 - 0.5 * truth / peak
    return float(np.mean(weight * np.abs(pred - truth)))


@dataclass(frozen=True)
class ScoredCase:
    """Per-tick losses of one predicted window."""

    scenario: str
    variant: str
    losses: dict  # metric -> (LABEL_TICKS,) array


@dataclass(frozen=True)
class HorizonCurve:
    scenario: str
    variant: str
    metric: str
    mean: np.ndarray
    std: np.ndarray
    n: int


def score_window(truth_states: np.ndarray, truth_panos: np.ndarray,
                 pred_states: np.ndarray, pred_panos: np.ndarray) -> dict:
    """All per-tick loss series for one window."""
    position = traj_loss(pred_states[:, _POS], truth_states[:, _POS])
    velocity = traj_loss(pred_states[:, _LINVEL], truth_states[:, _LINVEL])
    sway = area_loss(pred_states[:, _SWAY], truth_states[:, _SWAY])
    pano = np.array([pano_loss(pred_panos[k], truth_panos[k])
                     for k in range(truth_panos.shape[0])])
    cum = np.cumsum(position) / np.arange(1, position.size + 1)
    return {"position": position, "velocity": velocity, "sway_area": sway,
            "panorama": pano, "position_cum": cum}


def score_predictions(windows: WindowSet, preds: PredictionSet) -> list:
    """Score every predicted window against its labels."""
    if preds.n_windows != windows.n_windows:
        raise ShapeError(
            f"{preds.n_windows} predictions vs {windows.n_windows} windows")
    cases = []
    for w in range(windows.n_windows):
        losses = score_window(
            np.asarray(windows.label_states()[w], dtype=float),
            np.asarray(windows.label_panoramas()[w], dtype=float),
            np.asarray(preds.states[w], dtype=float),
            np.asarray(preds.panoramas[w], dtype=float),
        )
        cases.append(ScoredCase(scenario=windows.scenario(w),
                                variant=preds.variant, losses=losses))
    return cases


def horizon_curves(cases: Sequence[ScoredCase]) -> list:
    """Aggregate cases into mean/std per horizon tick per group."""
    groups = defaultdict(list)
    for case in cases:
        for metric, series in case.losses.items():
            groups[(case.scenario, case.variant, metric)].append(series)
    curves = []
    for (scenario, variant, metric), series_list in sorted(groups.items()):
        stack = np.stack(series_list)
        curves.append(HorizonCurve(
            scenario=scenario, variant=variant, metric=metric,
            mean=stack.mean(axis=0), std=stack.std(axis=0),
            n=stack.shape[0]))
    return curves


def write_horizon_csv(path, curves: Sequence[HorizonCurve],
                      tick_seconds: float = 0.05) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["scenario", "variant", "metric", "horizon_s",
                         "mean", "std", "n"])
        for curve in curves:
            for k in range(curve.mean.size):
                writer.writerow([
                    curve.scenario, curve.variant, curve.metric,
                    f"{(k + 1) * tick_seconds:.2f}",
                    f"{curve.mean[k]:.9g}", f"{curve.std[k]:.9g}", curve.n,
                ])


def plot_horizon_curves(out_dir, curves: Sequence[HorizonCurve],
                        tick_seconds: float = 0.05) -> list:
    """One SVG per (scenario, metric) with a mean +- std band per variant."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    by_figure = defaultdict(list)
    for curve in curves:
        by_figure[(curve.scenario, curve.metric)].append(curve)
    written = []
    for (scenario, metric), figure_curves in sorted(by_figure.items()):
        fig, ax = plt.subplots(figsize=(6, 4))
        for curve in figure_curves:
            horizon = (np.arange(curve.mean.size) + 1) * tick_seconds
            ax.plot(horizon, curve.mean, label=f"{curve.variant} (n={curve.n})")
            ax.fill_between(horizon, curve.mean - curve.std,
                            curve.mean + curve.std, alpha=0.2)
        ax.set_xlabel("prediction horizon [s]")
        ax.set_ylabel(metric)
        ax.set_title(f"{scenario}: {metric}")
        ax.legend()
        fig.tight_layout()
        path = out / f"horizon_{scenario}_{metric}.svg"
        fig.savefig(path)
        plt.close(fig)
        written.append(path)
    return written


def horizon_report(windows: WindowSet, prediction_sets: Sequence[PredictionSet],
                   out_dir) -> list:
    """Score every prediction set, emit CSVs per group and the figure SVGs.

    Returns the HorizonCurve list. horizon.csv holds every group; one
    additional CSV is written per (scenario, variant) group.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    cases = []
    for preds in prediction_sets:
        cases.extend(score_predictions(windows, preds))
    if not cases:
        raise InvalidInputError("no cases to report")
    curves = horizon_curves(cases)
    write_horizon_csv(out / "horizon.csv", curves)
    groups = defaultdict(list)
    for curve in curves:
        groups[(curve.scenario, curve.variant)].append(curve)
    for (scenario, variant), group_curves in sorted(groups.items()):
        write_horizon_csv(out / f"horizon_{scenario}_{variant}.csv", group_curves)
    plot_horizon_curves(out, curves)
    return curves
