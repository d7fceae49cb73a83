"""Extended-horizon study: position error of vision vs no-vision rollouts
well past the 2.5 s label span.

Works on a stride-50 window export: window w of a trajectory starts 50
ticks after window w-1, so the label spans tile the trajectory and the
true state at input-relative tick 150 + j of window w equals the label
tick of window w + j // 50. Each window is rolled out autoregressively for
the full horizon and scored against that reconstructed truth.

The 10 m panorama cap means the walker out-runs its visual information in
roughly 10 m / speed seconds; the report surfaces where the vision
model's advantage degrades. Findings are reported, not asserted.
"""

from __future__ import annotations

import csv
from collections import defaultdict
from pathlib import Path

import numpy as np

from .exchange import INPUT_TICKS, LABEL_TICKS, POS, TICK_SECONDS, WindowSet
from .training import rollout_states


def _contiguous_chains(manifest: dict, needed_followers: int) -> list:
    """Indices of windows with enough stride-50 followers from one source."""
    windows = manifest["windows"]
    chains = []
    for i, info in enumerate(windows):
        ok = True
        for m in range(1, needed_followers + 1):
            j = i + m
            if (j >= len(windows)
                    or windows[j]["source_id"] != info["source_id"]
                    or windows[j]["start_tick"] != info["start_tick"] + 50 * m):
                ok = False
                break
        if ok:
            chains.append(i)
    return chains


def extended_truth(windows: WindowSet, index: int, horizon: int) -> np.ndarray:
    """True states for input-relative ticks 150 .. 150+horizon-1."""
    out = np.zeros((horizon, windows.states.shape[2]), dtype=np.float64)
    for j in range(horizon):
        follower = j // LABEL_TICKS
        local = INPUT_TICKS + (j % LABEL_TICKS)
        out[j] = windows.states[index + follower][local]
    return out


def horizon_study(windows: WindowSet, model_dirs: dict, horizon_s: float = 7.5,
                  out_dir=None) -> dict:
    """Mean position error per horizon for each model; stride-50 sets only.

    model_dirs maps a display name (e.g. "vision") to a checkpoint dir.
    Returns {name: (horizon_ticks,) mean error} plus the horizon axis under
    key "_horizon_s"; writes extended_horizon.csv when out_dir is given.
    """
    if windows.manifest.get("stride") != 50:
        raise ValueError("the horizon study needs a stride-50 window export")
    horizon = int(round(horizon_s / TICK_SECONDS))
    followers = (horizon - 1) // LABEL_TICKS + 1
    usable = _contiguous_chains(windows.manifest, followers)
    if not usable:
        raise ValueError("no window has enough stride-50 followers for the horizon")

    truths = np.stack([extended_truth(windows, i, horizon) for i in usable])
    results = {"_horizon_s": (np.arange(horizon) + 1) * TICK_SECONDS,
               "_n_windows": len(usable)}
    for name, model_dir in model_dirs.items():
        states, _ = rollout_states(windows, model_dir, horizon=horizon)
        err = np.linalg.norm(states[usable][:, :, POS] - truths[:, :, POS],
                             axis=2)
        results[name] = err.mean(axis=0)
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        with open(out / "extended_horizon.csv", "w", newline="") as fh:
            writer = csv.writer(fh)
            names = [n for n in results if not n.startswith("_")]
            writer.writerow(["horizon_s"] + [f"position_{n}" for n in names])
            for k in range(horizon):
                writer.writerow([f"{results['_horizon_s'][k]:.2f}"]
                                + [f"{results[n][k]:.6f}" for n in names])
    return results


def format_study(results: dict, marks_s=(1.0, 2.5, 4.0, 6.0, 7.5)) -> str:
    """Human-readable summary table of the extended-horizon study."""
    names = [n for n in results if not n.startswith("_")]
    horizon_s = results["_horizon_s"]
    lines = [f"extended horizon study over {results['_n_windows']} windows",
             "horizon_s  " + "  ".join(f"{n:>12s}" for n in names)]
    for mark in marks_s:
        k = int(round(mark / TICK_SECONDS)) - 1
        if k >= horizon_s.size:
            continue
        lines.append(f"{mark:9.2f}  "
                     + "  ".join(f"{results[n][k]:12.3f}" for n in names))
    if {"vision", "no_vision"} <= set(names):
        adv = results["no_vision"] - results["vision"]
        lines.append("vision advantage (no_vision - vision error), by horizon:")
        for mark in marks_s:
            k = int(round(mark / TICK_SECONDS)) - 1
            if k < horizon_s.size:
                lines.append(f"  {mark:4.1f} s: {adv[k]:+.3f} m")
        late = adv[int(round(6.0 / TICK_SECONDS)) - 1:] if horizon_s[-1] >= 6.0 else adv[-10:]
        early = adv[:int(round(2.5 / TICK_SECONDS))]
        lines.append(
            f"mean advantage before 2.5 s: {early.mean():+.3f} m; "
            f"after 6 s: {late.mean():+.3f} m"
            " (degradation expected once the walker out-runs the 10 m panorama)")
    return "\n".join(lines)
