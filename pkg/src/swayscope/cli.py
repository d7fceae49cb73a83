"""Command-line entry point: simulate, detect, dataset, eval.

Exit codes: 0 success, 2 usage, 3 data/schema, 4 I/O. Every run writes its
fully resolved configuration to run_config.json in the output directory,
and --json prints a machine-readable summary to stdout. Relative output
paths resolve under $SWAYSCOPE_OUTPUT_ROOT when it is set.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import dataset as ds
from . import detector, evaluate, simgait
from .core import DataError, InvalidInputError

OUTPUT_ROOT_ENV = "SWAYSCOPE_OUTPUT_ROOT"


def _resolve_out(path: str) -> Path:
    p = Path(path)
    root = os.environ.get(OUTPUT_ROOT_ENV)
    if root and not p.is_absolute():
        p = Path(root) / p
    return p


def _write_run_config(out_dir: Path, args: argparse.Namespace) -> None:
    out_dir.mkdir(parents=True, exist_ok=True)
    resolved = {k: (str(v) if isinstance(v, Path) else v)
                for k, v in sorted(vars(args).items()) if k != "func"}
    with open(out_dir / "run_config.json", "w") as fh:
        json.dump(resolved, fh, indent=2)


def _emit(summary: dict, as_json: bool) -> None:
    if as_json:
        print(json.dumps(summary, indent=2))
    else:
        for key, value in summary.items():
            print(f"{key}: {value}")


# ---------------------------------------------------------------------------
# simulate
# ---------------------------------------------------------------------------

def _simulate_one_treadmill(job) -> str:
    out_dir, index, seed, duration, magnitude, cfg_kwargs, is_control, prefix = job
    cfg = simgait.WalkConfig(seed=seed + index, duration=duration,
                             scene="treadmill", **cfg_kwargs)
    if is_control:
        specs = []
        name = f"{prefix}control_{index:04d}"
    else:
        schedule = simgait.schedule_perturbations(duration, seed + index)
        if magnitude == "mixed":
            mag = simgait.MAGNITUDES[index % 2]
        else:
            mag = float(magnitude)
        specs = [replace(s, magnitude=mag) for s in schedule]
        name = f"{prefix}trial_{index:04d}"
    trial = simgait.simulate_treadmill_trial(cfg, specs)
    ds.save_trial(Path(out_dir) / name, trial, name,
                  extra_meta={"seed": seed + index, "duration": duration})
    return name


def _simulate_one_scene(job) -> str:
    out_dir, index, seed, scene_kind, duration, speed, scene_json, route, prefix = job
    cfg = simgait.WalkConfig(seed=seed + index, duration=duration, speed=speed,
                             scene=scene_kind)
    if scene_json is not None:
        scene = simgait.Scene.from_json(scene_json)
        waypoints = np.asarray(route, dtype=float)
    else:
        scene = simgait.make_scene(scene_kind, seed + index)
        waypoints = simgait.default_route(scene_kind, seed + index)
    trial = simgait.simulate_walk_scene(cfg, waypoints, scene=scene)
    name = f"{prefix}walk_{index:04d}"
    ds.save_trial(Path(out_dir) / name, trial, name,
                  extra_meta={"seed": seed + index, "scene": scene_kind})
    return name


def cmd_simulate(args: argparse.Namespace) -> int:
    if args.duration <= 0:
        raise InvalidInputError("--duration must be > 0")
    if args.trials < 0 or args.controls < 0:
        raise InvalidInputError("--trials/--controls must be >= 0")
    out = _resolve_out(args.out)
    _write_run_config(out, args)
    names = []
    if args.mode == "treadmill":
        jobs = [(str(out), i, args.seed, args.duration, args.magnitude,
                 {"sway_noise_scale": args.noise,
                  "baseline_sway_deg": args.baseline_sway,
                  "step_frequency": args.step_frequency}, False,
                 args.name_prefix)
                for i in range(args.trials)]
        jobs += [(str(out), i, args.seed + 500_000, args.duration, args.magnitude,
                  {"sway_noise_scale": args.noise,
                   "baseline_sway_deg": args.baseline_sway,
                   "step_frequency": args.step_frequency}, True,
                  args.name_prefix)
                 for i in range(args.controls)]
        worker = _simulate_one_treadmill
    else:
        scene_json = None
        route = None
        if args.scene_file:
            with open(args.scene_file) as fh:
                scene_json = json.load(fh)
            if not args.route_file:
                raise InvalidInputError("--scene-file requires --route-file")
            with open(args.route_file) as fh:
                route = json.load(fh)
        jobs = [(str(out), i, args.seed, args.scene, args.duration, args.speed,
                 scene_json, route, args.name_prefix)
                for i in range(args.trials)]
        worker = _simulate_one_scene
    if args.workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=args.workers) as pool:
            names = sorted(pool.map(worker, jobs))
    else:
        names = sorted(worker(job) for job in jobs)
    _emit({"out": str(out), "mode": args.mode, "trials": len(names),
           "seed": args.seed}, args.json)
    return 0


# ---------------------------------------------------------------------------
# detect
# ---------------------------------------------------------------------------

def _trial_dirs(input_dir: Path) -> list:
    dirs = sorted(p for p in Path(input_dir).iterdir()
                  if p.is_dir() and (p / "states.csv").exists())
    if not dirs:
        raise DataError(f"no trial directories under {input_dir}")
    return dirs


def cmd_detect(args: argparse.Namespace) -> int:
    out = _resolve_out(args.out)
    _write_run_config(out, args)
    trials = []
    names = []
    for trial_dir in _trial_dirs(Path(args.input)):
        trial, _ = ds.load_trial(trial_dir)
        trials.append(trial)
        names.append(trial_dir.name)
    sway_report, angle_report = detector.compare_metrics(
        trials, threshold_mult=args.threshold_mult,
        refractory=args.refractory, window_len=args.window_len)
    detector.write_report_json(out / "report.json", [sway_report, angle_report])
    traces_dir = out / "traces"
    traces_dir.mkdir(exist_ok=True)
    for name, trial in zip(names, trials):
        tr = detector.trial_traces(trial, window_len=args.window_len)
        events = detector.detect_events(
            tr.delta_sigma_z, tr.sway_timestamps,
            threshold_mult=args.threshold_mult, refractory=args.refractory)
        detector.write_trace_csv(traces_dir / f"{name}.csv", tr, events,
                                 refractory=args.refractory)
    _emit({
        "out": str(out),
        "n_trials": len(trials),
        "sway_detection_rate": sway_report.detection_rate,
        "sway_false_positives_per_minute": sway_report.false_positives_per_minute,
        "sway_mean_peak_to_noise": sway_report.mean_peak_to_noise,
        "angle_detection_rate": angle_report.detection_rate,
        "angle_mean_peak_to_noise": angle_report.mean_peak_to_noise,
    }, args.json)
    return 0


# ---------------------------------------------------------------------------
# dataset
# ---------------------------------------------------------------------------

def _build_trajectory(job):
    trial_dir, queue_capacity = job
    trial, meta = ds.load_trial(Path(trial_dir))
    scenario = trial.scene_label
    return ds.trajectory_from_trial(trial, meta["trial_id"], scenario,
                                    queue_capacity=queue_capacity)


def cmd_dataset(args: argparse.Namespace) -> int:
    out = _resolve_out(args.out)
    _write_run_config(out, args)
    trial_dirs = _trial_dirs(Path(args.input))
    split = None
    if args.split:
        with open(args.split) as fh:
            split = json.load(fh)
        unknown = set(split) - {"train", "test"}
        if unknown:
            raise ds.SchemaError(f"split file has unknown keys {sorted(unknown)}")

    windows = []
    for trial_dir in trial_dirs:
        traj = _build_trajectory((trial_dir, args.queue_capacity))
        for window in ds.window_sequences(traj, stride=args.stride):
            if args.curvature_filter and not ds.passes_curvature_filter(
                    window.states[:, 0:2]):
                continue
            windows.append(window)

    summary = {"out": str(out), "n_trials": len(trial_dirs)}
    if split is None:
        ds.export_training_set(windows, out, stride=args.stride)
        summary["n_windows"] = len(windows)
    else:
        for part in ("train", "test"):
            ids = set(split.get(part, []))
            part_windows = [w for w in windows if w.source_id in ids]
            ds.export_training_set(part_windows, out / part, stride=args.stride)
            summary[f"n_windows_{part}"] = len(part_windows)
    _emit(summary, args.json)
    return 0


# ---------------------------------------------------------------------------
# eval
# ---------------------------------------------------------------------------

def cmd_eval(args: argparse.Namespace) -> int:
    out = _resolve_out(args.out)
    _write_run_config(out, args)
    windows = ds.import_training_set(args.windows)
    prediction_sets = [ds.import_predictions(p) for p in args.predictions]
    curves = evaluate.horizon_report(windows, prediction_sets, out)
    summary = {"out": str(out), "n_windows": windows.n_windows,
               "variants": sorted({c.variant for c in curves}),
               "groups": len({(c.scenario, c.variant) for c in curves})}
    for curve in curves:
        if curve.metric in ("position", "sway_area"):
            key = f"{curve.scenario}/{curve.variant}/{curve.metric}_mean"
            summary[key] = float(np.mean(curve.mean))
    _emit(summary, args.json)
    return 0


# ---------------------------------------------------------------------------
# parser
# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="swayscope",
        description="Torso sway metrics, perturbation detection, depth "
                    "panoramas, and trajectory-prediction datasets.")
    sub = parser.add_subparsers(dest="command", required=True)

    p_sim = sub.add_parser("simulate", help="generate synthetic trials")
    p_sim.add_argument("--mode", choices=("treadmill", "scene"), default="treadmill")
    p_sim.add_argument("--trials", type=int, default=1)
    p_sim.add_argument("--controls", type=int, default=0,
                       help="additional unperturbed treadmill trials")
    p_sim.add_argument("--duration", type=float, default=50.0)
    p_sim.add_argument("--seed", type=int, default=0)
    p_sim.add_argument("--magnitude", default="mixed",
                       help="treadmill push magnitude: mixed, 0.075 or 0.15")
    p_sim.add_argument("--noise", type=float, default=simgait.WalkConfig.sway_noise_scale,
                       help="baseline angle jitter std [deg]")
    p_sim.add_argument("--baseline-sway", type=float,
                       default=simgait.WalkConfig.baseline_sway_deg)
    p_sim.add_argument("--step-frequency", type=float,
                       default=simgait.WalkConfig.step_frequency)
    p_sim.add_argument("--speed", type=float, default=simgait.WalkConfig.speed)
    p_sim.add_argument("--scene", choices=("indoor", "outdoor_cluttered",
                                           "outdoor_free"), default="indoor")
    p_sim.add_argument("--scene-file", help="scene geometry JSON")
    p_sim.add_argument("--route-file", help="waypoint JSON [[x,y],...]")
    p_sim.add_argument("--name-prefix", default="",
                       help="prefix for trial directory names")
    p_sim.add_argument("--workers", type=int, default=1)
    p_sim.add_argument("--out", required=True)
    p_sim.add_argument("--json", action="store_true")
    p_sim.set_defaults(func=cmd_simulate)

    p_det = sub.add_parser("detect", help="run perturbation detection")
    p_det.add_argument("--input", required=True, help="directory of trials")
    p_det.add_argument("--out", required=True)
    p_det.add_argument("--threshold-mult", type=float,
                       default=detector.DEFAULT_THRESHOLD_MULT)
    p_det.add_argument("--refractory", type=float,
                       default=detector.DEFAULT_REFRACTORY_S)
    p_det.add_argument("--window-len", type=int, default=50)
    p_det.add_argument("--json", action="store_true")
    p_det.set_defaults(func=cmd_detect)

    p_ds = sub.add_parser("dataset", help="build exchange-format windows")
    p_ds.add_argument("--input", required=True, help="directory of trials")
    p_ds.add_argument("--out", required=True)
    p_ds.add_argument("--stride", type=int, default=ds.DEFAULT_STRIDE)
    p_ds.add_argument("--queue-capacity", type=int,
                      default=ds.DEFAULT_QUEUE_CAPACITY)
    p_ds.add_argument("--no-curvature-filter", dest="curvature_filter",
                      action="store_false")
    p_ds.add_argument("--split", help="JSON file {train: [ids], test: [ids]}")
    p_ds.add_argument("--json", action="store_true")
    p_ds.set_defaults(func=cmd_dataset)

    p_ev = sub.add_parser("eval", help="score predictions and emit horizon curves")
    p_ev.add_argument("--windows", required=True, help="exchange dir with labels")
    p_ev.add_argument("--predictions", nargs="+", required=True,
                      help="one or more prediction dirs")
    p_ev.add_argument("--out", required=True)
    p_ev.add_argument("--json", action="store_true")
    p_ev.set_defaults(func=cmd_eval)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except InvalidInputError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 2
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 3
    except OSError as exc:
        print(f"io error: {exc}", file=sys.stderr)
        return 4


if __name__ == "__main__":
    sys.exit(main())
