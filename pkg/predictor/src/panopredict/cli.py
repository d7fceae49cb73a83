"""Command-line entry point: train-vae, train-predictor, predict,
report-horizon. All inputs and outputs are swayscope exchange directories
or checkpoint directories produced here."""

from __future__ import annotations

import argparse
import json
import sys

from .exchange import read_windows
from .report import format_study, horizon_study
from .training import (
    PredictorTrainConfig,
    VaeTrainConfig,
    evaluate_vae,
    load_vae,
    predict,
    train_predictor,
    train_vae,
)


def cmd_train_vae(args) -> int:
    windows = read_windows(args.windows)
    cfg = VaeTrainConfig(epochs=args.epochs, batch_size=args.batch_size,
                         lr=args.lr, seed=args.seed, alpha=args.alpha,
                         lam=args.lam, beta=args.beta,
                         tick_stride=args.tick_stride)
    manifest = train_vae(windows, args.out, cfg)
    if args.holdout:
        holdout = read_windows(args.holdout)
        err = evaluate_vae(load_vae(args.out), holdout)
        manifest["holdout_weighted_l1_m"] = err
    print(json.dumps({"out": args.out,
                      "parameters": manifest["parameters"],
                      "final_recon": manifest["loss_curve"][-1]["recon"],
                      "holdout_weighted_l1_m": manifest.get("holdout_weighted_l1_m")},
                     indent=2))
    return 0


def cmd_train_predictor(args) -> int:
    windows = read_windows(args.windows)
    cfg = PredictorTrainConfig(epochs=args.epochs, batch_size=args.batch_size,
                               lr=args.lr, seed=args.seed,
                               no_vision=args.no_vision,
                               pano_tick_stride=args.pano_tick_stride,
                               teacher_forcing=args.teacher_forcing)
    manifest = train_predictor(windows, args.vae, args.out, cfg)
    print(json.dumps({"out": args.out, "variant": manifest["variant"],
                      "total_parameters": manifest["total_parameters"],
                      "final_state_l1": manifest["loss_curve"][-1]["state_l1"]},
                     indent=2))
    return 0


def cmd_predict(args) -> int:
    windows = read_windows(args.windows)
    summary = predict(windows, args.model, args.out, variant=args.variant)
    print(json.dumps(summary, indent=2))
    return 0


def cmd_report_horizon(args) -> int:
    windows = read_windows(args.windows)
    models = {"vision": args.vision, "no_vision": args.blind}
    results = horizon_study(windows, models, horizon_s=args.horizon,
                            out_dir=args.out)
    print(format_study(results))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="panopredict")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train-vae", help="stage 1: panorama VAE")
    p.add_argument("--windows", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--holdout", help="window dir for held-out reconstruction error")
    p.add_argument("--epochs", type=int, default=VaeTrainConfig.epochs)
    p.add_argument("--batch-size", type=int, default=VaeTrainConfig.batch_size)
    p.add_argument("--lr", type=float, default=VaeTrainConfig.lr)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--alpha", type=float, default=VaeTrainConfig.alpha)
    p.add_argument("--lam", type=float, default=VaeTrainConfig.lam)
    p.add_argument("--beta", type=float, default=VaeTrainConfig.beta)
    p.add_argument("--tick-stride", type=int, default=VaeTrainConfig.tick_stride)
    p.set_defaults(func=cmd_train_vae)

    p = sub.add_parser("train-predictor", help="stage 2: frozen-VAE LSTM")
    p.add_argument("--windows", required=True)
    p.add_argument("--vae", required=True, help="stage-1 checkpoint dir")
    p.add_argument("--out", required=True)
    p.add_argument("--epochs", type=int, default=PredictorTrainConfig.epochs)
    p.add_argument("--batch-size", type=int,
                   default=PredictorTrainConfig.batch_size)
    p.add_argument("--lr", type=float, default=PredictorTrainConfig.lr)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--no-vision", action="store_true",
                   help="ablation: zero vector replaces the panorama latent")
    p.add_argument("--pano-tick-stride", type=int,
                   default=PredictorTrainConfig.pano_tick_stride)
    p.add_argument("--teacher-forcing",
                   choices=("scheduled", "always", "never"),
                   default=PredictorTrainConfig.teacher_forcing)
    p.set_defaults(func=cmd_train_predictor)

    p = sub.add_parser("predict", help="autoregressive 2.5 s prediction")
    p.add_argument("--windows", required=True)
    p.add_argument("--model", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--variant", help="override the variant name in the manifest")
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("report-horizon",
                       help="extended rollout study (vision vs no-vision)")
    p.add_argument("--windows", required=True, help="stride-50 window export")
    p.add_argument("--vision", required=True)
    p.add_argument("--blind", required=True)
    p.add_argument("--horizon", type=float, default=7.5)
    p.add_argument("--out")
    p.set_defaults(func=cmd_report_horizon)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
