"""Acceptance suite for the predictor package.

Builds its own corpus by driving the swayscope CLI (the data producer's
external interface), trains the shipped configuration from scratch, and
checks every release criterion, printing one line per criterion. The
vision-vs-no-vision comparison is scored by the swayscope eval CLI on
exported prediction directories, so the whole exchange contract is
exercised end to end.

This suite trains real models on CPU; expect roughly half an hour.
"""

import hashlib
import json
import subprocess
import sys

import numpy as np
import pytest
import torch

from panopredict.exchange import (
    INPUT_TICKS,
    LABEL_TICKS,
    read_windows,
)
from panopredict.models import PanoramaVAE, SequencePredictor, count_parameters
from panopredict.report import format_study, horizon_study
from panopredict.training import (
    PredictorTrainConfig,
    VaeTrainConfig,
    evaluate_vae,
    load_vae,
    predict,
    rollout_states,
    train_predictor,
    train_vae,
)

SEED = 20260810
torch.set_num_threads(2)


def report(name, ok, detail):
    print(f"[{'PASS' if ok else 'FAIL'}] {name}: {detail}")
    assert ok, f"{name}: {detail}"


def swayscope(*args):
    cmd = [sys.executable, "-m", "swayscope.cli", *map(str, args)]
    run = subprocess.run(cmd, capture_output=True, text=True)
    assert run.returncode == 0, f"{cmd}: {run.stderr}"
    return run.stdout


@pytest.fixture(scope="session")
def corpus(tmp_path_factory):
    """Walk corpus + the three exchange exports, all via the swayscope CLI."""
    base = tmp_path_factory.mktemp("corpus")
    trials = base / "trials"
    for kind, count, seed0, prefix in (("indoor", 7, 100, "ind_"),
                                       ("outdoor_cluttered", 5, 300, "clu_")):
        swayscope("simulate", "--mode", "scene", "--scene", kind,
                  "--trials", count, "--seed", seed0, "--duration", 40,
                  "--name-prefix", prefix, "--out", trials)
    train_ids = ([f"ind_walk_{i:04d}" for i in range(4)]
                 + [f"clu_walk_{i:04d}" for i in range(4)])
    test_ids = [f"ind_walk_{i:04d}" for i in range(4, 7)]
    (base / "split_train.json").write_text(
        json.dumps({"train": train_ids, "test": []}))
    (base / "split_test.json").write_text(
        json.dumps({"train": [], "test": test_ids}))
    swayscope("dataset", "--input", trials, "--out", base / "xtrain",
              "--stride", 50, "--no-curvature-filter",
              "--split", base / "split_train.json")
    swayscope("dataset", "--input", trials, "--out", base / "xtest",
              "--stride", 50, "--split", base / "split_test.json")
    swayscope("dataset", "--input", trials, "--out", base / "xhorizon",
              "--stride", 50, "--no-curvature-filter",
              "--split", base / "split_test.json")
    return {
        "base": base,
        "train": base / "xtrain" / "train",
        "test": base / "xtest" / "test",
        "horizon": base / "xhorizon" / "test",
    }


@pytest.fixture(scope="session")
def vae_ckpt(corpus, tmp_path_factory):
    out = tmp_path_factory.mktemp("vae")
    windows = read_windows(corpus["train"])
    manifest = train_vae(windows, out, VaeTrainConfig(seed=SEED))
    digest = hashlib.sha256((out / "vae.pt").read_bytes()).hexdigest()
    return {"dir": out, "manifest": manifest, "file_sha256": digest}


@pytest.fixture(scope="session")
def predictors(corpus, vae_ckpt, tmp_path_factory):
    out = tmp_path_factory.mktemp("models")
    windows = read_windows(corpus["train"])
    manifests = {}
    for variant, no_vision in (("vision", False), ("no_vision", True)):
        manifests[variant] = train_predictor(
            windows, vae_ckpt["dir"], out / variant,
            PredictorTrainConfig(seed=SEED, no_vision=no_vision))
    return {"dir": out, "manifests": manifests}


class TestVae:
    def test_reconstruction_on_holdout(self, corpus, vae_ckpt):
        holdout = read_windows(corpus["test"])
        err = evaluate_vae(load_vae(vae_ckpt["dir"]), holdout)
        curve = [row["recon"] for row in vae_ckpt["manifest"]["loss_curve"]]
        decreasing = curve[-1] < curve[0]
        latent_ok = vae_ckpt["manifest"]["latent_dim"] == 64
        ok = err < 0.5 and decreasing and latent_ok
        report("vae-reconstruction", ok,
               f"held-out depth-weighted L1 {err:.3f} m < 0.5 m, recon curve "
               f"{curve[0]:.0f} -> {curve[-1]:.0f} (decreasing: {decreasing}), "
               f"latent dim 64: {latent_ok}")

    def test_degenerate_dataset_collapses_fast(self, tmp_path):
        # all-empty panoramas: reconstruction is learned almost immediately
        from test_exchange import make_windows_dir
        make_windows_dir(tmp_path / "flat", n_windows=5, seed=1)
        panos = np.full((5, 200, 180, 360), 10.0, dtype="<f4")
        panos.tofile(tmp_path / "flat" / "panos.bin")
        windows = read_windows(tmp_path / "flat")
        manifest = train_vae(windows, tmp_path / "vae",
                             VaeTrainConfig(epochs=3, tick_stride=10,
                                            min_panoramas=100, seed=0))
        err = evaluate_vae(load_vae(tmp_path / "vae"), windows)
        report("vae-degenerate-dataset", err < 0.05,
               f"all-10.0 panoramas reconstruct to {err:.4f} m after 3 epochs")


class TestParameterBudget:
    def test_total_parameters(self):
        total = count_parameters(PanoramaVAE(), SequencePredictor())
        ok = 512_000 <= total <= 768_000
        report("parameter-budget", ok,
               f"{total} parameters within +-20% of 640K [512000, 768000]")


class TestPredictor:
    def test_overfit_ten_windows(self, corpus, vae_ckpt, tmp_path):
        src = read_windows(corpus["train"])
        sub = tmp_path / "ten"
        sub.mkdir()
        manifest = dict(src.manifest)
        manifest["n_windows"] = 10
        manifest["windows"] = manifest["windows"][:10]
        (sub / "manifest.json").write_text(json.dumps(manifest))
        np.asarray(src.states[:10], dtype="<f4").tofile(sub / "states.bin")
        np.asarray(src.panoramas[:10], dtype="<f4").tofile(sub / "panos.bin")
        ten = read_windows(sub)
        cfg = PredictorTrainConfig(epochs=260, batch_size=10, seed=SEED,
                                   pano_tick_stride=50, lr=2e-3)
        train_predictor(ten, vae_ckpt["dir"], tmp_path / "overfit", cfg)
        states, _ = rollout_states(ten, tmp_path / "overfit")
        truth = np.asarray(ten.states[:, INPUT_TICKS:], dtype=np.float64)
        per_channel = np.abs(states - truth).mean(axis=(0, 1))
        worst = float(per_channel.max())
        report("predictor-overfit", worst < 0.05,
               f"10-window overfit: worst per-channel state L1 {worst:.4f} < 0.05")

    def test_vae_freeze_invariant(self, vae_ckpt, predictors):
        digest_now = hashlib.sha256(
            (vae_ckpt["dir"] / "vae.pt").read_bytes()).hexdigest()
        file_ok = digest_now == vae_ckpt["file_sha256"]
        hashes = {v: m["vae_sha256"] for v, m in predictors["manifests"].items()}
        weights_ok = len(set(hashes.values())) == 1
        report("vae-freeze-invariant", file_ok and weights_ok,
               f"vae.pt bytes unchanged through stage 2: {file_ok}; "
               f"training-time weight hash identical for both variants: {weights_ok}")

    def test_vision_not_worse_on_sway_area(self, corpus, predictors, tmp_path):
        windows = read_windows(corpus["test"])
        for variant in ("vision", "no_vision"):
            predict(windows, predictors["dir"] / variant,
                    tmp_path / f"pred_{variant}", variant=variant)
        swayscope("eval", "--windows", corpus["test"],
                  "--predictions", tmp_path / "pred_vision",
                  tmp_path / "pred_no_vision", "--out", tmp_path / "eval")
        means = {}
        with open(tmp_path / "eval" / "horizon.csv") as fh:
            header = fh.readline().strip().split(",")
            for line in fh:
                row = dict(zip(header, line.strip().split(",")))
                if row["metric"] == "sway_area":
                    means.setdefault(row["variant"], []).append(float(row["mean"]))
        vision = float(np.mean(means["vision"]))
        blind = float(np.mean(means["no_vision"]))
        report("vision-sway-advantage", vision <= blind,
               f"corridor test split mean sway-area loss: vision {vision:.4g} "
               f"<= no-vision {blind:.4g} "
               f"(ratio {vision / blind:.2f})")

    def test_extended_horizon_report(self, corpus, predictors, tmp_path):
        windows = read_windows(corpus["horizon"])
        results = horizon_study(
            windows,
            {"vision": predictors["dir"] / "vision",
             "no_vision": predictors["dir"] / "no_vision"},
            horizon_s=7.5, out_dir=tmp_path / "study")
        text = format_study(results)
        print(text)
        covers_6s = results["_horizon_s"][-1] >= 6.0
        finite = all(np.all(np.isfinite(results[k]))
                     for k in ("vision", "no_vision"))
        report("extended-horizon-report", covers_6s and finite,
               "position-loss study out to "
               f"{results['_horizon_s'][-1]:.1f} s reported above "
               "(degradation trend reported, not asserted)")
