"""Two-stage training and autoregressive inference.

Stage 1 trains the panorama VAE alone on every panorama of the training
windows. Stage 2 freezes the VAE (encoder and decoder), pre-encodes all
panoramas to latents, and optimizes the LSTM predictor on 150-in/50-out
windows with an L1 state loss plus the depth-weighted L1 on panoramas
decoded from predicted latents. Scheduled sampling ramps from teacher
forcing to full autoregression so training matches the autoregressive
evaluation regime.

Window preprocessing anchors each window at its last input tick: positions
become offsets from the anchor pose rotated into its heading, velocities
and orientations rotate accordingly. Channels are then z-scored with
statistics from the training windows. Predictions are de-normalized and
de-anchored before export, so the exchange files stay in the original
frame.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, asdict
from pathlib import Path

import numpy as np
import torch

from .exchange import (
    INPUT_TICKS,
    LABEL_TICKS,
    LINVEL,
    ANGVEL,
    POS,
    QUAT,
    WINDOW_TICKS,
    WindowSet,
    read_windows,
    write_predictions,
)
from .losses import info_vae_loss, weighted_l1
from .models import (
    LATENT_DIM,
    STATE_SIZE,
    PanoramaVAE,
    SequencePredictor,
    count_parameters,
)


@dataclass
class VaeTrainConfig:
    epochs: int = 16
    batch_size: int = 32
    lr: float = 2e-3
    lr_min: float = 2e-4   # cosine decay floor
    seed: int = 0
    alpha: float = 0.0
    lam: float = 10.0
    beta: float = 1.0
    tick_stride: int = 5   # panorama subsampling along each window
    min_panoramas: int = 1000


@dataclass
class PredictorTrainConfig:
    epochs: int = 30
    batch_size: int = 8
    lr: float = 1e-3
    seed: int = 0
    no_vision: bool = False
    pano_tick_stride: int = 5   # label ticks carrying the panorama loss
    pano_weight: float = 1.0
    teacher_forcing: str = "scheduled"  # scheduled | always | never


def _sha256_state_dict(module: torch.nn.Module) -> str:
    digest = hashlib.sha256()
    for name, tensor in sorted(module.state_dict().items()):
        digest.update(name.encode())
        digest.update(tensor.detach().cpu().numpy().tobytes())
    return digest.hexdigest()


def _save_sidecar(path: Path, payload: dict) -> None:
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=2)


# ---------------------------------------------------------------------------
# Stage 1: panorama VAE
# ---------------------------------------------------------------------------

def train_vae(windows: WindowSet, out_dir, cfg: VaeTrainConfig | None = None) -> dict:
    """Train the VAE on the panoramas of a window set; returns the manifest.

    Raises RuntimeError with diagnostics if the loss goes non-finite.
    """
    cfg = cfg or VaeTrainConfig()
    torch.manual_seed(cfg.seed)
    rng = np.random.default_rng(cfg.seed)
    index = [(w, t) for w in range(windows.n_windows)
             for t in range(0, WINDOW_TICKS, cfg.tick_stride)]
    if len(index) < cfg.min_panoramas:
        raise ValueError(
            f"need >= {cfg.min_panoramas} panoramas, have {len(index)}")

    vae = PanoramaVAE()
    opt = torch.optim.Adam(vae.parameters(), lr=cfg.lr)
    curve = []
    for epoch in range(cfg.epochs):
        # cosine decay from lr to lr_min across the run
        frac = epoch / max(cfg.epochs - 1, 1)
        lr_now = cfg.lr_min + 0.5 * (cfg.lr - cfg.lr_min) * (
            1.0 + np.cos(np.pi * frac))
        for group in opt.param_groups:
            group["lr"] = lr_now
        order = rng.permutation(len(index))
        sums = np.zeros(4)
        n_batches = 0
        for start in range(0, len(order), cfg.batch_size):
            rows = [index[i] for i in order[start:start + cfg.batch_size]]
            batch = np.stack([windows.panoramas[w][t] for w, t in rows])
            x = torch.from_numpy(batch.astype(np.float32))
            recon, z, mu, logvar = vae(x)
            total, rec, kl, m = info_vae_loss(recon, x, z, mu, logvar,
                                              cfg.alpha, cfg.lam, cfg.beta)
            if not torch.isfinite(total):
                raise RuntimeError(
                    f"non-finite VAE loss at epoch {epoch}: rec={rec.item()} "
                    f"kl={kl.item()} mmd={m.item()}")
            opt.zero_grad()
            total.backward()
            opt.step()
            sums += [total.item(), rec.item(), kl.item(), m.item()]
            n_batches += 1
        curve.append({
            "epoch": epoch,
            "total": sums[0] / n_batches,
            "recon": sums[1] / n_batches,
            "kl": sums[2] / n_batches,
            "mmd": sums[3] / n_batches,
        })
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    torch.save(vae.state_dict(), out / "vae.pt")
    manifest = {
        "kind": "vae",
        "latent_dim": LATENT_DIM,
        "parameters": count_parameters(vae),
        "config": asdict(cfg),
        "n_training_panoramas": len(index),
        "loss_curve": curve,
        "weights_sha256": _sha256_state_dict(vae),
    }
    _save_sidecar(out / "vae_config.json", manifest)
    return manifest


def load_vae(model_dir) -> PanoramaVAE:
    vae = PanoramaVAE()
    vae.load_state_dict(torch.load(Path(model_dir) / "vae.pt",
                                   weights_only=True))
    vae.eval()
    return vae


@torch.no_grad()
def evaluate_vae(vae: PanoramaVAE, windows: WindowSet, tick_stride: int = 10,
                 batch_size: int = 32) -> float:
    """Mean depth-weighted L1 reconstruction error in meters (mu latents)."""
    vae.eval()
    index = [(w, t) for w in range(windows.n_windows)
             for t in range(0, WINDOW_TICKS, tick_stride)]
    total, count = 0.0, 0
    for start in range(0, len(index), batch_size):
        rows = index[start:start + batch_size]
        batch = np.stack([windows.panoramas[w][t] for w, t in rows])
        x = torch.from_numpy(batch.astype(np.float32))
        mu, _ = vae.encode(x)
        recon = vae.decode_clamped(mu)
        total += weighted_l1(recon, x).item() * len(rows)
        count += len(rows)
    return total / count


@torch.no_grad()
def encode_windows(vae: PanoramaVAE, windows: WindowSet,
                   batch_size: int = 64) -> np.ndarray:
    """Deterministic (mu) latents for every tick: (n, 200, 64) float32."""
    vae.eval()
    n = windows.n_windows
    out = np.zeros((n, WINDOW_TICKS, LATENT_DIM), dtype=np.float32)
    for w in range(n):
        panos = np.asarray(windows.panoramas[w], dtype=np.float32)
        for start in range(0, WINDOW_TICKS, batch_size):
            x = torch.from_numpy(panos[start:start + batch_size])
            mu, _ = vae.encode(x)
            out[w, start:start + batch_size] = mu.numpy()
    return out


# ---------------------------------------------------------------------------
# Window anchoring and channel normalization
# ---------------------------------------------------------------------------

def _yaw_of_quat(q: np.ndarray) -> np.ndarray:
    w, x, y, z = q[..., 0], q[..., 1], q[..., 2], q[..., 3]
    return np.arctan2(2.0 * (w * z + x * y), 1.0 - 2.0 * (y * y + z * z))


def _rot_z(yaw: np.ndarray) -> np.ndarray:
    c, s = np.cos(yaw), np.sin(yaw)
    zero, one = np.zeros_like(c), np.ones_like(c)
    return np.stack([
        np.stack([c, -s, zero], axis=-1),
        np.stack([s, c, zero], axis=-1),
        np.stack([zero, zero, one], axis=-1),
    ], axis=-2)


def _quat_mul(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    w1, x1, y1, z1 = np.moveaxis(a, -1, 0)
    w2, x2, y2, z2 = np.moveaxis(b, -1, 0)
    return np.stack([
        w1 * w2 - x1 * x2 - y1 * y2 - z1 * z2,
        w1 * x2 + x1 * w2 + y1 * z2 - z1 * y2,
        w1 * y2 - x1 * z2 + y1 * w2 + z1 * x2,
        w1 * z2 + x1 * y2 - y1 * x2 + z1 * w2,
    ], axis=-1)


@dataclass
class WindowAnchor:
    position: np.ndarray  # (n, 3)
    yaw: np.ndarray       # (n,)


def anchor_windows(states: np.ndarray) -> tuple:
    """Re-express each (n, T, 24) window in its last-input-tick frame."""
    states = np.asarray(states, dtype=np.float64).copy()
    anchor_pos = states[:, INPUT_TICKS - 1, POS].copy()
    anchor_yaw = _yaw_of_quat(states[:, INPUT_TICKS - 1, QUAT]).copy()
    rot = _rot_z(-anchor_yaw)  # (n, 3, 3)
    states[:, :, POS] = np.einsum(
        "nij,ntj->nti", rot, states[:, :, POS] - anchor_pos[:, None, :])
    states[:, :, LINVEL] = np.einsum("nij,ntj->nti", rot, states[:, :, LINVEL])
    states[:, :, ANGVEL] = np.einsum("nij,ntj->nti", rot, states[:, :, ANGVEL])
    half = -0.5 * anchor_yaw
    q_anchor = np.stack([np.cos(half), np.zeros_like(half),
                         np.zeros_like(half), np.sin(half)], axis=-1)
    q = _quat_mul(q_anchor[:, None, :], states[:, :, QUAT])
    flip = q[..., 0] < 0
    q[flip] = -q[flip]
    states[:, :, QUAT] = q
    return states, WindowAnchor(anchor_pos, anchor_yaw)


def de_anchor_states(states: np.ndarray, anchor: WindowAnchor) -> np.ndarray:
    """Inverse of anchor_windows for predicted (n, T, 24) label states."""
    states = np.asarray(states, dtype=np.float64).copy()
    rot = _rot_z(anchor.yaw)
    states[:, :, POS] = np.einsum(
        "nij,ntj->nti", rot, states[:, :, POS]) + anchor.position[:, None, :]
    states[:, :, LINVEL] = np.einsum("nij,ntj->nti", rot, states[:, :, LINVEL])
    states[:, :, ANGVEL] = np.einsum("nij,ntj->nti", rot, states[:, :, ANGVEL])
    half = 0.5 * anchor.yaw
    q_anchor = np.stack([np.cos(half), np.zeros_like(half),
                         np.zeros_like(half), np.sin(half)], axis=-1)
    q = _quat_mul(q_anchor[:, None, :], states[:, :, QUAT])
    norm = np.linalg.norm(q, axis=-1, keepdims=True)
    q = q / np.maximum(norm, 1e-9)
    q[q[..., 0] < 0] *= -1
    states[:, :, QUAT] = q
    return states


@dataclass
class ChannelNorm:
    mean: np.ndarray
    std: np.ndarray

    def apply(self, states: np.ndarray) -> np.ndarray:
        return (states - self.mean) / self.std

    def invert(self, states: np.ndarray) -> np.ndarray:
        return states * self.std + self.mean

    @classmethod
    def fit(cls, states: np.ndarray) -> "ChannelNorm":
        flat = states.reshape(-1, states.shape[-1])
        return cls(mean=flat.mean(axis=0),
                   std=np.maximum(flat.std(axis=0), 1e-4))

    def to_json(self) -> dict:
        return {"mean": self.mean.tolist(), "std": self.std.tolist()}

    @classmethod
    def from_json(cls, data: dict) -> "ChannelNorm":
        return cls(np.asarray(data["mean"]), np.asarray(data["std"]))


# ---------------------------------------------------------------------------
# Stage 2: predictor on frozen latents
# ---------------------------------------------------------------------------

def _rollout(predictor: SequencePredictor, latents: torch.Tensor,
             states: torch.Tensor, horizon: int,
             truth_inputs: torch.Tensor | None = None,
             p_truth: float = 0.0,
             generator: torch.Generator | None = None,
             no_vision: bool = False):
    """Consume the input ticks, then autoregress `horizon` steps.

    latents (B, 150, 64), states (B, 150, 24) are the teacher-forced input
    phase. truth_inputs (B, horizon, 88), when given, supplies scheduled-
    sampling replacements for fed-back predictions with probability
    p_truth per window and step. Returns (B, horizon, 88) raw head outputs
    ordered (state 24, latent 64).
    """
    if no_vision:
        latents = torch.zeros_like(latents)
    steps = torch.cat([latents, states], dim=-1)
    out, hidden = predictor(steps)
    preds = [out[:, -1]]  # prediction for the first label tick
    for k in range(1, horizon):
        prev = preds[-1]
        nxt_latent = prev[:, STATE_SIZE:]
        nxt_state = prev[:, :STATE_SIZE]
        if truth_inputs is not None and p_truth > 0.0:
            mask = (torch.rand(prev.shape[0], 1, generator=generator)
                    < p_truth).to(prev.dtype)
            truth = truth_inputs[:, k - 1]
            nxt_latent = mask * truth[:, :LATENT_DIM] + (1 - mask) * nxt_latent
            nxt_state = mask * truth[:, LATENT_DIM:] + (1 - mask) * nxt_state
        if no_vision:
            nxt_latent = torch.zeros_like(nxt_latent)
        step = torch.cat([nxt_latent, nxt_state], dim=-1).unsqueeze(1)
        out, hidden = predictor(step, hidden)
        preds.append(out[:, 0])
    return torch.stack(preds, dim=1)


def train_predictor(windows: WindowSet, vae_dir, out_dir,
                    cfg: PredictorTrainConfig | None = None) -> dict:
    """Stage 2: optimize the LSTM predictor against frozen VAE latents."""
    cfg = cfg or PredictorTrainConfig()
    torch.manual_seed(cfg.seed)
    gen = torch.Generator().manual_seed(cfg.seed + 1)
    rng = np.random.default_rng(cfg.seed)

    vae = load_vae(vae_dir)
    for p in vae.parameters():
        p.requires_grad_(False)
    vae_hash_before = _sha256_state_dict(vae)

    if cfg.no_vision:
        latents_np = np.zeros((windows.n_windows, WINDOW_TICKS, LATENT_DIM),
                              dtype=np.float32)
    else:
        latents_np = encode_windows(vae, windows)
    raw_states = np.asarray(windows.states, dtype=np.float64)
    anchored, _ = anchor_windows(raw_states)
    norm = ChannelNorm.fit(anchored[:, :INPUT_TICKS])
    states_np = norm.apply(anchored).astype(np.float32)

    pano_ticks = list(range(cfg.pano_tick_stride - 1, LABEL_TICKS,
                            cfg.pano_tick_stride))
    predictor = SequencePredictor()
    opt = torch.optim.Adam(predictor.parameters(), lr=cfg.lr)
    n = windows.n_windows
    curve = []
    for epoch in range(cfg.epochs):
        if cfg.teacher_forcing == "always":
            p_truth = 1.0
        elif cfg.teacher_forcing == "never":
            p_truth = 0.0
        else:
            p_truth = max(0.0, 1.0 - epoch / max(1, int(0.6 * cfg.epochs)))
        order = rng.permutation(n)
        state_sum, pano_sum, batches = 0.0, 0.0, 0
        for start in range(0, n, cfg.batch_size):
            rows = order[start:start + cfg.batch_size]
            lat = torch.from_numpy(latents_np[rows])
            st = torch.from_numpy(states_np[rows])
            truth_inputs = torch.cat([lat[:, INPUT_TICKS:], st[:, INPUT_TICKS:]],
                                     dim=-1)
            preds = _rollout(predictor, lat[:, :INPUT_TICKS],
                             st[:, :INPUT_TICKS], LABEL_TICKS,
                             truth_inputs=truth_inputs, p_truth=p_truth,
                             generator=gen, no_vision=cfg.no_vision)
            loss_state = (preds[:, :, :STATE_SIZE]
                          - st[:, INPUT_TICKS:]).abs().mean()
            loss_pano = torch.zeros(())
            if cfg.pano_weight > 0.0:
                z_pred = preds[:, pano_ticks, STATE_SIZE:]
                flat = z_pred.reshape(-1, LATENT_DIM)
                decoded = vae.decode(flat)
                truth_panos = np.stack([
                    windows.panoramas[w, INPUT_TICKS:][pano_ticks]
                    for w in rows])
                truth_t = torch.from_numpy(
                    truth_panos.astype(np.float32)).reshape(-1, 180, 360)
                loss_pano = weighted_l1(decoded / 10.0, truth_t / 10.0)
            loss = loss_state + cfg.pano_weight * loss_pano
            if not torch.isfinite(loss):
                raise RuntimeError(f"non-finite predictor loss at epoch {epoch}")
            opt.zero_grad()
            loss.backward()
            opt.step()
            state_sum += loss_state.detach().item()
            pano_sum += loss_pano.detach().item()
            batches += 1
        curve.append({"epoch": epoch, "state_l1": state_sum / batches,
                      "pano_l1": pano_sum / batches, "p_truth": p_truth})

    vae_hash_after = _sha256_state_dict(vae)
    if vae_hash_after != vae_hash_before:
        raise RuntimeError("VAE weights changed during stage 2")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    torch.save(predictor.state_dict(), out / "predictor.pt")
    manifest = {
        "kind": "predictor",
        "variant": "no_vision" if cfg.no_vision else "vision",
        "parameters": count_parameters(predictor),
        "total_parameters": count_parameters(predictor, vae),
        "config": asdict(cfg),
        "normalization": norm.to_json(),
        "vae_dir": str(Path(vae_dir).resolve()),
        "vae_sha256": vae_hash_before,
        "loss_curve": curve,
    }
    _save_sidecar(out / "predictor_config.json", manifest)
    return manifest


def load_predictor(model_dir) -> tuple:
    model_dir = Path(model_dir)
    with open(model_dir / "predictor_config.json") as fh:
        manifest = json.load(fh)
    predictor = SequencePredictor()
    predictor.load_state_dict(torch.load(model_dir / "predictor.pt",
                                         weights_only=True))
    predictor.eval()
    vae = load_vae(manifest["vae_dir"])
    if _sha256_state_dict(vae) != manifest["vae_sha256"]:
        raise RuntimeError("VAE weights do not match the training-time hash")
    return predictor, vae, manifest


@torch.no_grad()
def rollout_states(windows: WindowSet, model_dir, horizon: int = LABEL_TICKS,
                   batch_size: int = 16) -> tuple:
    """Autoregressive prediction of `horizon` ticks past each input span.

    Returns (states (n, horizon, 24) in the original frame, latents
    (n, horizon, 64)). Only input ticks are ever read from the windows.
    """
    predictor, vae, manifest = load_predictor(model_dir)
    no_vision = manifest["config"]["no_vision"]
    norm = ChannelNorm.from_json(manifest["normalization"])

    # anchor tick 149 is the last row of the input span
    input_states = np.asarray(windows.states[:, :INPUT_TICKS], dtype=np.float64)
    anchored, anchor = anchor_windows(input_states)
    states_np = norm.apply(anchored).astype(np.float32)

    n = windows.n_windows
    latents_np = np.zeros((n, INPUT_TICKS, LATENT_DIM), dtype=np.float32)
    if not no_vision:
        for w in range(n):
            panos = np.asarray(windows.panoramas[w][:INPUT_TICKS],
                               dtype=np.float32)
            for start in range(0, INPUT_TICKS, 64):
                mu, _ = vae.encode(torch.from_numpy(panos[start:start + 64]))
                latents_np[w, start:start + 64] = mu.numpy()

    all_states = np.zeros((n, horizon, STATE_SIZE), dtype=np.float64)
    all_latents = np.zeros((n, horizon, LATENT_DIM), dtype=np.float32)
    for start in range(0, n, batch_size):
        rows = slice(start, min(start + batch_size, n))
        preds = _rollout(predictor,
                         torch.from_numpy(latents_np[rows]),
                         torch.from_numpy(states_np[rows]),
                         horizon, no_vision=no_vision)
        all_states[rows] = norm.invert(
            preds[:, :, :STATE_SIZE].numpy().astype(np.float64))
        all_latents[rows] = preds[:, :, STATE_SIZE:].numpy()
    return de_anchor_states(all_states, anchor), all_latents


@torch.no_grad()
def predict(windows: WindowSet, model_dir, out_dir, variant: str | None = None,
            decode_batch: int = 64) -> dict:
    """50-tick prediction for every window, written in the exchange format."""
    predictor, vae, manifest = load_predictor(model_dir)
    states, latents = rollout_states(windows, model_dir, horizon=LABEL_TICKS)
    n = windows.n_windows
    panos = np.zeros((n, LABEL_TICKS, 180, 360), dtype=np.float32)
    flat = latents.reshape(-1, LATENT_DIM)
    for start in range(0, flat.shape[0], decode_batch):
        decoded = vae.decode_clamped(
            torch.from_numpy(flat[start:start + decode_batch]))
        panos.reshape(-1, 180, 360)[start:start + decode_batch] = decoded.numpy()
    name = variant or manifest["variant"]
    write_predictions(out_dir, states.astype(np.float32), panos, name,
                      windows.manifest)
    return {"variant": name, "n_windows": n, "out": str(out_dir)}
