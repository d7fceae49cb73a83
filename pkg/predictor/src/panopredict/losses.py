"""Training losses: depth-weighted L1 reconstruction, Gaussian KL, and the
kernel MMD regularizer of the InfoVAE-style objective.

The stage-1 loss (minimized) is

    beta * W-L1(recon, x) + (1 - alpha) * KL(q(z|x) || N(0,I))
                          + (alpha + lambda - 1) * MMD(q(z), N(0,I))

with the reconstruction weighted per pixel by (1 - 0.5 * x / max(x)) so
near-field structure counts roughly twice as much as returns at the depth
cap. Stage 2 reuses the same weighted L1 for predicted panoramas plus a
plain L1 on states.
"""

from __future__ import annotations

import torch


def depth_weight(truth: torch.Tensor, eps: float = 1e-9) -> torch.Tensor:
    """(1 - 0.5 * I / max(I)) per grid cell, max taken per sample."""
    flat_max = truth.flatten(1).max(dim=1).values.clamp_min(eps)
    return 1.0 - 0.5 * truth / flat_max.view(-1, *([1] * (truth.dim() - 1)))


def weighted_l1(pred: torch.Tensor, truth: torch.Tensor) -> torch.Tensor:
    """Mean over cells and batch of the depth-weighted absolute error."""
    return (depth_weight(truth) * (pred - truth).abs()).mean()


def weighted_l1_sum(pred: torch.Tensor, truth: torch.Tensor) -> torch.Tensor:
    """Summed over cells, mean over batch; the stage-1 reconstruction term."""
    per_sample = (depth_weight(truth) * (pred - truth).abs()).flatten(1).sum(dim=1)
    return per_sample.mean()


def kl_divergence(mu: torch.Tensor, logvar: torch.Tensor) -> torch.Tensor:
    """KL(q(z|x) || N(0, I)), summed over latent dims, mean over batch."""
    return (-0.5 * (1.0 + logvar - mu.pow(2) - logvar.exp())).sum(dim=1).mean()


def _imq_kernel(a: torch.Tensor, b: torch.Tensor, scale: float) -> torch.Tensor:
    # inverse multiquadric: C / (C + ||a - b||^2), broad-band in z space
    d2 = torch.cdist(a, b).pow(2)
    return scale / (scale + d2)


def mmd(z: torch.Tensor, prior: torch.Tensor) -> torch.Tensor:
    """Kernel MMD between the encoded batch and prior samples."""
    scale = 2.0 * z.shape[1]  # C = 2 * dim * sigma^2 with unit prior sigma
    k_pp = _imq_kernel(prior, prior, scale).mean()
    k_qq = _imq_kernel(z, z, scale).mean()
    k_pq = _imq_kernel(z, prior, scale).mean()
    return k_pp + k_qq - 2.0 * k_pq


def info_vae_loss(recon: torch.Tensor, truth_m: torch.Tensor, z: torch.Tensor,
                  mu: torch.Tensor, logvar: torch.Tensor,
                  alpha: float, lam: float, beta: float):
    """Total stage-1 loss plus the individual terms (for curves/diagnostics).

    The reconstruction term runs in normalized depth (meters / 10) so its
    scale is comparable across datasets; evaluation metrics are reported in
    meters separately.
    """
    rec = weighted_l1_sum(recon / 10.0, truth_m / 10.0)
    kl = kl_divergence(mu, logvar)
    prior = torch.randn_like(z)
    m = mmd(z, prior)
    total = beta * rec + (1.0 - alpha) * kl + (alpha + lam - 1.0) * m
    return total, rec, kl, m
