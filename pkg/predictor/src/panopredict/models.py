"""Network definitions: panorama VAE and the recurrent state predictor.

The VAE encoder is 2 convolution layers followed by 2 fully-connected
layers producing a 64-dim latent (mean and log-variance); the decoder is 2
fully-connected layers followed by 4 transposed convolutions back to the
180x360 grid. The predictor is a single LSTM layer with a 2-layer MLP head
that maps each step to the next (state 24, latent 64) pair. Layer widths
are chosen to land the combined parameter count at ~640K.

Depth images enter and leave in meters; the networks work on depth / 10.
"""

from __future__ import annotations

import torch
from torch import nn

LATENT_DIM = 64
STATE_SIZE = 24
STEP_INPUT = LATENT_DIM + STATE_SIZE   # latent first, then state
STEP_OUTPUT = STATE_SIZE + LATENT_DIM  # state first, then latent
MAX_DEPTH_M = 10.0


class PanoramaVAE(nn.Module):
    def __init__(self, latent_dim: int = LATENT_DIM):
        super().__init__()
        self.latent_dim = latent_dim
        # fixed coordinate features (elevation ramp, azimuth sin/cos): depth
        # panoramas are strongly position-dependent (ground ramp, horizon),
        # and coordinate channels let the convolutions exploit that
        self.register_buffer("coords_full", self._coord_grid(180, 360))
        self.register_buffer("coords_small", self._coord_grid(15, 15))
        self.enc_conv1 = nn.Conv2d(4, 12, kernel_size=8, stride=4, padding=2)
        self.enc_conv2 = nn.Conv2d(12, 12, kernel_size=(5, 6), stride=(3, 6),
                                   padding=(1, 0))
        self.enc_fc1 = nn.Linear(12 * 15 * 15, 96)
        self.enc_fc2 = nn.Linear(96, 2 * latent_dim)
        self.dec_fc1 = nn.Linear(latent_dim, 96)
        self.dec_fc2 = nn.Linear(96, 12 * 15 * 15)
        # upsampling pyramid (15,15) -> (45,30) -> (90,90) -> (180,180)
        # -> (180,360): azimuth reaches full width last, so the widest
        # feature maps stay cheap
        self.dec_conv1 = nn.ConvTranspose2d(15, 24, kernel_size=(5, 4),
                                            stride=(3, 2), padding=(1, 1))
        self.dec_conv2 = nn.ConvTranspose2d(24, 16, kernel_size=(4, 5),
                                            stride=(2, 3), padding=(1, 1))
        self.dec_conv3 = nn.ConvTranspose2d(16, 10, kernel_size=4, stride=2,
                                            padding=1)
        self.dec_conv4 = nn.ConvTranspose2d(10, 1, kernel_size=(3, 4),
                                            stride=(1, 2), padding=(1, 1))
        # start from an all-empty (10 m) panorama so the common far-field
        # background is free and gradients go to structure
        nn.init.constant_(self.dec_conv4.bias, MAX_DEPTH_M)
        self.act = nn.ReLU()

    @staticmethod
    def _coord_grid(rows: int, cols: int) -> torch.Tensor:
        elev = torch.linspace(-1.0, 1.0, rows).view(1, rows, 1).expand(1, rows, cols)
        az = torch.linspace(-torch.pi, torch.pi, cols).view(1, 1, cols)
        return torch.cat([elev,
                          torch.sin(az).expand(1, rows, cols),
                          torch.cos(az).expand(1, rows, cols)], dim=0).unsqueeze(0)

    def encode(self, depth_m: torch.Tensor):
        """depth (B, 180, 360) in meters -> (mu, logvar), each (B, 64)."""
        x = (depth_m / MAX_DEPTH_M).unsqueeze(1)
        coords = self.coords_full.expand(x.shape[0], -1, -1, -1).to(x.dtype)
        x = torch.cat([x, coords], dim=1)
        h = self.act(self.enc_conv1(x))
        h = self.act(self.enc_conv2(h))
        h = h.flatten(1)
        h = self.act(self.enc_fc1(h))
        mu, logvar = self.enc_fc2(h).chunk(2, dim=1)
        return mu, logvar.clamp(-8.0, 8.0)

    def decode(self, z: torch.Tensor) -> torch.Tensor:
        """latent (B, 64) -> depth (B, 180, 360) in meters (unbounded).

        The output is linear so the far-field cap cannot saturate training
        gradients; clamp to the sensor range with decode_clamped when
        exporting depth images.
        """
        h = self.act(self.dec_fc1(z))
        h = self.act(self.dec_fc2(h)).view(-1, 12, 15, 15)
        coords = self.coords_small.expand(h.shape[0], -1, -1, -1).to(h.dtype)
        h = self.act(self.dec_conv1(torch.cat([h, coords], dim=1)))
        h = self.act(self.dec_conv2(h))
        h = self.act(self.dec_conv3(h))
        return self.dec_conv4(h).squeeze(1)

    def decode_clamped(self, z: torch.Tensor) -> torch.Tensor:
        return self.decode(z).clamp(1e-3, MAX_DEPTH_M)

    @staticmethod
    def reparameterize(mu: torch.Tensor, logvar: torch.Tensor) -> torch.Tensor:
        std = torch.exp(0.5 * logvar)
        return mu + std * torch.randn_like(std)

    def forward(self, depth_m: torch.Tensor):
        mu, logvar = self.encode(depth_m)
        z = self.reparameterize(mu, logvar)
        return self.decode(z), z, mu, logvar


class SequencePredictor(nn.Module):
    """One LSTM layer plus a 2-layer head mapping to the next-step outputs."""

    def __init__(self, hidden: int = 128):
        super().__init__()
        self.hidden = hidden
        self.lstm = nn.LSTM(STEP_INPUT, hidden, num_layers=1, batch_first=True)
        self.head = nn.Sequential(
            nn.Linear(hidden, 128),
            nn.ReLU(),
            nn.Linear(128, STEP_OUTPUT),
        )

    def forward(self, steps: torch.Tensor, state=None):
        """steps (B, T, 88) -> per-step outputs (B, T, 88) and LSTM state."""
        out, state = self.lstm(steps, state)
        return self.head(out), state


def count_parameters(*modules: nn.Module) -> int:
    return sum(p.numel() for m in modules for p in m.parameters())
