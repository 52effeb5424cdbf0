"""Shared network pieces: CSI scaling and the attention-feature layer."""

import torch
from torch import nn


def normalize_snr_db(snr_db: torch.Tensor, snr_range_db) -> torch.Tensor:
    """Linear rescale of an SNR in dB onto [0, 1] over the training range."""
    lo, hi = snr_range_db
    return (snr_db - lo) / (hi - lo)


class AFModule(nn.Module):
    """Per-channel feature scaling conditioned on CSI.

    Features are pooled to a channel descriptor, concatenated with the CSI
    scalar, and pushed through a two-layer bottleneck ending in a sigmoid, so
    every scale lies strictly in (0, 1). Works on (B, C, H, W) maps and on
    (B, C, L) block features alike.
    """

    def __init__(self, num_channels: int, hidden: int, csi_dim: int = 1):
        super().__init__()
        self.num_channels = num_channels
        self.fc = nn.Sequential(
            nn.Linear(num_channels + csi_dim, hidden),
            nn.ReLU(inplace=True),
            nn.Linear(hidden, num_channels),
            nn.Sigmoid(),
        )

    def forward(self, x: torch.Tensor, csi: torch.Tensor) -> torch.Tensor:
        context = x.mean(dim=tuple(range(2, x.dim())))
        scale = self.fc(torch.cat([context, csi], dim=1))
        return x * scale.view(x.shape[0], self.num_channels, *([1] * (x.dim() - 2)))
