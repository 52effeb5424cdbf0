"""Static codec: the initial encoder and its mirrored decoder.

The encoder maps an image plus the initial CSI to power-normalized channel
symbols through 5 conv stages interleaved with 4 attention-feature stages.
The decoder runs the reverse stack (transposed convs, same interleaving) and
squashes pixels back into [0, 1].
"""

import torch
from torch import nn

from .config import ModelConfig
from .latent import SymbolBlocks, power_normalize
from .layers import AFModule, normalize_snr_db


class StaticEncoder(nn.Module):
    """f: (image, initial CSI) -> SymbolBlocks of k power-normalized symbols."""

    def __init__(self, cfg: ModelConfig):
        super().__init__()
        self.cfg = cfg
        specs = cfg.resolved_conv_specs()
        in_ch = cfg.image_shape[0]
        convs, acts, afs = [], [], []
        for i, (kernel, stride, out_ch) in enumerate(specs):
            convs.append(nn.Conv2d(in_ch, out_ch, kernel, stride=stride, padding=kernel // 2))
            if i < len(specs) - 1:
                acts.append(nn.PReLU())
                afs.append(AFModule(out_ch, cfg.af_hidden))
            in_ch = out_ch
        self.convs = nn.ModuleList(convs)
        self.acts = nn.ModuleList(acts)
        self.afs = nn.ModuleList(afs)

    def forward(self, image: torch.Tensor, snr_db: torch.Tensor) -> SymbolBlocks:
        csi = normalize_snr_db(snr_db.view(-1, 1), self.cfg.snr_range_db)
        x = image
        for i, conv in enumerate(self.convs):
            x = conv(x)
            if i < len(self.afs):
                x = self.acts[i](x)
                x = self.afs[i](x, csi)
        features = x.flatten(1)
        symbols = power_normalize(features, self.cfg.power)
        return SymbolBlocks(symbols, self.cfg.num_blocks)


class StaticDecoder(nn.Module):
    """F: (symbol estimates in initial-CSI space, initial CSI) -> image in [0, 1]."""

    def __init__(self, cfg: ModelConfig):
        super().__init__()
        self.cfg = cfg
        specs = cfg.resolved_conv_specs()
        self.latent_channels = specs[-1][2]
        _, h, w = cfg.image_shape
        for _, stride, _ in specs:
            h //= stride
            w //= stride
        self.latent_hw = (h, w)
        # mirror the encoder: reversed stages, conv -> transposed conv
        deconvs, acts, afs = [], [], []
        channels = [cfg.image_shape[0]] + [s[2] for s in specs]
        for i in reversed(range(len(specs))):
            kernel, stride, _ = specs[i]
            deconvs.append(
                nn.ConvTranspose2d(
                    channels[i + 1], channels[i], kernel,
                    stride=stride, padding=kernel // 2, output_padding=stride - 1,
                )
            )
            if i > 0:
                acts.append(nn.PReLU())
                afs.append(AFModule(channels[i], cfg.af_hidden))
        self.deconvs = nn.ModuleList(deconvs)
        self.acts = nn.ModuleList(acts)
        self.afs = nn.ModuleList(afs)

    def forward(self, symbols: torch.Tensor, snr_db: torch.Tensor) -> torch.Tensor:
        csi = normalize_snr_db(snr_db.view(-1, 1), self.cfg.snr_range_db)
        x = symbols.view(symbols.shape[0], self.latent_channels, *self.latent_hw)
        for i, deconv in enumerate(self.deconvs):
            x = deconv(x)
            if i < len(self.afs):
                x = self.acts[i](x)
                x = self.afs[i](x, csi)
        return torch.sigmoid(x)
