"""Dynamic codec: gated re-encoding of untransmitted blocks to the current channel.

The pipeline splits the remaining block features by a learned intensity
lambda, spreads the refined share across all m block positions with a fixed
banded matrix, reconstructs under the current CSI, folds back to the original
block count with the matrix transpose, and adds the passthrough share as a
residual. When the channel improved (or is unchanged) the whole module is
bypassed and the input passes through bit-exact.
"""

import torch
from torch import nn

from .config import ModelConfig
from .latent import matrix_to_symbols, power_normalize
from .layers import AFModule, normalize_snr_db


def disperse_matrix(c_n: int, m: int, dtype=torch.float32, device=None) -> torch.Tensor:
    """Banded (c_n, m) matrix spreading c_n blocks over m positions.

    Row i carries K = m - c_n + 1 entries of weight 1/K in columns i..i+K-1,
    so every row sums to 1 and c_n = m degenerates to the identity.
    """
    if not 1 <= c_n <= m:
        raise ValueError(f"need 1 <= c_n <= m, got c_n={c_n}, m={m}")
    kernel = m - c_n + 1
    mat = torch.zeros(c_n, m, dtype=dtype, device=device)
    for i in range(c_n):
        mat[i, i : i + kernel] = 1.0 / kernel
    return mat


def disperse(features: torch.Tensor, mat: torch.Tensor) -> torch.Tensor:
    """(…, d, c_n) block features to (…, d, m): U @ M."""
    if features.shape[-1] != mat.shape[0]:
        raise ValueError(
            f"features have {features.shape[-1]} blocks but matrix expects {mat.shape[0]}"
        )
    return features @ mat


def aggregate(features: torch.Tensor, mat: torch.Tensor) -> torch.Tensor:
    """(…, d, m) back to (…, d, c_n): V @ M^T; exact adjoint of disperse."""
    if features.shape[-1] != mat.shape[1]:
        raise ValueError(
            f"features have {features.shape[-1]} positions but matrix expects {mat.shape[1]}"
        )
    return features @ mat.T


class RefinementGate(nn.Module):
    """Refinement intensity lambda in [0, 1).

    Exactly 0 when the channel improved or is unchanged (current effective
    SNR >= initial); otherwise a two-layer net of (initial CSI, current CSI,
    c_n/m) squashed into (0, 1).
    """

    def __init__(self, cfg: ModelConfig):
        super().__init__()
        self.cfg = cfg
        self.net = nn.Sequential(
            nn.Linear(3, cfg.gate_hidden),
            nn.ReLU(inplace=True),
            nn.Linear(cfg.gate_hidden, 1),
            nn.Sigmoid(),
        )

    def forward(self, snr0_db: torch.Tensor, snrn_db: torch.Tensor, c_n: int) -> torch.Tensor:
        snr0_db = snr0_db.view(-1)
        snrn_db = snrn_db.view(-1)
        worse = snrn_db < snr0_db
        x = torch.stack(
            [
                normalize_snr_db(snr0_db, self.cfg.snr_range_db),
                normalize_snr_db(snrn_db, self.cfg.snr_range_db),
                torch.full_like(snr0_db, c_n / self.cfg.num_blocks),
            ],
            dim=1,
        )
        raw = self.net(x).squeeze(1)
        return torch.where(worse, raw, torch.zeros_like(raw))


class ReconstructionNet(nn.Module):
    """Feature reconstruction over the dispersed (d, m) map, conditioned on current CSI.

    Stride-1, channel-preserving conv stages along the block axis, interleaved
    with attention-feature stages; never changes the feature shape.
    """

    def __init__(self, cfg: ModelConfig):
        super().__init__()
        d = cfg.block_feature_dim
        k = cfg.rc_kernel_size
        convs, acts, afs = [], [], []
        for i in range(cfg.rc_conv_layers):
            convs.append(nn.Conv1d(d, d, k, stride=1, padding=k // 2))
            if i < cfg.rc_conv_layers - 1:
                acts.append(nn.PReLU())
                afs.append(AFModule(d, cfg.af_hidden))
        self.cfg = cfg
        self.convs = nn.ModuleList(convs)
        self.acts = nn.ModuleList(acts)
        self.afs = nn.ModuleList(afs)

    def forward(self, features: torch.Tensor, snrn_db: torch.Tensor) -> torch.Tensor:
        csi = normalize_snr_db(snrn_db.view(-1, 1), self.cfg.snr_range_db)
        x = features
        for i, conv in enumerate(self.convs):
            x = conv(x)
            if i < len(self.afs):
                x = self.acts[i](x)
                x = self.afs[i](x, csi)
        return x


class GatedRecoder(nn.Module):
    """Shared machinery of the dynamic encoder and dynamic decoder.

    forward takes the remaining/received blocks as a (B, d, c_n) column
    matrix with per-item initial and current CSI; rows whose channel did not
    worsen bypass untouched.
    """

    normalize_output = False

    def __init__(self, cfg: ModelConfig):
        super().__init__()
        self.cfg = cfg
        self.gate = RefinementGate(cfg)
        self.reconstruct = ReconstructionNet(cfg)

    def forward(
        self, blocks: torch.Tensor, snr0_db: torch.Tensor, snrn_db: torch.Tensor
    ) -> torch.Tensor:
        batch, d, c_n = blocks.shape
        if d != self.cfg.block_feature_dim:
            raise ValueError(
                f"expected block feature dim {self.cfg.block_feature_dim}, got {d}"
            )
        lam = self.gate(snr0_db, snrn_db, c_n)
        active = lam > 0
        if not bool(active.any()):
            return blocks
        idx = active.nonzero(as_tuple=True)[0]
        sub = blocks.index_select(0, idx)
        lam_sub = lam.index_select(0, idx).view(-1, 1, 1)
        snrn_sub = snrn_db.view(-1).index_select(0, idx)
        mat = disperse_matrix(c_n, self.cfg.num_blocks, dtype=blocks.dtype, device=blocks.device)
        spread = disperse(lam_sub * sub, mat)
        rebuilt = self.reconstruct(spread, snrn_sub)
        refined = aggregate(rebuilt, mat) + (1.0 - lam_sub) * sub
        if self.normalize_output:
            flat = matrix_to_symbols(refined, c_n)
            refined = power_normalize(flat, self.cfg.power).view(-1, c_n, d).transpose(1, 2)
        if idx.numel() == batch:
            return refined
        out = blocks.clone()
        out[idx] = refined
        return out


class ReEncoder(GatedRecoder):
    """g: re-encode the untransmitted blocks for the current channel.

    Output is power-normalized over the re-encoded segment (the c_n blocks
    jointly) since these symbols enter the channel directly.
    """

    normalize_output = True


class DynamicDecoder(GatedRecoder):
    """G: map a received segment from current-CSI space back to initial-CSI space.

    Mirrors the re-encoder's pipeline with independent parameters; no output
    normalization, since decoded estimates never re-enter the channel.
    """

    normalize_output = False
