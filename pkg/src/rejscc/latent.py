"""Channel-symbol plumbing: real/complex views, power normalization, block partitioning.

Symbols live in two equivalent views: a complex vector of length k, or its
real I/Q interleaving of length 2k (element j of the complex view has real
part at 2j and imaginary part at 2j+1). Networks operate on the real view;
the complex view appears only at the channel boundary.
"""

from dataclasses import dataclass

import torch

from .errors import ConfigError, DegenerateSignalError


def real_to_complex(features: torch.Tensor) -> torch.Tensor:
    """Pairwise-interleave a real (..., 2k) tensor into a complex (..., k) tensor."""
    if features.shape[-1] % 2 != 0:
        raise ValueError(f"last dimension must be even, got {features.shape[-1]}")
    paired = features.contiguous().view(*features.shape[:-1], -1, 2)
    return torch.view_as_complex(paired)


def complex_to_real(symbols: torch.Tensor) -> torch.Tensor:
    """Inverse of :func:`real_to_complex`; norm-preserving."""
    if not symbols.is_complex():
        raise ValueError("expected a complex tensor")
    return torch.view_as_real(symbols).reshape(*symbols.shape[:-1], -1)


def power_normalize(symbols: torch.Tensor, power: float = 1.0) -> torch.Tensor:
    """Scale each trailing vector so its mean per-symbol power equals `power`.

    Complex input: k symbols of mean power `power`. Real input: interleaved
    I/Q pairs, i.e. 2k entries forming k symbols. Normalization is per sample
    (per leading index), so every encoder output meets the constraint exactly.
    """
    if symbols.is_complex():
        n_symbols = symbols.shape[-1]
        energy = (symbols.real.square() + symbols.imag.square()).sum(dim=-1, keepdim=True)
    else:
        if symbols.shape[-1] % 2 != 0:
            raise ValueError("real view must have an even number of entries")
        n_symbols = symbols.shape[-1] // 2
        energy = symbols.square().sum(dim=-1, keepdim=True)
    if bool((energy == 0).any()):
        raise DegenerateSignalError("cannot normalize an all-zero symbol vector")
    return symbols * torch.sqrt(n_symbols * power / energy)


def mean_symbol_power(symbols: torch.Tensor) -> torch.Tensor:
    """Mean per-complex-symbol power of each trailing vector (real or complex view)."""
    if symbols.is_complex():
        return (symbols.real.square() + symbols.imag.square()).mean(dim=-1)
    return symbols.square().sum(dim=-1) / (symbols.shape[-1] // 2)


@dataclass
class SymbolBlocks:
    """A batch of channel-symbol vectors partitioned into equal contiguous blocks.

    `symbols` is the real I/Q view, shape (..., 2k). Block i (0-based) covers
    complex symbols [i*k/m, (i+1)*k/m), i.e. real entries [i*d, (i+1)*d) with
    d = 2k/m. Views returned here share storage with `symbols`.
    """

    symbols: torch.Tensor
    num_blocks: int

    def __post_init__(self):
        if self.symbols.shape[-1] % 2 != 0:
            raise ConfigError("symbol storage must hold interleaved I/Q pairs")
        if self.num_blocks < 1 or self.num_symbols % self.num_blocks != 0:
            raise ConfigError(
                f"k={self.num_symbols} not divisible into m={self.num_blocks} blocks"
            )

    @property
    def num_symbols(self) -> int:
        return self.symbols.shape[-1] // 2

    @property
    def block_size(self) -> int:
        """Complex symbols per block (k/m)."""
        return self.num_symbols // self.num_blocks

    @property
    def feature_dim(self) -> int:
        """Real entries per block (2k/m)."""
        return 2 * self.block_size

    def complex_view(self) -> torch.Tensor:
        return real_to_complex(self.symbols)

    def block(self, i: int) -> torch.Tensor:
        """Real view of block i, shape (..., 2k/m); shares storage."""
        d = self.feature_dim
        return self.symbols[..., i * d : (i + 1) * d]

    def as_matrix(self) -> torch.Tensor:
        """Blocks as columns: shape (..., d, m); shares storage."""
        d = self.feature_dim
        stacked = self.symbols.view(*self.symbols.shape[:-1], self.num_blocks, d)
        return stacked.transpose(-1, -2)

    def mean_power(self) -> torch.Tensor:
        return mean_symbol_power(self.symbols)


def partition_blocks(blocks: SymbolBlocks) -> list[torch.Tensor]:
    """The m contiguous block views, in order; concatenation equals the symbols."""
    return [blocks.block(i) for i in range(blocks.num_blocks)]


def merge_blocks(parts: list[torch.Tensor], num_blocks: int | None = None) -> SymbolBlocks:
    """Reassemble block views into a SymbolBlocks (copies into fresh storage)."""
    m = num_blocks if num_blocks is not None else len(parts)
    return SymbolBlocks(torch.cat(list(parts), dim=-1), m)


def matrix_to_symbols(matrix: torch.Tensor, num_blocks: int) -> torch.Tensor:
    """Inverse of SymbolBlocks.as_matrix: (..., d, m) columns back to a (..., 2k) vector."""
    stacked = matrix.transpose(-1, -2)
    return stacked.reshape(*matrix.shape[:-2], num_blocks * matrix.shape[-2])
