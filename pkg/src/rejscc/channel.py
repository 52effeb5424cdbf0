"""Flat-fading channel simulation: y = h*z + n, CSI summaries, episode schedules.

Noise is circularly-symmetric complex Gaussian with per-symbol variance
sigma2 (sigma2/2 per real dimension). All operations are differentiable in z;
the gain and the noise realization are constants in the gradient path.
"""

from dataclasses import dataclass

import math

import numpy as np
import torch

from .errors import ConfigError, OutageError

DEFAULT_POWER = 1.0

# Gains below this magnitude count as an outage; zero-forcing would blow up.
MIN_GAIN = 1e-9


def snr_db_to_noise_var(snr_db: float, power: float = DEFAULT_POWER) -> float:
    """Noise variance giving the requested SNR at the given signal power."""
    if power <= 0:
        raise ValueError("power must be positive")
    return power / (10.0 ** (snr_db / 10.0))


def noise_var_to_snr_db(noise_var: float, power: float = DEFAULT_POWER) -> float:
    return 10.0 * math.log10(power / noise_var)


@dataclass(frozen=True)
class ChannelState:
    """Complex gain and noise variance for one coherence interval."""

    gain: complex
    noise_var: float
    kind: str = "awgn"

    def __post_init__(self):
        if self.noise_var <= 0:
            raise ConfigError("noise variance must be positive")
        if self.kind not in ("awgn", "rayleigh"):
            raise ConfigError(f"unknown channel kind {self.kind!r}")
        if self.kind == "awgn" and self.gain != 1:
            raise ConfigError("awgn states have unit gain")

    @classmethod
    def awgn(cls, snr_db: float, power: float = DEFAULT_POWER) -> "ChannelState":
        return cls(gain=1 + 0j, noise_var=snr_db_to_noise_var(snr_db, power))

    @classmethod
    def faded(cls, gain: complex, noise_var: float) -> "ChannelState":
        return cls(gain=gain, noise_var=noise_var, kind="rayleigh")

    def effective_snr_db(self, power: float = DEFAULT_POWER) -> float:
        """Post-equalization SNR in dB: |h|^2 * P / sigma2."""
        return 10.0 * math.log10(abs(self.gain) ** 2 * power / self.noise_var)


@dataclass(frozen=True)
class StackedChannelState:
    """Per-item channel states for one segment of a batched episode.

    Same contract as ChannelState but with tensor-valued gain (complex, shape
    (B,)) and noise variance (shape (B,)), so a batch of images can experience
    independent draws while sharing segment boundaries.
    """

    gain: torch.Tensor
    noise_var: torch.Tensor

    def effective_snr_db(self, power: float = DEFAULT_POWER) -> torch.Tensor:
        return 10.0 * torch.log10(self.gain.abs().square() * power / self.noise_var)


def _as_tensors(state, like: torch.Tensor):
    real_dtype = like.real.dtype if like.is_complex() else like.dtype
    complex_dtype = torch.complex128 if real_dtype == torch.float64 else torch.complex64
    if isinstance(state, ChannelState):
        gain = torch.tensor(state.gain, dtype=complex_dtype, device=like.device)
        noise_var = torch.tensor(state.noise_var, dtype=real_dtype, device=like.device)
    else:
        gain = state.gain.to(device=like.device, dtype=complex_dtype)
        noise_var = state.noise_var.to(device=like.device, dtype=real_dtype)
        # broadcast per-item values over each item's symbols
        gain = gain.reshape(*gain.shape, *([1] * (like.dim() - gain.dim())))
        noise_var = noise_var.reshape(*noise_var.shape, *([1] * (like.dim() - noise_var.dim())))
    return gain, noise_var


def transmit(z: torch.Tensor, state, generator: torch.Generator) -> torch.Tensor:
    """Send complex symbols through the channel: returns h*z + n.

    `state` is a ChannelState or a StackedChannelState whose leading shape
    broadcasts against z. Differentiable in z.
    """
    if not z.is_complex():
        raise ValueError("transmit expects the complex symbol view")
    gain, noise_var = _as_tensors(state, z)
    real_dtype = z.real.dtype
    std = torch.sqrt(noise_var / 2)
    noise_re = torch.randn(z.shape, generator=generator, dtype=real_dtype, device=z.device)
    noise_im = torch.randn(z.shape, generator=generator, dtype=real_dtype, device=z.device)
    noise = torch.complex(noise_re * std, noise_im * std)
    return gain * z + noise


def equalize(z_hat: torch.Tensor, state) -> torch.Tensor:
    """Zero-forcing: divide the received symbols by the known gain."""
    gain, _ = _as_tensors(state, z_hat)
    if bool((gain.abs() < MIN_GAIN).any()):
        raise OutageError("channel gain magnitude below equalizable threshold")
    return z_hat / gain


def sample_rayleigh_state(
    rng: np.random.Generator, noise_var: float, min_gain: float = 1e-6
) -> ChannelState:
    """Draw h ~ CN(0, 1) (|h| Rayleigh) and pair it with the given noise variance.

    Draws with |h| < min_gain are rejected so schedules never contain an
    outage the equalizer cannot handle; the acceptance probability is
    1 - exp(-min_gain^2), i.e. negligible bias.
    """
    while True:
        re, im = rng.normal(scale=math.sqrt(0.5), size=2)
        gain = complex(re, im)
        if abs(gain) >= min_gain:
            return ChannelState.faded(gain, noise_var)


@dataclass(frozen=True)
class EpisodeSchedule:
    """Ordered (block_count, state) segments describing one image's transmission."""

    segments: tuple

    def __post_init__(self):
        if not self.segments:
            raise ConfigError("schedule needs at least one segment")
        for count, _ in self.segments:
            if count < 1:
                raise ConfigError("segment block counts must be positive")

    @property
    def num_blocks(self) -> int:
        return sum(count for count, _ in self.segments)

    @property
    def initial_state(self):
        return self.segments[0][1]

    def boundary_signature(self) -> tuple:
        """Segment lengths only; schedules with equal signatures batch together."""
        return tuple(count for count, _ in self.segments)


@dataclass(frozen=True)
class EpisodeConfig:
    """How training episodes are drawn.

    regime:
      "static":    one segment, SNR ~ U[snr_range]
      "per-block": m single-block segments, independent SNR ~ U[snr_range] each
      "segment":   2..max_segments segments at random boundaries, SNR ~ U[snr_range]
      "rayleigh":  h ~ CN(0,1) redrawn every coherence_blocks blocks, fixed noise_var
    """

    regime: str
    num_blocks: int
    snr_range_db: tuple = (0.0, 20.0)
    coherence_blocks: int = 1
    noise_var: float = snr_db_to_noise_var(10.0)
    max_segments: int = 3

    def __post_init__(self):
        if self.regime not in ("static", "per-block", "segment", "rayleigh"):
            raise ConfigError(f"unknown episode regime {self.regime!r}")
        if self.num_blocks < 1:
            raise ConfigError("num_blocks must be positive")
        if self.coherence_blocks < 1:
            raise ConfigError("coherence_blocks must be positive")


def _uniform_snr_state(config: EpisodeConfig, rng: np.random.Generator) -> ChannelState:
    lo, hi = config.snr_range_db
    return ChannelState.awgn(float(rng.uniform(lo, hi)))


def sample_training_episode(config: EpisodeConfig, rng: np.random.Generator) -> EpisodeSchedule:
    """Draw one episode schedule according to the configured regime."""
    m = config.num_blocks
    if config.regime == "static":
        return EpisodeSchedule(((m, _uniform_snr_state(config, rng)),))
    if config.regime == "per-block":
        return EpisodeSchedule(tuple((1, _uniform_snr_state(config, rng)) for _ in range(m)))
    if config.regime == "segment":
        n_seg = int(rng.integers(2, min(config.max_segments, m) + 1))
        cuts = np.sort(rng.choice(np.arange(1, m), size=n_seg - 1, replace=False))
        counts = np.diff(np.concatenate(([0], cuts, [m])))
        return EpisodeSchedule(
            tuple((int(c), _uniform_snr_state(config, rng)) for c in counts)
        )
    # rayleigh: coherence segments, last one absorbs the remainder
    counts = [config.coherence_blocks] * (m // config.coherence_blocks)
    if m % config.coherence_blocks:
        counts.append(m % config.coherence_blocks)
    return EpisodeSchedule(
        tuple((c, sample_rayleigh_state(rng, config.noise_var)) for c in counts)
    )
