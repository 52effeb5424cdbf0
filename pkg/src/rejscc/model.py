"""Bundle of the four learned components, built from one ModelConfig."""

import torch
from torch import nn

from .config import ModelConfig
from .dynamic_codec import DynamicDecoder, ReEncoder
from .rng import derive_seed
from .static_codec import StaticDecoder, StaticEncoder


class Codec(nn.Module):
    """Static encoder/decoder plus, for the refinement variant, the dynamic pair.

    The static variants ("static-only", "static-fixed-snr") carry no dynamic
    components: blocks cross the channel as originally encoded and the
    receiver decodes them directly.
    """

    def __init__(self, cfg: ModelConfig):
        super().__init__()
        self.cfg = cfg
        self.static_encoder = StaticEncoder(cfg)
        self.static_decoder = StaticDecoder(cfg)
        if cfg.variant == "refinement":
            self.re_encoder = ReEncoder(cfg)
            self.dynamic_decoder = DynamicDecoder(cfg)
        else:
            self.re_encoder = None
            self.dynamic_decoder = None

    @property
    def has_refinement(self) -> bool:
        return self.re_encoder is not None

    def parameter_groups(self) -> dict[str, nn.Module]:
        groups = {
            "static_encoder": self.static_encoder,
            "static_decoder": self.static_decoder,
        }
        if self.has_refinement:
            groups["re_encoder"] = self.re_encoder
            groups["dynamic_decoder"] = self.dynamic_decoder
        return groups


def build_codec(cfg: ModelConfig, seed: int | None = None) -> Codec:
    """Construct a Codec; a seed makes the parameter initialization reproducible."""
    if seed is not None:
        torch.manual_seed(derive_seed(seed, "init"))
    return Codec(cfg)
