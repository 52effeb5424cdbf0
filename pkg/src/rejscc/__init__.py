"""Joint source-channel image codec with progressive, channel-adaptive block transmission."""

from .channel import ChannelState, EpisodeConfig, EpisodeSchedule
from .config import ModelConfig, RunConfig, TrainConfig
from .model import Codec, build_codec

__version__ = "0.1.0"

__all__ = [
    "ChannelState",
    "Codec",
    "EpisodeConfig",
    "EpisodeSchedule",
    "ModelConfig",
    "RunConfig",
    "TrainConfig",
    "build_codec",
    "__version__",
]
