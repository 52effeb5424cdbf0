import numpy as np
import pytest
import torch

from rejscc.config import ModelConfig
from rejscc.data import fixture_images, to_float_tensor
from rejscc.model import build_codec


@pytest.fixture(scope="session")
def tiny_cfg() -> ModelConfig:
    """Small refinement model, default rate (R=1/12, m=8, k=256)."""
    return ModelConfig(conv_width=8, af_hidden=8, rc_conv_layers=2, gate_hidden=8)


@pytest.fixture(scope="session")
def tiny_model(tiny_cfg):
    return build_codec(tiny_cfg, seed=0)


@pytest.fixture(scope="session")
def images8() -> torch.Tensor:
    return to_float_tensor(fixture_images()[:8])


def seeded_randn(*shape, seed: int = 0, dtype=torch.float32) -> torch.Tensor:
    gen = torch.Generator().manual_seed(seed)
    return torch.randn(*shape, generator=gen, dtype=dtype)


def seeded_rand(*shape, seed: int = 0, dtype=torch.float32) -> torch.Tensor:
    gen = torch.Generator().manual_seed(seed)
    return torch.rand(*shape, generator=gen, dtype=dtype)


@pytest.fixture
def randn():
    return seeded_randn


@pytest.fixture
def rand():
    return seeded_rand


def rng(seed: int = 0) -> np.random.Generator:
    return np.random.default_rng(seed)
