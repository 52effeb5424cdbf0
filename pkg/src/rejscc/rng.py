"""Deterministic derivation of independent random streams from one root seed."""

import hashlib

import numpy as np
import torch


def derive_seed(root_seed: int, *labels) -> int:
    """Hash (root_seed, labels...) into a stable 63-bit seed.

    Platform-independent, so every run with the same root seed and labels
    draws from identical streams.
    """
    h = hashlib.sha256()
    h.update(str(int(root_seed)).encode())
    for label in labels:
        h.update(b"/")
        h.update(str(label).encode())
    return int.from_bytes(h.digest()[:8], "little") & 0x7FFF_FFFF_FFFF_FFFF


def numpy_rng(root_seed: int, *labels) -> np.random.Generator:
    return np.random.default_rng(derive_seed(root_seed, *labels))


def torch_generator(root_seed: int, *labels) -> torch.Generator:
    gen = torch.Generator()
    gen.manual_seed(derive_seed(root_seed, *labels))
    return gen
