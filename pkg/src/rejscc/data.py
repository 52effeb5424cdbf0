"""Dataset ingestion: CIFAR-10 archives, synthetic natural-statistics images, fixtures.

All loaders return uint8 arrays of shape (N, 3, 32, 32). The synthetic
generator draws smooth 1/f-spectrum color fields with occasional hard-edged
patches, which is enough image structure for codec training when the real
dataset is unavailable offline.
"""

import hashlib
import os
import pickle
import tarfile
from importlib import resources
from pathlib import Path

import numpy as np
import torch

from .errors import ConfigError

CIFAR10_URL = "https://www.cs.toronto.edu/~kriz/cifar-10-python.tar.gz"
CIFAR10_MD5 = "c58f30108f718f92721af3b95e74349a"
CIFAR10_ARCHIVE = "cifar-10-python.tar.gz"
DATA_ROOT_ENV = "REJSCC_DATA_DIR"

FIXTURE_COUNT = 200
FIXTURE_SEED = 2024  # frozen; the packaged file was generated with this


def _md5(path: Path) -> str:
    h = hashlib.md5()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def resolve_data_root(root: str | None) -> Path:
    if root is not None:
        return Path(root)
    env = os.environ.get(DATA_ROOT_ENV)
    if env:
        return Path(env)
    return Path("data")


def load_cifar10(root: str | None = None, train: bool = True,
                 allow_fetch: bool = False, verify: bool = True) -> np.ndarray:
    """Decode (and cache) the standard CIFAR-10 python archive.

    Looks for `cifar-10-python.tar.gz` under the data root (or the
    REJSCC_DATA_DIR environment variable). With `allow_fetch` the archive is
    downloaded first; otherwise a missing archive is an actionable error.
    """
    root_path = resolve_data_root(root)
    cache = root_path / f"cifar10_{'train' if train else 'test'}.npz"
    if cache.exists():
        return np.load(cache)["images"]
    archive = root_path / CIFAR10_ARCHIVE
    if not archive.exists():
        if allow_fetch:
            _fetch(CIFAR10_URL, archive)
        else:
            raise ConfigError(
                f"CIFAR-10 archive not found at {archive}; place "
                f"{CIFAR10_ARCHIVE} there, set ${DATA_ROOT_ENV}, or enable "
                "allow_fetch (data.allow_fetch: true) to download it"
            )
    if verify:
        digest = _md5(archive)
        if digest != CIFAR10_MD5:
            raise ConfigError(
                f"checksum mismatch for {archive}: got {digest}, expected {CIFAR10_MD5}"
            )
    batches = (
        [f"data_batch_{i}" for i in range(1, 6)] if train else ["test_batch"]
    )
    chunks = []
    with tarfile.open(archive, "r:gz") as tar:
        for name in batches:
            member = tar.extractfile(f"cifar-10-batches-py/{name}")
            if member is None:
                raise ConfigError(f"archive {archive} is missing {name}")
            batch = pickle.load(member, encoding="bytes")
            chunks.append(np.asarray(batch[b"data"], dtype=np.uint8))
    images = np.concatenate(chunks).reshape(-1, 3, 32, 32)
    root_path.mkdir(parents=True, exist_ok=True)
    np.savez_compressed(cache, images=images)
    return images


def _fetch(url: str, dest: Path) -> None:
    import urllib.request

    dest.parent.mkdir(parents=True, exist_ok=True)
    try:
        urllib.request.urlretrieve(url, dest)
    except OSError as exc:
        raise ConfigError(f"could not download {url}: {exc}") from exc


def synthetic_images(count: int, seed: int, shape=(3, 32, 32)) -> np.ndarray:
    """Seeded smooth color fields with a natural-ish 1/f^2 power spectrum."""
    c, h, w = shape
    rng = np.random.default_rng(seed)
    fy = np.fft.fftfreq(h)[:, None]
    fx = np.fft.rfftfreq(w)[None, :]
    radial = np.sqrt(fy**2 + fx**2)
    amplitude = 1.0 / (radial + 1.0 / max(h, w)) ** 2.2
    out = np.empty((count, c, h, w), dtype=np.uint8)
    chunk = 512
    for start in range(0, count, chunk):
        n = min(chunk, count - start)
        spectrum = (
            rng.normal(size=(n, c, h, fx.shape[1]))
            + 1j * rng.normal(size=(n, c, h, fx.shape[1]))
        ) * amplitude
        fields = np.fft.irfft2(spectrum, s=(h, w))
        # correlate the color planes so images are not pure channel noise
        mix = rng.uniform(0.3, 0.8, size=(n, 1, 1, 1))
        fields = mix * fields.mean(axis=1, keepdims=True) + (1.0 - mix) * fields
        std = fields.reshape(n, -1).std(axis=1).reshape(n, 1, 1, 1)
        fields = fields / np.maximum(std, 1e-9)
        imgs = 1.0 / (1.0 + np.exp(-1.8 * fields))
        # occasional translucent patches add edges without swamping the spectrum
        for i in range(n):
            for _ in range(int(rng.integers(0, 3))):
                y0, x0 = rng.integers(0, h - 4), rng.integers(0, w - 4)
                dy, dx = rng.integers(4, h // 2), rng.integers(4, w // 2)
                color = rng.uniform(0.0, 1.0, size=(c, 1, 1))
                alpha = rng.uniform(0.25, 0.55)
                region = imgs[i, :, y0 : y0 + dy, x0 : x0 + dx]
                imgs[i, :, y0 : y0 + dy, x0 : x0 + dx] = (
                    (1.0 - alpha) * region + alpha * color
                )
        out[start : start + n] = np.clip(np.rint(imgs * 255.0), 0, 255).astype(np.uint8)
    return out


def fixture_images() -> np.ndarray:
    """The bundled offline fixture: 200 synthetic images packaged with the code."""
    ref = resources.files("rejscc").joinpath("assets/fixture_images.npz")
    with ref.open("rb") as fh:
        return np.load(fh)["images"]


def load_split(data_cfg, train: bool = True) -> np.ndarray:
    """Resolve a DataConfig to a uint8 image array for one split."""
    if data_cfg.kind == "cifar10":
        return load_cifar10(data_cfg.root, train=train, allow_fetch=data_cfg.allow_fetch)
    if data_cfg.kind == "fixture":
        images = fixture_images()
        half = len(images) // 2
        return images[:half] if train else images[half:]
    count = data_cfg.synthetic_train if train else data_cfg.synthetic_test
    split_seed = data_cfg.seed if train else data_cfg.seed + 1
    return synthetic_images(count, split_seed)


def to_float_tensor(images: np.ndarray | torch.Tensor) -> torch.Tensor:
    """uint8 (N, C, H, W) to float32 in [0, 1]."""
    t = torch.as_tensor(images)
    if t.dtype == torch.uint8:
        t = t.float() / 255.0
    return t
