"""End-to-end optimization of all four parameter sets through the protocol.

Each batch item gets a freshly sampled episode schedule; items whose schedules
share segment boundaries are processed together, with per-item channel draws
stacked into one batched session.
"""

import json
import math
import time
from pathlib import Path

import numpy as np
import torch

from .channel import EpisodeConfig, EpisodeSchedule, StackedChannelState, sample_training_episode
from .config import (
    ModelConfig,
    TrainConfig,
    model_config_from_dict,
    to_plain_dict,
    train_config_from_dict,
)
from .errors import TrainingDivergedError
from .model import Codec, build_codec
from .protocol import run_session
from .rng import numpy_rng, torch_generator

CHECKPOINT_FORMAT = 1


def _stack_states(states: list, dtype=torch.complex64) -> StackedChannelState:
    gain = torch.tensor([s.gain for s in states], dtype=dtype)
    noise_var = torch.tensor([s.noise_var for s in states], dtype=torch.float32)
    return StackedChannelState(gain=gain, noise_var=noise_var)


def episode_loss(
    images: torch.Tensor,
    schedules,
    model: Codec,
    generator: torch.Generator,
) -> torch.Tensor:
    """Mean per-pixel squared reconstruction error over the batch.

    `schedules` is one EpisodeSchedule shared by all items, or one per item;
    per-item schedules are grouped by segment boundaries so each group runs
    as a single batched session.
    """
    if isinstance(schedules, EpisodeSchedule):
        result = run_session(images, schedules, model, generator)
        return (images - result.image_hat).square().mean()

    if len(schedules) != images.shape[0]:
        raise ValueError("need exactly one schedule per batch item")
    groups: dict[tuple, list[int]] = {}
    for i, schedule in enumerate(schedules):
        groups.setdefault(schedule.boundary_signature(), []).append(i)
    total = images.new_zeros(())
    for signature, indices in groups.items():
        sub = images[indices]
        stacked = EpisodeSchedule(
            tuple(
                (
                    count,
                    _stack_states([schedules[i].segments[j][1] for i in indices]),
                )
                for j, count in enumerate(signature)
            )
        )
        result = run_session(sub, stacked, model, generator)
        total = total + (sub - result.image_hat).square().sum()
    return total / images.numel()


def _episode_config(model_cfg: ModelConfig, train_cfg: TrainConfig, regime: str) -> EpisodeConfig:
    return EpisodeConfig(
        regime=regime,
        num_blocks=model_cfg.num_blocks,
        snr_range_db=model_cfg.snr_range_db,
        coherence_blocks=train_cfg.coherence_blocks,
        noise_var=train_cfg.rayleigh_noise_var,
        max_segments=train_cfg.max_segments,
    )


def sample_batch_schedules(
    batch: int,
    model: Codec,
    train_cfg: TrainConfig,
    rng: np.random.Generator,
) -> list[EpisodeSchedule]:
    """Schedules for one batch: a static share plus the configured varying regime.

    Models without dynamic components always train on single-segment episodes
    (a constant channel per image), drawn from the matching channel family.
    """
    cfg = model.cfg
    if not model.has_refinement:
        regime = "rayleigh" if train_cfg.regime == "rayleigh" else "static"
        ecfg = _episode_config(cfg, train_cfg, regime)
        if regime == "rayleigh":
            ecfg = EpisodeConfig(
                regime="rayleigh",
                num_blocks=cfg.num_blocks,
                snr_range_db=cfg.snr_range_db,
                coherence_blocks=cfg.num_blocks,
                noise_var=train_cfg.rayleigh_noise_var,
            )
        return [sample_training_episode(ecfg, rng) for _ in range(batch)]

    n_static = int(round(train_cfg.static_mix * batch))
    static_cfg = _episode_config(cfg, train_cfg, "static")
    if train_cfg.regime == "rayleigh":
        static_cfg = EpisodeConfig(
            regime="rayleigh",
            num_blocks=cfg.num_blocks,
            snr_range_db=cfg.snr_range_db,
            coherence_blocks=cfg.num_blocks,
            noise_var=train_cfg.rayleigh_noise_var,
        )
    varying_cfg = _episode_config(cfg, train_cfg, train_cfg.regime)
    out = [sample_training_episode(static_cfg, rng) for _ in range(n_static)]
    out += [sample_training_episode(varying_cfg, rng) for _ in range(batch - n_static)]
    return out


def save_checkpoint(
    path,
    model: Codec,
    optimizer,
    epoch: int,
    train_cfg: TrainConfig,
    noise_generator: torch.Generator,
    schedule_rng: np.random.Generator,
    history: list,
) -> None:
    payload = {
        "format": CHECKPOINT_FORMAT,
        "model_config": to_plain_dict(model.cfg),
        "train_config": to_plain_dict(train_cfg),
        "config_hash": _pair_hash(model.cfg, train_cfg),
        "epoch": epoch,
        "model_state": model.state_dict(),
        "optimizer_state": optimizer.state_dict() if optimizer is not None else None,
        "torch_rng": noise_generator.get_state(),
        "numpy_rng": schedule_rng.bit_generator.state if schedule_rng is not None else None,
        "history": history,
    }
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    torch.save(payload, path)


def _pair_hash(model_cfg: ModelConfig, train_cfg: TrainConfig) -> str:
    import hashlib

    blob = json.dumps(
        {"model": to_plain_dict(model_cfg), "train": to_plain_dict(train_cfg)},
        sort_keys=True,
    )
    return hashlib.sha256(blob.encode()).hexdigest()[:16]


def load_checkpoint(path) -> dict:
    return torch.load(path, map_location="cpu", weights_only=False)


def codec_from_checkpoint(source) -> tuple[Codec, dict]:
    """Rebuild the model (architecture + weights) recorded in a checkpoint."""
    ckpt = load_checkpoint(source) if not isinstance(source, dict) else source
    cfg = model_config_from_dict(ckpt["model_config"])
    model = build_codec(cfg)
    model.load_state_dict(ckpt["model_state"])
    model.eval()
    return model, ckpt


def train(
    train_images: torch.Tensor,
    model_cfg: ModelConfig,
    train_cfg: TrainConfig,
    out_dir,
    resume: str | None = None,
    log_fn=print,
) -> Path:
    """Optimize the codec and return the path of the final checkpoint.

    `train_images` is a float tensor (N, C, H, W) in [0, 1] or a uint8 tensor;
    `subset` in the train config restricts to the first N images. Writes
    `last.ckpt` every `checkpoint_every` epochs, `final.ckpt` at the end, and
    appends one JSON record per epoch to `train_log.jsonl`.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    log_path = out_dir / "train_log.jsonl"

    if resume is not None:
        ckpt = load_checkpoint(resume)
        model_cfg = model_config_from_dict(ckpt["model_config"])
        train_cfg = train_config_from_dict(ckpt["train_config"])
        model = build_codec(model_cfg)
        model.load_state_dict(ckpt["model_state"])
        optimizer = torch.optim.AdamW(
            model.parameters(), lr=train_cfg.learning_rate, weight_decay=train_cfg.weight_decay
        )
        optimizer.load_state_dict(ckpt["optimizer_state"])
        noise_gen = torch.Generator()
        noise_gen.set_state(ckpt["torch_rng"])
        schedule_rng = np.random.default_rng()
        schedule_rng.bit_generator.state = ckpt["numpy_rng"]
        start_epoch = ckpt["epoch"]
        history = list(ckpt["history"])
    else:
        model = build_codec(model_cfg, seed=train_cfg.seed)
        optimizer = torch.optim.AdamW(
            model.parameters(), lr=train_cfg.learning_rate, weight_decay=train_cfg.weight_decay
        )
        noise_gen = torch_generator(train_cfg.seed, "noise")
        schedule_rng = numpy_rng(train_cfg.seed, "episodes")
        start_epoch = 0
        history = []

    images = train_images
    if train_cfg.subset is not None:
        images = images[: train_cfg.subset]
    n = images.shape[0]
    if n < 1:
        raise ValueError("empty training set")

    model.train()
    for epoch in range(start_epoch, train_cfg.epochs):
        t0 = time.perf_counter()
        perm = schedule_rng.permutation(n)
        losses = []
        for start in range(0, n - train_cfg.batch_size + 1, train_cfg.batch_size):
            idx = perm[start : start + train_cfg.batch_size]
            batch = images[torch.as_tensor(idx, dtype=torch.long)]
            if batch.dtype == torch.uint8:
                batch = batch.float() / 255.0
            schedules = sample_batch_schedules(batch.shape[0], model, train_cfg, schedule_rng)
            loss = episode_loss(batch, schedules, model, noise_gen)
            if not math.isfinite(loss.item()):
                save_checkpoint(
                    out_dir / "diagnostic.ckpt", model, optimizer, epoch,
                    train_cfg, noise_gen, schedule_rng, history,
                )
                raise TrainingDivergedError(
                    f"non-finite loss at epoch {epoch}; diagnostic checkpoint written"
                )
            optimizer.zero_grad()
            loss.backward()
            optimizer.step()
            losses.append(loss.item())
        record = {
            "epoch": epoch + 1,
            "loss": float(np.mean(losses)) if losses else float("nan"),
            "wall_time_s": round(time.perf_counter() - t0, 3),
        }
        history.append(record)
        with open(log_path, "a") as fh:
            fh.write(json.dumps(record) + "\n")
        log_fn(f"epoch {record['epoch']}/{train_cfg.epochs} loss {record['loss']:.6f} "
               f"({record['wall_time_s']}s)")
        if train_cfg.checkpoint_every and (epoch + 1) % train_cfg.checkpoint_every == 0:
            save_checkpoint(
                out_dir / "last.ckpt", model, optimizer, epoch + 1,
                train_cfg, noise_gen, schedule_rng, history,
            )

    final = out_dir / "final.ckpt"
    save_checkpoint(
        final, model, optimizer, train_cfg.epochs, train_cfg, noise_gen, schedule_rng, history
    )
    return final
