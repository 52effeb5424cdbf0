"""PSNR metric, scenario runners, built-in scenario suites, and results export."""

import csv
import json
import math
from dataclasses import dataclass
from pathlib import Path

import matplotlib
import torch

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

from .channel import ChannelState, EpisodeSchedule, sample_rayleigh_state
from .config import format_schedule_string
from .errors import CheckpointMismatchError, ConfigError
from .model import Codec
from .protocol import run_session
from .rng import derive_seed, numpy_rng, torch_generator


def mean_squared_error(x: torch.Tensor, x_hat: torch.Tensor) -> torch.Tensor:
    """Per-image mean squared error over all elements."""
    if x.shape != x_hat.shape:
        raise ValueError(f"shape mismatch: {tuple(x.shape)} vs {tuple(x_hat.shape)}")
    return (x - x_hat).square().flatten(1).mean(dim=1)


def psnr_db(x: torch.Tensor, x_hat: torch.Tensor, max_val: float = 1.0) -> torch.Tensor:
    """Peak signal-to-noise ratio per image: 10*log10(MAX^2 / MSE), inf when MSE = 0."""
    mse = mean_squared_error(x, x_hat)
    out = torch.full_like(mse, math.inf)
    nonzero = mse > 0
    out[nonzero] = 10.0 * torch.log10(max_val**2 / mse[nonzero])
    return out


@dataclass(frozen=True)
class ScenarioSpec:
    """One evaluation scenario: a schedule template plus an image budget.

    kind "awgn" uses explicit per-segment SNRs and block counts; kind
    "awgn-per-block" draws one SNR per block from `snr_range_db` under
    `gain_seed`; kind "rayleigh" draws one complex gain per coherence interval
    under `gain_seed` with the fixed `noise_var`.
    """

    name: str
    kind: str = "awgn"
    snrs_db: tuple = ()
    counts: tuple = ()
    snr_range_db: tuple = (0.0, 20.0)
    coherence_blocks: int = 1
    noise_var: float = 0.1
    gain_seed: int = 0
    n_images: int = 128

    def __post_init__(self):
        if self.kind not in ("awgn", "awgn-per-block", "rayleigh"):
            raise ConfigError(f"unknown scenario kind {self.kind!r}")
        if self.kind == "awgn":
            if not self.snrs_db or len(self.snrs_db) != len(self.counts):
                raise ConfigError(f"scenario {self.name}: SNR and count lists must match")

    def schedule(self, num_blocks: int) -> EpisodeSchedule:
        if self.kind == "awgn":
            if sum(self.counts) != num_blocks:
                raise CheckpointMismatchError(
                    f"scenario {self.name} covers {sum(self.counts)} blocks "
                    f"but the model transmits {num_blocks}"
                )
            return EpisodeSchedule(
                tuple((c, ChannelState.awgn(s)) for s, c in zip(self.snrs_db, self.counts))
            )
        rng = numpy_rng(self.gain_seed, "scenario", self.name)
        if self.kind == "awgn-per-block":
            lo, hi = self.snr_range_db
            return EpisodeSchedule(
                tuple((1, ChannelState.awgn(float(rng.uniform(lo, hi))))
                      for _ in range(num_blocks))
            )
        counts = [self.coherence_blocks] * (num_blocks // self.coherence_blocks)
        if num_blocks % self.coherence_blocks:
            counts.append(num_blocks % self.coherence_blocks)
        return EpisodeSchedule(
            tuple((c, sample_rayleigh_state(rng, self.noise_var)) for c in counts)
        )


@dataclass(frozen=True)
class ScenarioResult:
    scenario: str
    variant: str
    checkpoint_id: str
    n_images: int
    per_image_psnr_db: tuple
    seed: int

    def __post_init__(self):
        if len(self.per_image_psnr_db) != self.n_images:
            raise ValueError("per-image PSNR count disagrees with n_images")

    @property
    def mean_psnr_db(self) -> float:
        return float(sum(self.per_image_psnr_db) / len(self.per_image_psnr_db))

    @property
    def std_psnr_db(self) -> float:
        mean = self.mean_psnr_db
        var = sum((p - mean) ** 2 for p in self.per_image_psnr_db) / len(self.per_image_psnr_db)
        return math.sqrt(var)


def session_mean_snr_db(schedule: EpisodeSchedule) -> float:
    """Blocks-weighted mean of per-segment effective SNRs (dB domain).

    This is the conditioning a non-refining codec receives on a varying
    channel: one summary value standing in for the whole session.
    """
    total = 0.0
    for count, state in schedule.segments:
        total += count * float(state.effective_snr_db())
    return total / schedule.num_blocks


def run_scenario(
    spec: ScenarioSpec,
    model: Codec,
    images: torch.Tensor,
    seed: int,
    chunk_size: int = 128,
    checkpoint_id: str = "",
) -> ScenarioResult:
    """Transmit `spec.n_images` test images through the scenario's schedule.

    Deterministic for a fixed (spec, model, images, seed, chunk_size); the
    model is used read-only.
    """
    if images.shape[0] < spec.n_images:
        raise ConfigError(
            f"scenario {spec.name} needs {spec.n_images} images, dataset has {images.shape[0]}"
        )
    schedule = spec.schedule(model.cfg.num_blocks)
    conditioning = None
    if model.cfg.variant == "static-only":
        conditioning = session_mean_snr_db(schedule)
    model.eval()
    psnrs: list[float] = []
    with torch.no_grad():
        for chunk_idx, start in enumerate(range(0, spec.n_images, chunk_size)):
            stop = min(start + chunk_size, spec.n_images)
            batch = images[start:stop]
            if batch.dtype == torch.uint8:
                batch = batch.float() / 255.0
            gen = torch_generator(seed, "noise", spec.name, chunk_idx)
            result = run_session(
                batch, schedule, model, gen, conditioning_snr_db=conditioning
            )
            psnrs.extend(psnr_db(batch, result.image_hat).tolist())
    return ScenarioResult(
        scenario=spec.name,
        variant=model.cfg.variant,
        checkpoint_id=checkpoint_id,
        n_images=spec.n_images,
        per_image_psnr_db=tuple(psnrs),
        seed=seed,
    )


def make_snr_sweep_suite(num_blocks: int, n_images: int = 128,
                         snrs=(1.0, 4.0, 7.0, 13.0, 19.0)) -> list[ScenarioSpec]:
    """Constant-channel baselines over a grid of SNRs."""
    return [
        ScenarioSpec(
            name=f"sweep-snr{snr:g}", kind="awgn",
            snrs_db=(snr,), counts=(num_blocks,), n_images=n_images,
        )
        for snr in snrs
    ]


def make_snr_variation_suite(num_blocks: int, n_images: int = 128,
                             seed: int = 7) -> list[ScenarioSpec]:
    """SNR changes once, twice, and per block over a fixed block budget."""
    m = num_blocks
    specs = []
    once = [
        ((19.0, 1.0), (2, m - 2)),
        ((19.0, 1.0), (m // 2, m - m // 2)),
        ((19.0, 1.0), (m - 2, 2)),
        ((1.0, 19.0), (2, m - 2)),
        ((1.0, 19.0), (m - 2, 2)),
        ((13.0, 7.0), (m // 2, m - m // 2)),
    ]
    for snrs, counts in once:
        specs.append(
            ScenarioSpec(
                name=f"once-{format_schedule_string(snrs, counts)}",
                kind="awgn", snrs_db=snrs, counts=counts, n_images=n_images,
            )
        )
    twice = [
        ((19.0, 1.0, 19.0), (m // 4, m // 2, m - m // 4 - m // 2)),
        ((1.0, 19.0, 1.0), (m // 4, m // 2, m - m // 4 - m // 2)),
    ]
    for snrs, counts in twice:
        specs.append(
            ScenarioSpec(
                name=f"twice-{format_schedule_string(snrs, counts)}",
                kind="awgn", snrs_db=snrs, counts=counts, n_images=n_images,
            )
        )
    specs.append(
        ScenarioSpec(
            name="per-block", kind="awgn-per-block",
            snr_range_db=(0.0, 20.0), gain_seed=derive_seed(seed, "per-block"),
            n_images=n_images,
        )
    )
    return specs


def make_rayleigh_suite(
    num_blocks: int,
    coherence_blocks: int,
    n_images: int = 128,
    seed: int = 7,
    n_scenarios: int = 12,
    noise_var: float = 0.1,
) -> list[ScenarioSpec]:
    """The seeded fading suite: n_scenarios independent gain sequences."""
    return [
        ScenarioSpec(
            name=f"rayleigh-c{coherence_blocks}-s{j:02d}",
            kind="rayleigh",
            coherence_blocks=coherence_blocks,
            noise_var=noise_var,
            gain_seed=derive_seed(seed, "rayleigh", coherence_blocks, j),
            n_images=n_images,
        )
        for j in range(n_scenarios)
    ]


def build_suite(name: str, num_blocks: int, n_images: int, seed: int = 7) -> list[ScenarioSpec]:
    if name == "snr-sweep":
        return make_snr_sweep_suite(num_blocks, n_images)
    if name == "snr-variation":
        return make_snr_variation_suite(num_blocks, n_images, seed)
    if name == "rayleigh-12":
        return make_rayleigh_suite(num_blocks, 4, n_images, seed) + make_rayleigh_suite(
            num_blocks, 1, n_images, seed
        )
    raise ConfigError(f"unknown suite {name!r}; known: snr-sweep, snr-variation, rayleigh-12")


CSV_COLUMNS = ["scenario", "variant", "checkpoint_id", "n_images",
               "mean_psnr_db", "std_psnr_db", "seed"]


def export_results(results: list[ScenarioResult], out_dir) -> dict:
    """Write the results table, the raw per-image records, and summary plots.

    The CSV is deterministic byte-for-byte for identical results: fixed column
    order, fixed float formatting, rows sorted by (scenario, variant).
    """
    if not results:
        raise ValueError("no results to export")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    ordered = sorted(results, key=lambda r: (r.scenario, r.variant, r.checkpoint_id))

    csv_path = out_dir / "results.csv"
    with open(csv_path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(CSV_COLUMNS)
        for r in ordered:
            writer.writerow(
                [r.scenario, r.variant, r.checkpoint_id, r.n_images,
                 f"{r.mean_psnr_db:.6f}", f"{r.std_psnr_db:.6f}", r.seed]
            )

    json_path = out_dir / "results.json"
    with open(json_path, "w") as fh:
        json.dump(
            [
                {
                    "scenario": r.scenario,
                    "variant": r.variant,
                    "checkpoint_id": r.checkpoint_id,
                    "n_images": r.n_images,
                    "seed": r.seed,
                    "per_image_psnr_db": list(r.per_image_psnr_db),
                }
                for r in ordered
            ],
            fh,
            indent=1,
            sort_keys=True,
        )

    plot_path = out_dir / "results.png"
    _plot_results(ordered, plot_path)
    return {"csv": csv_path, "json": json_path, "plot": plot_path}


def results_from_json(path) -> list[ScenarioResult]:
    with open(path) as fh:
        raw = json.load(fh)
    return [
        ScenarioResult(
            scenario=r["scenario"],
            variant=r["variant"],
            checkpoint_id=r["checkpoint_id"],
            n_images=r["n_images"],
            per_image_psnr_db=tuple(r["per_image_psnr_db"]),
            seed=r["seed"],
        )
        for r in raw
    ]


def _plot_results(ordered: list[ScenarioResult], path) -> None:
    scenarios = sorted({r.scenario for r in ordered})
    variants = sorted({(r.variant, r.checkpoint_id) for r in ordered})
    if all(s.startswith("sweep-snr") for s in scenarios):
        _plot_sweep(ordered, variants, path)
        return
    width = 0.8 / max(len(variants), 1)
    fig, ax = plt.subplots(figsize=(max(6, 0.7 * len(scenarios) + 2), 4))
    for vi, (variant, ckpt) in enumerate(variants):
        xs, ys = [], []
        for si, scenario in enumerate(scenarios):
            match = [
                r for r in ordered
                if r.scenario == scenario and (r.variant, r.checkpoint_id) == (variant, ckpt)
            ]
            if match:
                xs.append(si + vi * width)
                ys.append(match[0].mean_psnr_db)
        label = variant if not ckpt else f"{variant} ({ckpt})"
        ax.bar(xs, ys, width=width, label=label)
    ax.set_xticks(range(len(scenarios)))
    ax.set_xticklabels(scenarios, rotation=60, ha="right", fontsize=7)
    ax.set_ylabel("mean PSNR (dB)")
    ax.legend(fontsize=7)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def _plot_sweep(ordered, variants, path) -> None:
    fig, ax = plt.subplots(figsize=(6, 4))
    for variant, ckpt in variants:
        points = sorted(
            (float(r.scenario.removeprefix("sweep-snr")), r.mean_psnr_db)
            for r in ordered
            if (r.variant, r.checkpoint_id) == (variant, ckpt)
        )
        label = variant if not ckpt else f"{variant} ({ckpt})"
        ax.plot([p[0] for p in points], [p[1] for p in points], marker="o", label=label)
    ax.set_xlabel("channel SNR (dB)")
    ax.set_ylabel("mean PSNR (dB)")
    ax.grid(True, alpha=0.3)
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
