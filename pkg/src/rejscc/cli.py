"""Command-line entry points: train, evaluate, simulate, export.

Exit codes: 0 success, 1 usage/configuration error, 2 runtime failure.
Every run writes its fully resolved configuration and hash next to its
outputs so any result can be traced back and re-run exactly.
"""

import json
import sys
from pathlib import Path

import click
import numpy as np
import torch

from . import data as data_mod
from . import evaluation, protocol, training
from .config import (
    RunConfig,
    config_hash,
    dump_run_config,
    load_run_config,
    parse_schedule_string,
)
from .errors import (
    CheckpointMismatchError,
    ConfigError,
    OutageError,
    ProtocolError,
    TrainingDivergedError,
)
from .evaluation import ScenarioSpec, build_suite, export_results, psnr_db, run_scenario
from .rng import torch_generator


@click.group()
def cli():
    """Joint source-channel image codec over time-varying channels."""


def _option_overrides(**kv) -> dict:
    """Nested override dict from non-None CLI options ('train.epochs' style keys)."""
    out: dict = {}
    for dotted, value in kv.items():
        if value is None:
            continue
        node = out
        *parents, leaf = dotted.split(".")
        for p in parents:
            node = node.setdefault(p, {})
        node[leaf] = value
    return out


def _write_resolved(cfg: RunConfig, out_dir: Path) -> str:
    out_dir.mkdir(parents=True, exist_ok=True)
    dump_run_config(cfg, out_dir / "resolved_config.yaml")
    digest = config_hash(cfg)
    click.echo(f"resolved config hash: {digest}")
    return digest


@cli.command()
@click.option("--config", "config_path", type=click.Path(exists=True), default=None,
              help="YAML run configuration.")
@click.option("--desk", is_flag=True, help="Apply the small-scale preset (10 epochs, 5000 images).")
@click.option("--out", "out_dir", type=click.Path(), default=None, help="Output directory.")
@click.option("--variant", type=click.Choice(["refinement", "static-only", "static-fixed-snr"]),
              default=None)
@click.option("--fixed-snr", type=float, default=None, help="Training SNR for static-fixed-snr.")
@click.option("--bandwidth-ratio", default=None, help="Channel symbols per source element, e.g. 1/12.")
@click.option("--num-blocks", type=int, default=None)
@click.option("--conv-width", type=int, default=None)
@click.option("--epochs", type=int, default=None)
@click.option("--batch-size", type=int, default=None)
@click.option("--subset", type=int, default=None, help="Train on the first N images only.")
@click.option("--regime", type=click.Choice(["static", "per-block", "segment", "rayleigh"]),
              default=None)
@click.option("--seed", type=int, default=None, help="Override the run seed.")
@click.option("--data-kind", type=click.Choice(["synthetic", "cifar10", "fixture"]), default=None)
@click.option("--data-root", type=click.Path(), default=None)
@click.option("--resume", type=click.Path(exists=True), default=None,
              help="Continue from a checkpoint.")
def train(config_path, desk, out_dir, variant, fixed_snr, bandwidth_ratio, num_blocks,
          conv_width, epochs, batch_size, subset, regime, seed, data_kind, data_root, resume):
    """Train a codec and write checkpoints plus a training log."""
    overrides = _option_overrides(**{
        "out_dir": out_dir,
        "seed": seed,
        "model.variant": variant,
        "model.fixed_snr_db": fixed_snr,
        "model.bandwidth_ratio": bandwidth_ratio,
        "model.num_blocks": num_blocks,
        "model.conv_width": conv_width,
        "train.epochs": epochs,
        "train.batch_size": batch_size,
        "train.subset": subset,
        "train.regime": regime,
        "train.seed": seed,
        "data.kind": data_kind,
        "data.root": data_root,
    })
    cfg = load_run_config(config_path, overrides, desk=desk)
    out = Path(cfg.out_dir)
    _write_resolved(cfg, out)
    images = torch.as_tensor(data_mod.load_split(cfg.data, train=True))
    final = training.train(images, cfg.model, cfg.train, out, resume=resume,
                           log_fn=click.echo)
    click.echo(f"final checkpoint: {final}")


@cli.command()
@click.option("--checkpoint", "checkpoints", type=click.Path(exists=True), multiple=True,
              required=True, help="Checkpoint(s) to evaluate; repeat to compare variants.")
@click.option("--config", "config_path", type=click.Path(exists=True), default=None)
@click.option("--desk", is_flag=True)
@click.option("--suite", "suites", multiple=True,
              help="Built-in suite: snr-sweep, snr-variation, rayleigh-12.")
@click.option("--schedule", "schedules", multiple=True,
              help="Explicit scenario, e.g. 'SNR=(19,1),C=(2,6)'.")
@click.option("--n-images", type=int, default=None)
@click.option("--seed", type=int, default=None)
@click.option("--out", "out_dir", type=click.Path(), default=None)
@click.option("--data-kind", type=click.Choice(["synthetic", "cifar10", "fixture"]), default=None)
@click.option("--data-root", type=click.Path(), default=None)
def evaluate(checkpoints, config_path, desk, suites, schedules, n_images, seed, out_dir,
             data_kind, data_root):
    """Run scenario suites against one or more checkpoints and export results."""
    overrides = _option_overrides(**{
        "out_dir": out_dir,
        "seed": seed,
        "eval.n_images": n_images,
        "eval.suites": list(suites) if suites else None,
        "eval.schedules": list(schedules) if schedules else None,
        "data.kind": data_kind,
        "data.root": data_root,
    })
    cfg = load_run_config(config_path, overrides, desk=desk)
    out = Path(cfg.out_dir)
    _write_resolved(cfg, out)

    models = []
    for path in checkpoints:
        model, ckpt = training.codec_from_checkpoint(path)
        models.append((model, ckpt["config_hash"][:8]))
    m0 = models[0][0].cfg.num_blocks
    shape0 = models[0][0].cfg.image_shape
    for model, _ in models[1:]:
        if model.cfg.num_blocks != m0:
            raise CheckpointMismatchError(
                f"checkpoints disagree on num_blocks: {model.cfg.num_blocks} vs {m0}"
            )
        if tuple(model.cfg.image_shape) != tuple(shape0):
            raise CheckpointMismatchError(
                f"checkpoints disagree on image_shape: {model.cfg.image_shape} vs {shape0}"
            )

    specs: list[ScenarioSpec] = []
    for name in cfg.eval.suites:
        specs.extend(build_suite(name, m0, cfg.eval.n_images, cfg.eval.scenario_seed))
    for text in cfg.eval.schedules:
        snrs, counts = parse_schedule_string(text)
        specs.append(ScenarioSpec(
            name=text, kind="awgn", snrs_db=snrs, counts=counts, n_images=cfg.eval.n_images,
        ))
    if not specs:
        raise ConfigError("nothing to evaluate: pass --suite and/or --schedule")

    images = data_mod.to_float_tensor(data_mod.load_split(cfg.data, train=False))
    results = []
    for spec in specs:
        for model, ckpt_id in models:
            result = run_scenario(spec, model, images, cfg.seed,
                                  chunk_size=cfg.eval.chunk_size, checkpoint_id=ckpt_id)
            results.append(result)
            click.echo(f"{spec.name:48s} {model.cfg.variant:16s} "
                       f"mean {result.mean_psnr_db:7.3f} dB  (n={result.n_images})")
    paths = export_results(results, out)
    click.echo(f"wrote {paths['csv']}, {paths['json']}, {paths['plot']}")


def _load_image(spec: str, shape) -> torch.Tensor:
    c, h, w = shape
    if spec.startswith("fixture:"):
        idx = int(spec.split(":", 1)[1])
        images = data_mod.fixture_images()
        if not 0 <= idx < len(images):
            raise ConfigError(f"fixture index {idx} out of range (0..{len(images) - 1})")
        return data_mod.to_float_tensor(images[idx : idx + 1])
    from PIL import Image

    with Image.open(spec) as img:
        img = img.convert("RGB").resize((w, h))
        arr = np.asarray(img, dtype=np.uint8).transpose(2, 0, 1)[None]
    return data_mod.to_float_tensor(arr)


@cli.command()
@click.option("--checkpoint", type=click.Path(exists=True), required=True)
@click.option("--image", "image_spec", required=True,
              help="Image file path, or fixture:IDX for a bundled image.")
@click.option("--schedule", "schedule_text", required=True,
              help="Session schedule, e.g. 'SNR=(19,1),C=(2,6)'.")
@click.option("--seed", type=int, default=0)
@click.option("--out", "out_dir", type=click.Path(), default="simulate_out")
def simulate(checkpoint, image_spec, schedule_text, seed, out_dir):
    """Transmit one image under an explicit schedule; dump trace and reconstruction."""
    model, ckpt = training.codec_from_checkpoint(checkpoint)
    snrs, counts = parse_schedule_string(schedule_text)
    if sum(counts) != model.cfg.num_blocks:
        raise CheckpointMismatchError(
            f"schedule covers {sum(counts)} blocks but the checkpoint transmits "
            f"{model.cfg.num_blocks}"
        )
    spec = ScenarioSpec(name=schedule_text, kind="awgn", snrs_db=snrs, counts=counts,
                        n_images=1)
    schedule = spec.schedule(model.cfg.num_blocks)
    image = _load_image(image_spec, model.cfg.image_shape)
    conditioning = None
    if model.cfg.variant == "static-only":
        conditioning = evaluation.session_mean_snr_db(schedule)
    with torch.no_grad():
        result = protocol.run_session(
            image, schedule, model, torch_generator(seed, "simulate"),
            conditioning_snr_db=conditioning, record_trace=True,
        )
    psnr = psnr_db(image, result.image_hat)[0].item()
    stats = protocol.segment_stats(result, model)

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    from PIL import Image

    recon = (result.image_hat[0].clamp(0, 1) * 255).round().byte().numpy().transpose(1, 2, 0)
    Image.fromarray(recon).save(out / "reconstruction.png")
    trace = {
        "schedule": schedule_text,
        "checkpoint": str(checkpoint),
        "checkpoint_id": ckpt["config_hash"][:8],
        "seed": seed,
        "psnr_db": psnr,
        "segments": stats,
        "events": protocol.trace_records(result.trace),
    }
    with open(out / "trace.json", "w") as fh:
        json.dump(trace, fh, indent=1)
    click.echo(f"PSNR: {psnr:.3f} dB")
    for s in stats:
        click.echo(
            f"blocks {s['first_block']}..{s['last_block']}: "
            f"eff SNR {s['effective_snr_db']:.2f} dB, channel MSE {s['channel_mse']:.5f}, "
            f"recovered MSE {s['recovered_mse']:.5f}"
        )
    click.echo(f"wrote {out / 'reconstruction.png'} and {out / 'trace.json'}")


@cli.command()
@click.option("--results", "results_path", type=click.Path(exists=True), required=True,
              help="results.json produced by evaluate.")
@click.option("--out", "out_dir", type=click.Path(), required=True)
def export(results_path, out_dir):
    """Re-export tables and plots from stored raw results."""
    results = evaluation.results_from_json(results_path)
    paths = export_results(results, Path(out_dir))
    click.echo(f"wrote {paths['csv']}, {paths['json']}, {paths['plot']}")


def main(argv=None) -> int:
    try:
        cli.main(args=argv, standalone_mode=False)
    except click.exceptions.Exit as exc:
        return int(exc.exit_code)
    except click.UsageError as exc:
        exc.show(file=sys.stderr)
        return 1
    except ConfigError as exc:
        click.echo(f"error: {exc}", err=True)
        return 1
    except click.ClickException as exc:
        exc.show(file=sys.stderr)
        return 1
    except (ProtocolError, OutageError, CheckpointMismatchError,
            TrainingDivergedError, OSError) as exc:
        click.echo(f"error: {exc}", err=True)
        return 2
    except click.Abort:
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
