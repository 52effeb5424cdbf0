"""Pilot for the trend criteria: trains the four desk models and prints the numbers."""

import sys
import time
from pathlib import Path

import torch

sys.path.insert(0, str(Path(__file__).resolve().parents[1] / "src"))

from rejscc.config import ModelConfig, TrainConfig
from rejscc.data import synthetic_images, to_float_tensor
from rejscc.evaluation import ScenarioSpec, make_rayleigh_suite, run_scenario
from rejscc.training import codec_from_checkpoint, train

ART = Path(__file__).parent / "_pilot_artifacts"
TRAIN_SEED, TEST_SEED = 1234, 1235


def get(tag, model_cfg, train_cfg):
    out = ART / tag
    final = out / "final.ckpt"
    if not final.exists():
        t0 = time.time()
        images = torch.as_tensor(synthetic_images(train_cfg.subset, TRAIN_SEED))
        train(images, model_cfg, train_cfg, out)
        print(f"[{tag}] trained in {time.time() - t0:.0f}s")
    model, ckpt = codec_from_checkpoint(final)
    print(f"[{tag}] first/last loss: {ckpt['history'][0]['loss']:.5f} / "
          f"{ckpt['history'][-1]['loss']:.5f}")
    return model


desk = dict(epochs=10, subset=5000, batch_size=128, seed=0)

ref12 = get("ref12", ModelConfig(), TrainConfig(regime="per-block", **desk))
sta12 = get("sta12", ModelConfig(variant="static-only"), TrainConfig(regime="per-block", **desk))

test_images = to_float_tensor(synthetic_images(512, TEST_SEED))

for snr in (1.0, 19.0):
    spec = ScenarioSpec(name=f"static{snr:g}", kind="awgn", snrs_db=(snr,), counts=(8,),
                        n_images=128)
    r = run_scenario(spec, ref12, test_images, seed=11)
    print(f"C7 static snr={snr:g}: refinement mean {r.mean_psnr_db:.3f}")

for counts in [(2, 6), (6, 2)]:
    spec = ScenarioSpec(name=f"c{counts}", kind="awgn", snrs_db=(19.0, 1.0), counts=counts,
                        n_images=512)
    rr = run_scenario(spec, ref12, test_images, seed=11)
    rs = run_scenario(spec, sta12, test_images, seed=11)
    print(f"C8 counts={counts}: ref {rr.mean_psnr_db:.3f}  static {rs.mean_psnr_db:.3f}  "
          f"gap {rr.mean_psnr_db - rs.mean_psnr_db:+.3f}")

ref16 = get("ref16", ModelConfig(bandwidth_ratio=1 / 6, num_blocks=16),
            TrainConfig(regime="rayleigh", coherence_blocks=1, **desk))
sta16 = get("sta16", ModelConfig(bandwidth_ratio=1 / 6, num_blocks=16, variant="static-only"),
            TrainConfig(regime="rayleigh", coherence_blocks=1, **desk))

for model, name in [(ref16, "ref"), (sta16, "static")]:
    means = {}
    for coh in (4, 1):
        suite = make_rayleigh_suite(16, coh, n_images=128, seed=7)
        vals = [run_scenario(s, model, test_images, seed=11).mean_psnr_db for s in suite]
        means[coh] = sum(vals) / len(vals)
        print(f"C9 {name} coh{coh}: mean {means[coh]:.3f}  per-scenario "
              f"{[round(v, 2) for v in vals]}")
    print(f"C9 {name}: degradation {means[4] - means[1]:+.3f}")
