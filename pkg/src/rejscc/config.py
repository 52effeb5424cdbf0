"""Configuration dataclasses, YAML loading, flag merging, and config hashing.

Every run resolves to a RunConfig; its canonical JSON form is hashed and
logged next to all outputs so results stay attributable and replayable.
"""

import dataclasses
import hashlib
import json
import math
import re
from dataclasses import dataclass, field

import yaml

from .errors import ConfigError

VARIANTS = ("refinement", "static-only", "static-fixed-snr")

# (kernel, stride, out_channels) per stage; the canonical 5-stage stack keeps
# an 8x8 map on 32x32 inputs so the last stage's width sets the symbol count.
def default_conv_specs(width: int, latent_channels: int) -> tuple:
    return (
        (9, 2, width),
        (5, 2, width),
        (5, 1, width),
        (5, 1, width),
        (5, 1, latent_channels),
    )


@dataclass(frozen=True)
class ModelConfig:
    """Architecture and rate configuration shared by all four learned components."""

    image_shape: tuple = (3, 32, 32)
    bandwidth_ratio: float = 1.0 / 12.0
    num_blocks: int = 8
    conv_width: int = 32
    conv_specs: tuple | None = None
    af_hidden: int = 32
    rc_conv_layers: int = 3
    rc_kernel_size: int = 3
    gate_hidden: int = 16
    snr_range_db: tuple = (0.0, 20.0)
    power: float = 1.0
    variant: str = "refinement"
    fixed_snr_db: float | None = None

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ConfigError(f"variant must be one of {VARIANTS}, got {self.variant!r}")
        if self.variant == "static-fixed-snr" and self.fixed_snr_db is None:
            raise ConfigError("static-fixed-snr requires fixed_snr_db")
        if self.power <= 0:
            raise ConfigError("power must be positive")
        if self.num_blocks < 1:
            raise ConfigError("num_blocks must be positive")
        # fail at build time, not at runtime: all shape arithmetic checked here
        self.validate_geometry()

    @property
    def source_dim(self) -> int:
        c, h, w = self.image_shape
        return c * h * w

    @property
    def num_symbols(self) -> int:
        """k = R * l, required to be an exact integer."""
        k = self.bandwidth_ratio * self.source_dim
        k_int = round(k)
        if abs(k - k_int) > 1e-6 or k_int < 1:
            raise ConfigError(
                f"bandwidth ratio {self.bandwidth_ratio} gives non-integer "
                f"symbol count {k} for source dim {self.source_dim}"
            )
        return k_int

    @property
    def block_feature_dim(self) -> int:
        """Real entries per block: d = 2k/m."""
        return 2 * self.num_symbols // self.num_blocks

    def resolved_conv_specs(self) -> tuple:
        if self.conv_specs is not None:
            return tuple(tuple(s) for s in self.conv_specs)
        _, h, w = self.image_shape
        down = 4  # stride product of the default stack
        spatial = (h // down) * (w // down)
        if (2 * self.num_symbols) % spatial != 0:
            raise ConfigError(
                f"2k={2 * self.num_symbols} not divisible by the {spatial}-cell latent map"
            )
        return default_conv_specs(self.conv_width, 2 * self.num_symbols // spatial)

    def validate_geometry(self) -> None:
        if self.num_symbols % self.num_blocks != 0:
            raise ConfigError(
                f"k={self.num_symbols} not divisible by m={self.num_blocks}"
            )
        specs = self.resolved_conv_specs()
        if len(specs) != 5:
            raise ConfigError("the coding stack uses exactly 5 conv stages")
        _, h, w = self.image_shape
        for kernel, stride, _ in specs:
            if kernel % 2 == 0:
                raise ConfigError("conv kernels must be odd for mirrored up/down sampling")
            if h % stride or w % stride:
                raise ConfigError(f"stride {stride} does not divide spatial size {h}x{w}")
            h //= stride
            w //= stride
        flat = specs[-1][2] * h * w
        if flat != 2 * self.num_symbols:
            raise ConfigError(
                f"conv stack emits {flat} features but 2k={2 * self.num_symbols}"
            )


@dataclass(frozen=True)
class TrainConfig:
    """Optimization settings; defaults are the full-scale recipe."""

    learning_rate: float = 1e-4
    weight_decay: float = 1e-4
    batch_size: int = 128
    epochs: int = 1920
    regime: str = "per-block"
    coherence_blocks: int = 1
    rayleigh_noise_var: float = 0.1
    max_segments: int = 3
    static_mix: float = 0.25
    subset: int | None = None
    checkpoint_every: int = 1
    seed: int = 0

    def __post_init__(self):
        if not (0.0 <= self.static_mix <= 1.0):
            raise ConfigError("static_mix must lie in [0, 1]")
        if self.batch_size < 1 or self.epochs < 0:
            raise ConfigError("batch_size must be >= 1 and epochs >= 0")


@dataclass(frozen=True)
class DataConfig:
    kind: str = "synthetic"  # synthetic | cifar10 | fixture
    root: str | None = None
    allow_fetch: bool = False
    synthetic_train: int = 50000
    synthetic_test: int = 10000
    seed: int = 1234

    def __post_init__(self):
        if self.kind not in ("synthetic", "cifar10", "fixture"):
            raise ConfigError(f"unknown dataset kind {self.kind!r}")


@dataclass(frozen=True)
class EvalConfig:
    suites: tuple = ()
    schedules: tuple = ()
    n_images: int = 128
    chunk_size: int = 128
    scenario_seed: int = 7


@dataclass(frozen=True)
class RunConfig:
    model: ModelConfig = field(default_factory=ModelConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    data: DataConfig = field(default_factory=DataConfig)
    eval: EvalConfig = field(default_factory=EvalConfig)
    seed: int = 0
    out_dir: str = "runs"


# Small-scale recipe: the full-scale epoch budget is far out of desk reach, so
# the preset trades batch size for step count and raises the learning rate to
# reach a usable operating point within 10 epochs.
DESK_PRESET = {
    "train": {"epochs": 10, "subset": 5000, "batch_size": 16, "learning_rate": 1e-3},
    "data": {"kind": "synthetic", "synthetic_train": 5000, "synthetic_test": 2000},
}


def _coerce(value, target_example):
    if isinstance(target_example, tuple) and isinstance(value, (list, tuple)):
        return tuple(value)
    return value


def _build_dataclass(cls, data: dict):
    if not isinstance(data, dict):
        raise ConfigError(f"expected a mapping for {cls.__name__}, got {type(data).__name__}")
    fields = {f.name: f for f in dataclasses.fields(cls)}
    unknown = set(data) - set(fields)
    if unknown:
        raise ConfigError(f"unknown {cls.__name__} keys: {sorted(unknown)}")
    kwargs = {}
    for name, value in data.items():
        if name == "bandwidth_ratio":
            value = parse_ratio(value)
        if name == "conv_specs" and value is not None:
            value = tuple(tuple(stage) for stage in value)
        default = fields[name].default
        kwargs[name] = _coerce(value, default)
    return cls(**kwargs)


def model_config_from_dict(data: dict) -> ModelConfig:
    return _build_dataclass(ModelConfig, data)


def train_config_from_dict(data: dict) -> TrainConfig:
    return _build_dataclass(TrainConfig, data)


def parse_ratio(value) -> float:
    """Accept floats or exact fraction strings like '1/12'."""
    if isinstance(value, str):
        m = re.fullmatch(r"\s*(\d+)\s*/\s*(\d+)\s*", value)
        if not m:
            raise ConfigError(f"cannot parse ratio {value!r}")
        return int(m.group(1)) / int(m.group(2))
    return float(value)


def deep_merge(base: dict, override: dict) -> dict:
    merged = dict(base)
    for key, value in override.items():
        if isinstance(value, dict) and isinstance(merged.get(key), dict):
            merged[key] = deep_merge(merged[key], value)
        else:
            merged[key] = value
    return merged


def run_config_from_dict(data: dict) -> RunConfig:
    data = dict(data)
    sections = {
        "model": ModelConfig,
        "train": TrainConfig,
        "data": DataConfig,
        "eval": EvalConfig,
    }
    kwargs = {}
    for name, cls in sections.items():
        if name in data:
            kwargs[name] = _build_dataclass(cls, data.pop(name))
    extra = set(data) - {"seed", "out_dir"}
    if extra:
        raise ConfigError(f"unknown top-level config keys: {sorted(extra)}")
    kwargs.update(data)
    return RunConfig(**kwargs)


def load_run_config(path: str | None = None, overrides: dict | None = None,
                    desk: bool = False) -> RunConfig:
    """Config file -> desk preset -> flag overrides, later layers win."""
    layers: dict = {}
    if path is not None:
        with open(path) as fh:
            loaded = yaml.safe_load(fh) or {}
        if not isinstance(loaded, dict):
            raise ConfigError(f"config file {path} must hold a mapping")
        layers = deep_merge(layers, loaded)
    if desk:
        layers = deep_merge(layers, DESK_PRESET)
    if overrides:
        layers = deep_merge(layers, overrides)
    return run_config_from_dict(layers)


def to_plain_dict(cfg) -> dict:
    """Dataclass tree to JSON-serializable primitives (tuples become lists)."""
    return json.loads(json.dumps(dataclasses.asdict(cfg)))


def config_hash(cfg) -> str:
    canonical = json.dumps(to_plain_dict(cfg), sort_keys=True)
    return hashlib.sha256(canonical.encode()).hexdigest()[:16]


def dump_run_config(cfg: RunConfig, path) -> None:
    with open(path, "w") as fh:
        yaml.safe_dump(to_plain_dict(cfg), fh, sort_keys=True)


_SCHEDULE_RE = re.compile(
    r"\s*SNR\s*=\s*\(([^)]*)\)\s*,\s*C\s*=\s*\(([^)]*)\)\s*", re.IGNORECASE
)


def parse_schedule_string(text: str) -> tuple[tuple[float, ...], tuple[int, ...]]:
    """Parse the scenario legend grammar 'SNR=(S1,S2,...),C=(C1,C2,...)'."""
    m = _SCHEDULE_RE.fullmatch(text)
    if not m:
        raise ConfigError(
            f"cannot parse schedule {text!r}; expected SNR=(S1,...),C=(C1,...)"
        )
    try:
        snrs = tuple(float(s) for s in m.group(1).split(",") if s.strip())
        counts = tuple(int(c) for c in m.group(2).split(",") if c.strip())
    except ValueError as exc:
        raise ConfigError(f"bad number in schedule {text!r}: {exc}") from None
    if not snrs or len(snrs) != len(counts):
        raise ConfigError(f"schedule {text!r} needs matching SNR and C lists")
    if any(c < 1 for c in counts):
        raise ConfigError("segment block counts must be positive")
    if any(not math.isfinite(s) for s in snrs):
        raise ConfigError("segment SNRs must be finite")
    return snrs, counts


def format_schedule_string(snrs, counts) -> str:
    fmt = lambda x: f"{x:g}"
    return f"SNR=({','.join(fmt(s) for s in snrs)}),C=({','.join(str(c) for c in counts)})"


CONFIG_SCHEMA = """\
Top-level keys: seed (int), out_dir (str), model, train, data, eval.

model:
  image_shape: [C, H, W]            default [3, 32, 32]
  bandwidth_ratio: float or "p/q"   channel symbols per source element (default 1/12)
  num_blocks: int                   progressive blocks m (default 8)
  conv_width: int                   width of the non-latent conv stages (default 32)
  conv_specs: [[kernel, stride, out_channels] x5] or null for the default stack
  af_hidden: int                    attention bottleneck width (default 32)
  rc_conv_layers: int               conv stages in the re-encoding reconstruction net
  rc_kernel_size: int               kernel along the block axis (default 3)
  gate_hidden: int                  hidden width of the refinement-intensity net
  snr_range_db: [low, high]         CSI normalization / training range (default [0, 20])
  power: float                      per-symbol power budget (default 1.0)
  variant: refinement | static-only | static-fixed-snr
  fixed_snr_db: float               required for static-fixed-snr

train:
  learning_rate (1e-4), weight_decay (1e-4), batch_size (128), epochs (1920),
  regime: static | per-block | segment | rayleigh   (default per-block)
  coherence_blocks (1), rayleigh_noise_var (0.1), max_segments (3),
  static_mix (0.25: fraction of static episodes), subset (null = all images),
  checkpoint_every (1), seed (0)

data:
  kind: synthetic | cifar10 | fixture
  root: dataset directory (cifar10; falls back to $REJSCC_DATA_DIR)
  allow_fetch: bool                 attempt to download the archive when missing
  synthetic_train / synthetic_test: generated split sizes
  seed: generator seed for synthetic data

eval:
  suites: [snr-sweep | snr-variation | rayleigh-12, ...]
  schedules: ["SNR=(19,1),C=(2,6)", ...]
  n_images (128), chunk_size (128), scenario_seed (7)
"""
