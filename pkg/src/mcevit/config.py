"""Run configuration: defaults < key-value file < command-line flags."""

from __future__ import annotations

from dataclasses import dataclass, fields
from pathlib import Path
from typing import Any

from .fusion import FusionConfig
from .imaging import JpegSimConfig
from .persist import fusion_config_to_kv, read_kv
from .train import TrainConfig
from .vit import VitConfig


class ConfigError(ValueError):
    pass


def _floats(text: str) -> tuple[float, ...]:
    return tuple(float(v) for v in text.split(",") if v.strip())


def _ints(text: str) -> tuple[int, ...]:
    return tuple(int(v) for v in text.split(",") if v.strip())


# key: (parser, default, help)
SCHEMA: dict[str, tuple[Any, Any, str]] = {
    "seed": (int, 7, "single seed for every random choice of the invocation"),
    "threads": (int, 1, "cap on BLAS threads"),
    "data_dir": (Path, Path("data"), "dataset root with gan/, graphics/, real/ subdirectories"),
    "out_dir": (Path, Path("runs/default"), "directory for checkpoints, logs and CSV artifacts"),
    "split_file": (str, "", "split manifest CSV (default: <out_dir>/split.csv)"),
    "per_class": (int, 200, "synthetic images per class"),
    "synth_size": (int, 224, "synthetic image side length in pixels"),
    "image_size": (int, 224, "ViT input side length"),
    "patch_size": (int, 16, "ViT patch side length"),
    "embed_dim": (int, 128, "ViT embedding width"),
    "depth": (int, 4, "transformer blocks per branch"),
    "heads": (int, 4, "attention heads"),
    "mlp_ratio": (float, 4.0, "MLP hidden width as a multiple of embed_dim"),
    "pool_kernel": (int, 16, "average-pool kernel on the RGB feature"),
    "pool_stride": (int, 16, "average-pool stride on the RGB feature"),
    "hidden": (int, 512, "dense head width"),
    "enrich_quality": (int, 90, "JPEG quality used for chroma-error enrichment"),
    "chroma_subsampling": (str, "4:2:0", "4:2:0 or 4:4:4 for simulated JPEG"),
    "backbone_mode": (str, "frozen", "frozen (train head only) or end_to_end"),
    "variant": (str, "fused", "fused or rgb_only (single-branch ablation)"),
    "batch_size": (int, 16, "mini-batch size"),
    "epochs": (int, 50, "training epochs"),
    "lr": (float, 1e-3, "Adam learning rate"),
    "beta1": (float, 0.9, "Adam beta1"),
    "beta2": (float, 0.999, "Adam beta2"),
    "eps": (float, 1e-8, "Adam epsilon"),
    "partition": (str, "test", "split partition to evaluate: train, validation, test or all"),
    "jpeg_factors": (_ints, tuple(range(100, 0, -10)), "comma-separated JPEG qualities for sweep-jpeg"),
    "noise_sigmas": (_floats, (5.0, 10.0, 15.0, 20.0, 25.0), "comma-separated Gaussian sigmas for sweep-noise"),
    "det_thresholds": (int, 101, "number of evenly spaced DET thresholds in [0, 1]"),
    "image": (str, "", "single PPM input for enrich-dump and attention"),
}

MODEL_KEYS = tuple(fusion_config_to_kv(FusionConfig()).keys())


@dataclass(frozen=True)
class RunConfig:
    seed: int
    threads: int
    data_dir: Path
    out_dir: Path
    split_file: str
    per_class: int
    synth_size: int
    image_size: int
    patch_size: int
    embed_dim: int
    depth: int
    heads: int
    mlp_ratio: float
    pool_kernel: int
    pool_stride: int
    hidden: int
    enrich_quality: int
    chroma_subsampling: str
    backbone_mode: str
    variant: str
    batch_size: int
    epochs: int
    lr: float
    beta1: float
    beta2: float
    eps: float
    partition: str
    jpeg_factors: tuple[int, ...]
    noise_sigmas: tuple[float, ...]
    det_thresholds: int
    image: str
    explicit: frozenset[str] = frozenset()

    @property
    def split_path(self) -> Path:
        return Path(self.split_file) if self.split_file else self.out_dir / "split.csv"

    def fusion_config(self) -> FusionConfig:
        vit = VitConfig(self.image_size, self.patch_size, 3, self.embed_dim, self.depth, self.heads, self.mlp_ratio)
        return FusionConfig(
            vit=vit,
            pool_kernel=self.pool_kernel,
            pool_stride=self.pool_stride,
            hidden=self.hidden,
            enrichment=JpegSimConfig(self.enrich_quality, self.chroma_subsampling),
            backbone_mode=self.backbone_mode,
            variant=self.variant,
        )

    def train_config(self) -> TrainConfig:
        return TrainConfig(
            batch_size=self.batch_size,
            epochs=self.epochs,
            lr=self.lr,
            beta1=self.beta1,
            beta2=self.beta2,
            eps=self.eps,
            seed=self.seed,
            backbone_mode=self.backbone_mode,
            checkpoint_dir=self.out_dir,
        )


def _parse_value(key: str, raw: Any) -> Any:
    parser = SCHEMA[key][0]
    if not isinstance(raw, str):
        return raw
    try:
        return parser(raw)
    except ValueError as exc:
        raise ConfigError(f"bad value for {key}: {raw!r} ({exc})") from None


def build_run_config(file_path: str | Path | None = None, overrides: dict[str, Any] | None = None) -> RunConfig:
    """Merge defaults, an optional key-value file and overrides, then validate all of it."""
    values = {k: spec[1] for k, spec in SCHEMA.items()}
    explicit: set[str] = set()
    sources: list[dict[str, Any]] = []
    if file_path:
        try:
            sources.append(read_kv(file_path))
        except OSError as exc:
            raise FileNotFoundError(f"cannot read config file {file_path}: {exc}") from exc
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
    sources.append({k: v for k, v in (overrides or {}).items() if v is not None})
    for src in sources:
        for key, raw in src.items():
            if key not in SCHEMA:
                raise ConfigError(f"unknown config key {key!r}")
            values[key] = _parse_value(key, raw)
            explicit.add(key)
    cfg = RunConfig(**values, explicit=frozenset(explicit))
    validate(cfg)
    return cfg


def validate(cfg: RunConfig) -> None:
    try:
        cfg.fusion_config()
        cfg.train_config()
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    if cfg.threads < 1:
        raise ConfigError("threads must be >= 1")
    if cfg.per_class < 10:
        raise ConfigError("per_class must be >= 10")
    if cfg.synth_size < 16 or cfg.synth_size % 16:
        raise ConfigError("synth_size must be a positive multiple of 16")
    if cfg.partition not in ("train", "validation", "test", "all"):
        raise ConfigError(f"partition must be train, validation, test or all, got {cfg.partition!r}")
    if not cfg.jpeg_factors or any(not 1 <= q <= 100 for q in cfg.jpeg_factors):
        raise ConfigError("jpeg_factors must be non-empty and within [1, 100]")
    if not cfg.noise_sigmas or any(s < 0 for s in cfg.noise_sigmas):
        raise ConfigError("noise_sigmas must be non-empty and non-negative")
    if cfg.det_thresholds < 2:
        raise ConfigError("det_thresholds must be >= 2")


def field_names() -> list[str]:
    return [f.name for f in fields(RunConfig) if f.name != "explicit"]
