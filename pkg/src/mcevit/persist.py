"""Model directories: ``model.mcew`` weights next to a ``model.cfg`` key-value file."""

from __future__ import annotations

from pathlib import Path

from .fusion import FusionConfig, FusionModel, ModelMismatchError, init_fusion_model
from .imaging import JpegSimConfig
from .nn import checkpoint
from .vit import VitConfig

WEIGHTS_NAME = "model.mcew"
CONFIG_NAME = "model.cfg"


def _triple(text: str) -> tuple[float, float, float]:
    vals = tuple(float(v) for v in text.split(","))
    if len(vals) != 3:
        raise ValueError(f"expected three comma-separated numbers, got {text!r}")
    return vals


def fusion_config_to_kv(cfg: FusionConfig) -> dict[str, str]:
    v = cfg.vit
    fmt = lambda t: ",".join(repr(float(x)) for x in t)  # noqa: E731
    return {
        "image_size": str(v.image_size),
        "patch_size": str(v.patch_size),
        "embed_dim": str(v.embed_dim),
        "depth": str(v.depth),
        "heads": str(v.heads),
        "mlp_ratio": repr(float(v.mlp_ratio)),
        "pool_kernel": str(cfg.pool_kernel),
        "pool_stride": str(cfg.pool_stride),
        "hidden": str(cfg.hidden),
        "classes": str(cfg.classes),
        "enrich_quality": str(cfg.enrichment.quality),
        "chroma_subsampling": cfg.enrichment.chroma_subsampling.value,
        "rgb_mean": fmt(cfg.rgb_mean),
        "rgb_std": fmt(cfg.rgb_std),
        "ycbcr_mean": fmt(cfg.ycbcr_mean),
        "ycbcr_std": fmt(cfg.ycbcr_std),
        "backbone_mode": cfg.backbone_mode.value,
        "variant": cfg.variant.value,
    }


def fusion_config_from_kv(kv: dict[str, str]) -> FusionConfig:
    vit = VitConfig(
        image_size=int(kv["image_size"]),
        patch_size=int(kv["patch_size"]),
        embed_dim=int(kv["embed_dim"]),
        depth=int(kv["depth"]),
        heads=int(kv["heads"]),
        mlp_ratio=float(kv["mlp_ratio"]),
    )
    return FusionConfig(
        vit=vit,
        pool_kernel=int(kv["pool_kernel"]),
        pool_stride=int(kv["pool_stride"]),
        hidden=int(kv["hidden"]),
        classes=int(kv["classes"]),
        enrichment=JpegSimConfig(int(kv["enrich_quality"]), kv["chroma_subsampling"]),
        rgb_mean=_triple(kv["rgb_mean"]),
        rgb_std=_triple(kv["rgb_std"]),
        ycbcr_mean=_triple(kv["ycbcr_mean"]),
        ycbcr_std=_triple(kv["ycbcr_std"]),
        backbone_mode=kv["backbone_mode"],
        variant=kv["variant"],
    )


def read_kv(path: str | Path) -> dict[str, str]:
    """Parse ``key = value`` lines; ``#`` starts a comment."""
    out: dict[str, str] = {}
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"{path}:{lineno}: expected 'key = value'")
        key, value = (s.strip() for s in line.split("=", 1))
        if not key:
            raise ValueError(f"{path}:{lineno}: empty key")
        out[key] = value
    return out


def write_kv(path: str | Path, kv: dict[str, str]) -> None:
    Path(path).write_text("".join(f"{k} = {v}\n" for k, v in kv.items()))


def save_model(directory: str | Path, model: FusionModel) -> tuple[Path, Path]:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    weights = directory / WEIGHTS_NAME
    config = directory / CONFIG_NAME
    checkpoint.save(weights, model.state_dict())
    write_kv(config, fusion_config_to_kv(model.config))
    return weights, config


def load_model(directory: str | Path) -> FusionModel:
    directory = Path(directory)
    try:
        cfg = fusion_config_from_kv(read_kv(directory / CONFIG_NAME))
    except KeyError as exc:
        raise ModelMismatchError(f"model config lacks key {exc.args[0]}") from None
    model = init_fusion_model(cfg, seed=0)
    model.load_state_dict(checkpoint.load(directory / WEIGHTS_NAME))
    return model
