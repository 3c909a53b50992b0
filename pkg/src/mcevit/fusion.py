"""The two-branch model: RGB ViT, enriched-YCbCr ViT, pooled concat, dense head."""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Iterable

import numpy as np

from . import imaging, nn
from .imaging import ImageU8, JpegSimConfig
from .nn import Tensor
from .vit import VitConfig, init_vit, vit_forward

CLASS_NAMES = ("gan", "graphics", "real")


class BackboneMode(str, enum.Enum):
    FROZEN = "frozen"
    END_TO_END = "end_to_end"


class Variant(str, enum.Enum):
    FUSED = "fused"
    RGB_ONLY = "rgb_only"


class ModelMismatchError(ValueError):
    """Parameters do not match the model configuration."""


@dataclass(frozen=True)
class FusionConfig:
    vit: VitConfig = field(default_factory=VitConfig)
    pool_kernel: int = 16
    pool_stride: int = 16
    hidden: int = 512
    classes: int = 3
    enrichment: JpegSimConfig = field(default_factory=JpegSimConfig)
    rgb_mean: tuple[float, float, float] = (0.5, 0.5, 0.5)
    rgb_std: tuple[float, float, float] = (0.5, 0.5, 0.5)
    ycbcr_mean: tuple[float, float, float] = (0.5, 0.5, 0.5)
    ycbcr_std: tuple[float, float, float] = (0.5, 0.5, 0.5)
    backbone_mode: BackboneMode = BackboneMode.FROZEN
    variant: Variant = Variant.FUSED

    def __post_init__(self) -> None:
        object.__setattr__(self, "backbone_mode", BackboneMode(self.backbone_mode))
        object.__setattr__(self, "variant", Variant(self.variant))
        if self.classes != 3:
            raise ValueError(f"classes must be 3, got {self.classes}")
        if self.pool_kernel < 1 or self.pool_stride < 1 or self.hidden < 1:
            raise ValueError("pool_kernel, pool_stride and hidden must be positive")
        d = self.vit.embed_dim
        if self.pool_kernel > d:
            raise ValueError(f"pool_kernel {self.pool_kernel} exceeds embed_dim {d}")
        if self.pool_stride == self.pool_kernel and d % self.pool_kernel:
            raise ValueError(f"embed_dim {d} not divisible by pool_kernel {self.pool_kernel}")
        for name in ("rgb_std", "ycbcr_std"):
            if any(s <= 0 for s in getattr(self, name)):
                raise ValueError(f"{name} entries must be positive")

    @property
    def pooled_width(self) -> int:
        return (self.vit.embed_dim - self.pool_kernel) // self.pool_stride + 1

    @property
    def head_input_width(self) -> int:
        if self.variant is Variant.RGB_ONLY:
            return self.vit.embed_dim
        return self.pooled_width + self.vit.embed_dim


def head_param_count(cfg: FusionConfig) -> int:
    """Closed-form size of the dense head (the only trainable part when frozen)."""
    z = cfg.head_input_width
    return z * cfg.hidden + cfg.hidden + cfg.hidden * cfg.classes + cfg.classes


def init_head(cfg: FusionConfig, rng: np.random.Generator) -> dict[str, Tensor]:
    z, h, c = cfg.head_input_width, cfg.hidden, cfg.classes

    def glorot(fan_in, fan_out):
        limit = np.sqrt(6.0 / (fan_in + fan_out))
        return rng.uniform(-limit, limit, size=(fan_in, fan_out))

    return {
        "w1": Tensor(glorot(z, h), requires_grad=True),
        "b1": Tensor(np.zeros(h), requires_grad=True),
        "w2": Tensor(glorot(h, c), requires_grad=True),
        "b2": Tensor(np.zeros(c), requires_grad=True),
    }


@dataclass
class FusionModel:
    config: FusionConfig
    rgb_branch: dict[str, Tensor]
    ycbcr_branch: dict[str, Tensor] | None
    head: dict[str, Tensor]

    def parameters(self) -> dict[str, Tensor]:
        out = {f"rgb.{k}": v for k, v in self.rgb_branch.items()}
        if self.ycbcr_branch is not None:
            out.update({f"ycbcr.{k}": v for k, v in self.ycbcr_branch.items()})
        out.update({f"head.{k}": v for k, v in self.head.items()})
        return out

    def trainable_parameters(self) -> dict[str, Tensor]:
        if self.config.backbone_mode is BackboneMode.FROZEN:
            return {f"head.{k}": v for k, v in self.head.items()}
        return self.parameters()

    def trainable_param_count(self) -> int:
        return sum(p.size for p in self.trainable_parameters().values())

    def set_trainable(self) -> None:
        """Flag exactly the trainable tensors as requiring gradients."""
        trainable = set(self.trainable_parameters())
        for name, p in self.parameters().items():
            p.requires_grad = name in trainable
            p.grad = None

    def state_dict(self) -> dict[str, np.ndarray]:
        return {k: v.data.copy() for k, v in self.parameters().items()}

    def load_state_dict(self, state: dict[str, np.ndarray]) -> None:
        params = self.parameters()
        missing = sorted(set(params) - set(state))
        extra = sorted(set(state) - set(params))
        if missing or extra:
            raise ModelMismatchError(f"checkpoint mismatch: missing {missing[:3]}, unexpected {extra[:3]}")
        for name, p in params.items():
            arr = np.asarray(state[name])
            if arr.shape != p.shape:
                raise ModelMismatchError(f"checkpoint tensor {name} has shape {arr.shape}, model expects {p.shape}")
            p.data = arr.astype(p.data.dtype, copy=True)


def init_fusion_model(cfg: FusionConfig, seed: int) -> FusionModel:
    rgb_seq, ycc_seq, head_seq = np.random.SeedSequence(seed).spawn(3)
    rgb = init_vit(cfg.vit, np.random.default_rng(rgb_seq))
    ycc = init_vit(cfg.vit, np.random.default_rng(ycc_seq)) if cfg.variant is Variant.FUSED else None
    model = FusionModel(cfg, rgb, ycc, init_head(cfg, np.random.default_rng(head_seq)))
    model.set_trainable()
    return model


# ---------------------------------------------------------------- preprocessing


def _normalize(planes: np.ndarray, mean, std) -> np.ndarray:
    m = np.asarray(mean, dtype=np.float64)[:, None, None]
    s = np.asarray(std, dtype=np.float64)[:, None, None]
    return (planes - m) / s


def enriched_planes(img: ImageU8, enrichment: JpegSimConfig) -> np.ndarray:
    """``(3, H, W)`` enriched Y, Cb, Cr for any image size (edge-padded internally)."""
    planes = imaging.rgb_to_ycbcr(img)
    padded = imaging.pad_planes(planes, 16)
    out = imaging.enrich(padded, enrichment)
    return out.stack()[:, : img.height, : img.width]


def preprocess(img: ImageU8, cfg: FusionConfig) -> tuple[np.ndarray, np.ndarray]:
    """Produce the normalized RGB planes and normalized enriched-YCbCr planes."""
    if img.height < 1 or img.width < 1:
        raise imaging.ImageError("degenerate image")
    size = cfg.vit.image_size
    img = imaging.resize_bilinear(img, size, size)
    rgb = img.data.transpose(2, 0, 1).astype(np.float64) / 255.0
    rgb = _normalize(rgb, cfg.rgb_mean, cfg.rgb_std)
    ycc = enriched_planes(img, cfg.enrichment) / 255.0
    ycc = _normalize(ycc, cfg.ycbcr_mean, cfg.ycbcr_std)
    dtype = nn.get_default_dtype()
    return rgb.astype(dtype), ycc.astype(dtype)


def preprocess_batch(images: Iterable[ImageU8], cfg: FusionConfig) -> tuple[np.ndarray, np.ndarray]:
    pairs = [preprocess(img, cfg) for img in images]
    if not pairs:
        d = cfg.vit.image_size
        empty = np.zeros((0, 3, d, d), dtype=nn.get_default_dtype())
        return empty, empty.copy()
    return np.stack([p[0] for p in pairs]), np.stack([p[1] for p in pairs])


# ---------------------------------------------------------------- forward


@dataclass
class ForwardResult:
    logits: Tensor
    probabilities: Tensor
    features: Tensor
    rgb_attention: np.ndarray | None = None
    ycbcr_attention: np.ndarray | None = None


def fused_features(model: FusionModel, rgb, enriched, record_attention: bool = False):
    """Concatenated pre-head vector ``z`` plus optional per-branch attention."""
    cfg = model.config
    f_rgb, attn_rgb = vit_forward(model.rgb_branch, rgb, cfg.vit, record_attention)
    if cfg.variant is Variant.RGB_ONLY:
        return f_rgb, attn_rgb, None
    pooled = nn.avg_pool_1d(f_rgb, cfg.pool_kernel, cfg.pool_stride)
    f_y, attn_y = vit_forward(model.ycbcr_branch, enriched, cfg.vit, record_attention)
    return nn.concat([pooled, f_y], axis=-1), attn_rgb, attn_y


def head_forward(head: dict[str, Tensor], z: Tensor) -> tuple[Tensor, Tensor]:
    if z.shape[-1] != head["w1"].shape[0]:
        raise nn.ShapeError(f"head expects width {head['w1'].shape[0]}, got {z.shape}")
    hidden = nn.relu(nn.linear(z, head["w1"], head["b1"]))
    logits = nn.linear(hidden, head["w2"], head["b2"])
    return logits, nn.softmax(logits, axis=-1)


def head_probabilities(head: dict[str, Tensor], z: np.ndarray, batch_size: int = 16) -> np.ndarray:
    """Head-only inference over cached features, chunked like :func:`infer_probabilities`."""
    out = [np.zeros((0, head["w2"].shape[1]), dtype=nn.get_default_dtype())]
    with nn.no_grad():
        for i in range(0, len(z), batch_size):
            out.append(head_forward(head, Tensor(z[i : i + batch_size]))[1].data)
    return np.concatenate(out)


def fused_forward(model: FusionModel, rgb, enriched, record_attention: bool = False) -> ForwardResult:
    """Forward a batch of preprocessed ``(B, 3, S, S)`` planes through both branches."""
    rgb = rgb if isinstance(rgb, Tensor) else Tensor(rgb)
    if rgb.ndim == 3:
        rgb = rgb.reshape(1, *rgb.shape)
    if enriched is not None:
        enriched = enriched if isinstance(enriched, Tensor) else Tensor(enriched)
        if enriched.ndim == 3:
            enriched = enriched.reshape(1, *enriched.shape)
    z, attn_rgb, attn_y = fused_features(model, rgb, enriched, record_attention)
    logits, probs = head_forward(model.head, z)
    return ForwardResult(logits, probs, z, attn_rgb, attn_y)


def predict_from_probabilities(probs) -> np.ndarray:
    """Arg-max label per row; ties go to the lowest class index."""
    p = np.asarray(probs.data if isinstance(probs, Tensor) else probs)
    return np.argmax(p, axis=-1)


def predict(model: FusionModel, img: ImageU8) -> int:
    rgb, ycc = preprocess(img, model.config)
    with nn.no_grad():
        result = fused_forward(model, rgb, ycc)
    return int(predict_from_probabilities(result.probabilities)[0])


def infer_probabilities(
    model: FusionModel, rgb: np.ndarray, enriched: np.ndarray, batch_size: int = 16
) -> tuple[np.ndarray, np.ndarray]:
    """Batched no-grad inference; returns ``(probabilities, features)``."""
    probs, feats = [], []
    with nn.no_grad():
        for i in range(0, len(rgb), batch_size):
            res = fused_forward(model, rgb[i : i + batch_size], enriched[i : i + batch_size])
            probs.append(res.probabilities.data)
            feats.append(res.features.data)
    if not probs:
        return np.zeros((0, model.config.classes)), np.zeros((0, model.config.head_input_width))
    return np.concatenate(probs), np.concatenate(feats)
