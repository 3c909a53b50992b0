"""Minimal pre-norm vision transformer encoder and attention rollout."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import nn
from .nn import Tensor


@dataclass(frozen=True)
class VitConfig:
    image_size: int = 224
    patch_size: int = 16
    in_planes: int = 3
    embed_dim: int = 128
    depth: int = 4
    heads: int = 4
    mlp_ratio: float = 4.0

    def __post_init__(self) -> None:
        if self.image_size < 1 or self.patch_size < 1 or self.image_size % self.patch_size:
            raise ValueError(f"image_size {self.image_size} not divisible by patch_size {self.patch_size}")
        if self.embed_dim < 1 or self.heads < 1 or self.embed_dim % self.heads:
            raise ValueError(f"embed_dim {self.embed_dim} not divisible by heads {self.heads}")
        if self.depth < 0 or self.in_planes < 1 or self.mlp_ratio <= 0:
            raise ValueError("depth must be >= 0, in_planes >= 1 and mlp_ratio > 0")

    @property
    def grid(self) -> int:
        return self.image_size // self.patch_size

    @property
    def num_patches(self) -> int:
        return self.grid * self.grid

    @property
    def num_tokens(self) -> int:
        return self.num_patches + 1

    @property
    def patch_dim(self) -> int:
        return self.in_planes * self.patch_size * self.patch_size

    @property
    def mlp_dim(self) -> int:
        return int(round(self.embed_dim * self.mlp_ratio))


# name -> Tensor, in a fixed creation order
VitParams = dict


def _xavier(rng: np.random.Generator, fan_in: int, fan_out: int) -> np.ndarray:
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=(fan_in, fan_out))


def init_vit(cfg: VitConfig, rng: np.random.Generator) -> VitParams:
    d, m = cfg.embed_dim, cfg.mlp_dim
    arrays: dict[str, np.ndarray] = {
        "patch.w": _xavier(rng, cfg.patch_dim, d),
        "patch.b": np.zeros(d),
        "cls": rng.normal(0.0, 0.02, size=(1, 1, d)),
        "pos": rng.normal(0.0, 0.02, size=(1, cfg.num_tokens, d)),
    }
    for i in range(cfg.depth):
        p = f"blocks.{i}."
        arrays[p + "ln1.g"] = np.ones(d)
        arrays[p + "ln1.b"] = np.zeros(d)
        for proj in ("q", "k", "v", "o"):
            arrays[p + f"attn.{proj}.w"] = _xavier(rng, d, d)
            arrays[p + f"attn.{proj}.b"] = np.zeros(d)
        arrays[p + "ln2.g"] = np.ones(d)
        arrays[p + "ln2.b"] = np.zeros(d)
        arrays[p + "mlp.fc1.w"] = _xavier(rng, d, m)
        arrays[p + "mlp.fc1.b"] = np.zeros(m)
        arrays[p + "mlp.fc2.w"] = _xavier(rng, m, d)
        arrays[p + "mlp.fc2.b"] = np.zeros(d)
    arrays["ln.g"] = np.ones(d)
    arrays["ln.b"] = np.zeros(d)
    return {k: Tensor(v, requires_grad=True) for k, v in arrays.items()}


def expected_shapes(cfg: VitConfig) -> dict[str, tuple[int, ...]]:
    return {k: v.shape for k, v in init_vit(cfg, np.random.default_rng(0)).items()}


def patchify(images: Tensor, cfg: VitConfig) -> Tensor:
    """``(B, C, H, W)`` -> ``(B, patches, C*P*P)``, patches in row-major grid order."""
    b = images.shape[0]
    g, p = cfg.grid, cfg.patch_size
    x = images.reshape(b, cfg.in_planes, g, p, g, p)
    x = x.transpose(0, 2, 4, 1, 3, 5)
    return x.reshape(b, g * g, cfg.patch_dim)


def patch_embed(params: VitParams, images: Tensor, cfg: VitConfig) -> Tensor:
    """Token embeddings of the patches, before the class token and positions."""
    return nn.linear(patchify(images, cfg), params["patch.w"], params["patch.b"])


def _attention(params: VitParams, prefix: str, x: Tensor, cfg: VitConfig, record: list | None) -> Tensor:
    b, t, d = x.shape
    h = cfg.heads
    dh = d // h

    def heads(name: str) -> Tensor:
        y = nn.linear(x, params[f"{prefix}{name}.w"], params[f"{prefix}{name}.b"])
        return y.reshape(b, t, h, dh).transpose(0, 2, 1, 3)

    q, k, v = heads("q"), heads("k"), heads("v")
    scores = (q @ k.transpose(0, 1, 3, 2)) * float(1.0 / np.sqrt(dh))
    attn = nn.softmax(scores, axis=-1)
    if record is not None:
        record.append(attn.data.copy())
    out = (attn @ v).transpose(0, 2, 1, 3).reshape(b, t, d)
    return nn.linear(out, params[f"{prefix}o.w"], params[f"{prefix}o.b"])


def vit_forward(
    params: VitParams,
    images,
    cfg: VitConfig,
    record_attention: bool = False,
) -> tuple[Tensor, np.ndarray | None]:
    """Encode a batch of ``(B, C, H, W)`` planes to class-token features ``(B, D)``.

    When ``record_attention`` is set the second return value holds the attention
    probabilities shaped ``(B, depth, heads, tokens, tokens)``.
    """
    images = nn.tensor.as_tensor(images)
    if images.ndim != 4 or images.shape[1:] != (cfg.in_planes, cfg.image_size, cfg.image_size):
        raise nn.ShapeError(
            f"expected input (B, {cfg.in_planes}, {cfg.image_size}, {cfg.image_size}), got {images.shape}"
        )
    b = images.shape[0]
    d = cfg.embed_dim
    tokens = patch_embed(params, images, cfg)
    cls = params["cls"] + Tensor(np.zeros((b, 1, d), dtype=tokens.data.dtype))
    x = nn.concat([cls, tokens], axis=1) + params["pos"]
    record: list | None = [] if record_attention else None
    for i in range(cfg.depth):
        p = f"blocks.{i}."
        h = nn.layer_norm(x, params[p + "ln1.g"], params[p + "ln1.b"])
        x = x + _attention(params, p + "attn.", h, cfg, record)
        h = nn.layer_norm(x, params[p + "ln2.g"], params[p + "ln2.b"])
        h = nn.gelu(nn.linear(h, params[p + "mlp.fc1.w"], params[p + "mlp.fc1.b"]))
        x = x + nn.linear(h, params[p + "mlp.fc2.w"], params[p + "mlp.fc2.b"])
    x = nn.layer_norm(x, params["ln.g"], params["ln.b"])
    feature = x[:, 0, :]
    attn = None
    if record is not None:
        attn = np.stack(record, axis=1) if record else np.zeros((b, 0, cfg.heads, x.shape[1], x.shape[1]))
    return feature, attn


def rollout_matrix(attn: np.ndarray) -> np.ndarray:
    """Chain head-averaged, identity-augmented, row-renormalized attention over layers.

    ``attn`` is one image's record shaped ``(layers, heads, tokens, tokens)``.
    """
    attn = np.asarray(attn, dtype=np.float64)
    if attn.ndim != 4 or attn.shape[0] == 0:
        raise ValueError("attention record is empty")
    t = attn.shape[-1]
    eye = np.eye(t)
    result = eye
    for layer in attn:
        a = layer.mean(axis=0) + eye
        a = a / a.sum(axis=-1, keepdims=True)
        result = a @ result
    return result


def attention_rollout(attn: np.ndarray) -> np.ndarray:
    """Class-token rollout heatmap over the patch grid, min-max scaled to [0, 1].

    A flat map (max == min) comes back as all zeros.
    """
    rolled = rollout_matrix(attn)
    row = rolled[0, 1:]
    n = row.size
    g = int(round(np.sqrt(n)))
    if g * g != n:
        raise ValueError(f"{n} patch tokens do not form a square grid")
    lo, hi = row.min(), row.max()
    if hi - lo <= 0:
        return np.zeros((g, g))
    return ((row - lo) / (hi - lo)).reshape(g, g)
