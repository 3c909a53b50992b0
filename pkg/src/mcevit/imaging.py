"""Color conversion, simulated JPEG degradation, noise and chroma-error enrichment.

All plane math runs in float64 on numpy arrays shaped ``(height, width)``.
Images are ``uint8`` arrays shaped ``(height, width, 3)``, which is exactly the
row-major interleaved R,G,B layout.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np


class ImageError(ValueError):
    """Raised for malformed images or misaligned plane dimensions."""


class Subsampling(str, enum.Enum):
    S420 = "4:2:0"
    S444 = "4:4:4"


@dataclass(frozen=True)
class ImageU8:
    data: np.ndarray

    def __post_init__(self) -> None:
        d = self.data
        if not isinstance(d, np.ndarray) or d.dtype != np.uint8:
            raise ImageError("image data must be a uint8 ndarray")
        if d.ndim != 3 or d.shape[2] != 3:
            raise ImageError(f"image data must have shape (H, W, 3), got {d.shape}")
        if d.shape[0] < 1 or d.shape[1] < 1:
            raise ImageError("image has zero area")

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @classmethod
    def from_bytes(cls, width: int, height: int, raw: bytes) -> "ImageU8":
        if len(raw) != width * height * 3:
            raise ImageError(
                f"expected {width * height * 3} bytes for {width}x{height}, got {len(raw)}"
            )
        return cls(np.frombuffer(raw, dtype=np.uint8).reshape(height, width, 3).copy())

    def to_bytes(self) -> bytes:
        return np.ascontiguousarray(self.data).tobytes()


@dataclass(frozen=True)
class PlanarYCbCr:
    y_plane: np.ndarray
    cb_plane: np.ndarray
    cr_plane: np.ndarray

    def __post_init__(self) -> None:
        shapes = {self.y_plane.shape, self.cb_plane.shape, self.cr_plane.shape}
        if len(shapes) != 1 or self.y_plane.ndim != 2:
            raise ImageError(f"plane shapes differ or are not 2-D: {sorted(shapes)}")

    @property
    def height(self) -> int:
        return self.y_plane.shape[0]

    @property
    def width(self) -> int:
        return self.y_plane.shape[1]

    def stack(self) -> np.ndarray:
        return np.stack([self.y_plane, self.cb_plane, self.cr_plane])


@dataclass(frozen=True)
class EnrichedYCbCr(PlanarYCbCr):
    """YCbCr planes whose chroma carries the added compression error (unclamped)."""


@dataclass(frozen=True)
class JpegSimConfig:
    quality: int = 90
    chroma_subsampling: Subsampling = Subsampling.S420

    def __post_init__(self) -> None:
        if not 1 <= int(self.quality) <= 100:
            raise ValueError(f"JPEG quality must be in [1, 100], got {self.quality}")
        object.__setattr__(self, "chroma_subsampling", Subsampling(self.chroma_subsampling))


@dataclass(frozen=True)
class NoiseSpec:
    sigma: float
    seed: int = 0

    def __post_init__(self) -> None:
        if not self.sigma >= 0:
            raise ValueError(f"noise sigma must be >= 0, got {self.sigma}")


def round_half_away(x: np.ndarray) -> np.ndarray:
    return np.sign(x) * np.floor(np.abs(x) + 0.5)


# Plane values live on a 2**-32 grid. With magnitudes below 2**20 every sum and
# difference of two plane values is then exact in float64, so the enrichment
# identities C + (C - C') == 2C - C' and (C + d) - C == d hold bit for bit.
PLANE_GRID = 2.0**32


def snap(x: np.ndarray) -> np.ndarray:
    return round_half_away(np.asarray(x, dtype=np.float64) * PLANE_GRID) / PLANE_GRID


# JFIF full-range coefficients
_RGB2YCC = np.array(
    [
        [0.299, 0.587, 0.114],
        [-0.168736, -0.331264, 0.5],
        [0.5, -0.418688, -0.081312],
    ]
)
_YCC2RGB = np.array(
    [
        [1.0, 0.0, 1.402],
        [1.0, -0.344136, -0.714136],
        [1.0, 1.772, 0.0],
    ]
)


def rgb_to_ycbcr(img: ImageU8) -> PlanarYCbCr:
    rgb = img.data.astype(np.float64)
    ycc = rgb @ _RGB2YCC.T
    ycc[..., 1:] += 128.0
    ycc = snap(np.clip(ycc, 0.0, 255.0))
    return PlanarYCbCr(
        np.ascontiguousarray(ycc[..., 0]),
        np.ascontiguousarray(ycc[..., 1]),
        np.ascontiguousarray(ycc[..., 2]),
    )


def ycbcr_to_rgb(planes: PlanarYCbCr) -> ImageU8:
    ycc = np.stack([planes.y_plane, planes.cb_plane - 128.0, planes.cr_plane - 128.0], axis=-1)
    if not np.all(np.isfinite(ycc)):
        raise ImageError("non-finite plane values")
    rgb = round_half_away(ycc @ _YCC2RGB.T)
    return ImageU8(np.clip(rgb, 0, 255).astype(np.uint8))


# Annex K base tables
LUMA_BASE = np.array(
    [
        [16, 11, 10, 16, 24, 40, 51, 61],
        [12, 12, 14, 19, 26, 58, 60, 55],
        [14, 13, 16, 24, 40, 57, 69, 56],
        [14, 17, 22, 29, 51, 87, 80, 62],
        [18, 22, 37, 56, 68, 109, 103, 77],
        [24, 35, 55, 64, 81, 104, 113, 92],
        [49, 64, 78, 87, 103, 121, 120, 101],
        [72, 92, 95, 98, 112, 100, 103, 99],
    ],
    dtype=np.int64,
)
CHROMA_BASE = np.array(
    [
        [17, 18, 24, 47, 99, 99, 99, 99],
        [18, 21, 26, 66, 99, 99, 99, 99],
        [24, 26, 56, 99, 99, 99, 99, 99],
        [47, 66, 99, 99, 99, 99, 99, 99],
        [99, 99, 99, 99, 99, 99, 99, 99],
        [99, 99, 99, 99, 99, 99, 99, 99],
        [99, 99, 99, 99, 99, 99, 99, 99],
        [99, 99, 99, 99, 99, 99, 99, 99],
    ],
    dtype=np.int64,
)


def quant_table(base: np.ndarray, quality: int) -> np.ndarray:
    """Scale a base quantization table the libjpeg way."""
    if not 1 <= quality <= 100:
        raise ValueError(f"quality must be in [1, 100], got {quality}")
    scale = 5000 // quality if quality < 50 else 200 - 2 * quality
    table = (base * scale + 50) // 100
    return np.clip(table, 1, 255).astype(np.float64)


def dct_matrix(n: int = 8) -> np.ndarray:
    """Orthonormal DCT-II basis; rows are frequencies."""
    k = np.arange(n)[:, None]
    i = np.arange(n)[None, :]
    m = np.cos(np.pi * (2 * i + 1) * k / (2 * n)) * np.sqrt(2.0 / n)
    m[0] /= np.sqrt(2.0)
    return m


_DCT8 = dct_matrix(8)


def _blockwise_quantize(plane: np.ndarray, table: np.ndarray) -> np.ndarray:
    h, w = plane.shape
    blocks = (plane - 128.0).reshape(h // 8, 8, w // 8, 8).transpose(0, 2, 1, 3)
    coef = _DCT8 @ blocks @ _DCT8.T
    coef = round_half_away(coef / table) * table
    out = _DCT8.T @ coef @ _DCT8
    return snap(out.transpose(0, 2, 1, 3).reshape(h, w) + 128.0)


def _downsample2(plane: np.ndarray) -> np.ndarray:
    h, w = plane.shape
    return plane.reshape(h // 2, 2, w // 2, 2).mean(axis=(1, 3))


def _upsample2(plane: np.ndarray) -> np.ndarray:
    return np.repeat(np.repeat(plane, 2, axis=0), 2, axis=1)


def jpeg_degrade(planes: PlanarYCbCr, cfg: JpegSimConfig) -> PlanarYCbCr:
    """Run the lossy stages of baseline JPEG (subsampling + DCT quantization)."""
    align = 16 if cfg.chroma_subsampling is Subsampling.S420 else 8
    h, w = planes.height, planes.width
    if h % align or w % align:
        raise ImageError(f"plane size {w}x{h} is not a multiple of {align} for {cfg.chroma_subsampling.value}")
    luma_t = quant_table(LUMA_BASE, cfg.quality)
    chroma_t = quant_table(CHROMA_BASE, cfg.quality)
    y = _blockwise_quantize(planes.y_plane, luma_t)
    chroma = []
    for c in (planes.cb_plane, planes.cr_plane):
        if cfg.chroma_subsampling is Subsampling.S420:
            chroma.append(_upsample2(_blockwise_quantize(_downsample2(c), chroma_t)))
        else:
            chroma.append(_blockwise_quantize(c, chroma_t))
    return PlanarYCbCr(y, chroma[0], chroma[1])


def pad_to_multiple(img: ImageU8, multiple: int = 16) -> ImageU8:
    h, w = img.height, img.width
    ph, pw = -h % multiple, -w % multiple
    if not ph and not pw:
        return img
    return ImageU8(np.pad(img.data, ((0, ph), (0, pw), (0, 0)), mode="edge"))


def pad_planes(planes: PlanarYCbCr, multiple: int = 16) -> PlanarYCbCr:
    ph, pw = -planes.height % multiple, -planes.width % multiple
    if not ph and not pw:
        return planes
    pad = lambda p: np.pad(p, ((0, ph), (0, pw)), mode="edge")  # noqa: E731
    return PlanarYCbCr(pad(planes.y_plane), pad(planes.cb_plane), pad(planes.cr_plane))


def crop_planes(planes: PlanarYCbCr, height: int, width: int) -> PlanarYCbCr:
    return PlanarYCbCr(
        planes.y_plane[:height, :width].copy(),
        planes.cb_plane[:height, :width].copy(),
        planes.cr_plane[:height, :width].copy(),
    )


def jpeg_degrade_any(planes: PlanarYCbCr, cfg: JpegSimConfig) -> PlanarYCbCr:
    """``jpeg_degrade`` for arbitrary sizes: edge-replicate, degrade, crop back."""
    out = jpeg_degrade(pad_planes(planes, 16), cfg)
    return crop_planes(out, planes.height, planes.width)


def enrich(planes: PlanarYCbCr, cfg: JpegSimConfig) -> EnrichedYCbCr:
    """Add the chroma compression error back onto the chroma planes.

    Luma is copied untouched; chroma becomes ``C + (C - C')`` where ``C'`` is the
    degraded plane. Values are deliberately left unclamped.
    """
    degraded = jpeg_degrade(planes, cfg)
    cb = planes.cb_plane + (planes.cb_plane - degraded.cb_plane)
    cr = planes.cr_plane + (planes.cr_plane - degraded.cr_plane)
    return EnrichedYCbCr(planes.y_plane.copy(), cb, cr)


def add_gaussian_noise(img: ImageU8, spec: NoiseSpec) -> ImageU8:
    if spec.sigma == 0:
        return ImageU8(img.data.copy())
    rng = np.random.default_rng(spec.seed)
    noise = rng.standard_normal(img.data.shape) * spec.sigma
    out = round_half_away(img.data.astype(np.float64) + noise)
    return ImageU8(np.clip(out, 0, 255).astype(np.uint8))


def jpeg_roundtrip(img: ImageU8, cfg: JpegSimConfig) -> ImageU8:
    """Degrade an RGB image through simulated JPEG and convert back to RGB."""
    return ycbcr_to_rgb(jpeg_degrade_any(rgb_to_ycbcr(img), cfg))


def psnr(a: np.ndarray, b: np.ndarray, peak: float = 255.0) -> float:
    mse = float(np.mean((np.asarray(a, np.float64) - np.asarray(b, np.float64)) ** 2))
    if mse == 0:
        return float("inf")
    return 10.0 * np.log10(peak * peak / mse)


def resize_bilinear(img: ImageU8, height: int, width: int) -> ImageU8:
    """Bilinear resize with half-pixel centers and edge clamping."""
    if img.height == height and img.width == width:
        return img
    if height < 1 or width < 1:
        raise ImageError("target size has zero area")
    src = img.data.astype(np.float64)

    def coords(n_out: int, n_in: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        x = (np.arange(n_out) + 0.5) * (n_in / n_out) - 0.5
        x = np.clip(x, 0, n_in - 1)
        lo = np.floor(x).astype(np.int64)
        hi = np.minimum(lo + 1, n_in - 1)
        return lo, hi, x - lo

    y0, y1, fy = coords(height, img.height)
    x0, x1, fx = coords(width, img.width)
    top = src[y0][:, x0] * (1 - fx)[None, :, None] + src[y0][:, x1] * fx[None, :, None]
    bot = src[y1][:, x0] * (1 - fx)[None, :, None] + src[y1][:, x1] * fx[None, :, None]
    out = top * (1 - fy)[:, None, None] + bot * fy[:, None, None]
    return ImageU8(np.clip(round_half_away(out), 0, 255).astype(np.uint8))
