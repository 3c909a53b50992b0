"""Labeled images, seeded 60:20:20 splits and the synthetic three-class generator."""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image, ImageDraw

from .imageio import read_ppm, write_ppm
from .imaging import ImageError, ImageU8

GAN, GRAPHICS, REAL = 0, 1, 2
CLASS_DIRS = ("gan", "graphics", "real")
SPLIT_FRACTIONS = (0.6, 0.2, 0.2)


class DatasetError(ValueError):
    pass


@dataclass(frozen=True)
class LabeledImage:
    image: ImageU8
    label: int
    id: str

    def __post_init__(self) -> None:
        if self.label not in (GAN, GRAPHICS, REAL):
            raise DatasetError(f"label must be 0, 1 or 2, got {self.label}")


@dataclass(frozen=True)
class DatasetSplit:
    train: list[str]
    validation: list[str]
    test: list[str]
    seed: int

    def partition_of(self) -> dict[str, str]:
        out = {i: "train" for i in self.train}
        out.update({i: "validation" for i in self.validation})
        out.update({i: "test" for i in self.test})
        return out


@dataclass(frozen=True)
class SynthConfig:
    per_class_count: int = 200
    image_size: int = 224
    seed: int = 7

    def __post_init__(self) -> None:
        if self.per_class_count < 10:
            raise ValueError(f"per_class_count must be >= 10, got {self.per_class_count}")
        if self.image_size < 16 or self.image_size % 16:
            raise ValueError(f"image_size must be a positive multiple of 16, got {self.image_size}")


# ---------------------------------------------------------------- loading


def load_dataset(root: str | Path) -> list[LabeledImage]:
    root = Path(root)
    items: list[LabeledImage] = []
    for label, name in enumerate(CLASS_DIRS):
        folder = root / name
        if not folder.is_dir():
            raise FileNotFoundError(f"missing class directory {folder}")
        for path in sorted(folder.glob("*.ppm")):
            try:
                img = read_ppm(path)
            except (OSError, ImageError) as exc:
                raise DatasetError(f"cannot read {path}: {exc}") from exc
            items.append(LabeledImage(img, label, f"{name}/{path.stem}"))
    return items


def save_dataset(items: list[LabeledImage], root: str | Path) -> list[Path]:
    root = Path(root)
    paths = []
    for name in CLASS_DIRS:
        (root / name).mkdir(parents=True, exist_ok=True)
    for item in items:
        path = root / f"{item.id}.ppm"
        write_ppm(path, item.image)
        paths.append(path)
    return paths


# ---------------------------------------------------------------- splitting


def split_dataset(items: list[LabeledImage], seed: int) -> DatasetSplit:
    """Shuffle each class with a seeded generator, then cut it 60/20/20."""
    if not items:
        raise DatasetError("cannot split an empty dataset")
    rng = np.random.default_rng(seed)
    train: list[str] = []
    val: list[str] = []
    test: list[str] = []
    for label in (GAN, GRAPHICS, REAL):
        ids = sorted(it.id for it in items if it.label == label)
        if not ids:
            continue
        if len(ids) < 5:
            raise DatasetError(f"class {CLASS_DIRS[label]} has {len(ids)} items; need at least 5 for 60:20:20")
        order = rng.permutation(len(ids))
        ids = [ids[i] for i in order]
        n_train = int(round(len(ids) * SPLIT_FRACTIONS[0]))
        n_val = int(round(len(ids) * SPLIT_FRACTIONS[1]))
        train += ids[:n_train]
        val += ids[n_train : n_train + n_val]
        test += ids[n_train + n_val :]
    return DatasetSplit(train, val, test, seed)


def write_split_manifest(path: str | Path, items: list[LabeledImage], split: DatasetSplit) -> None:
    """Rows follow split order (train, validation, test) so reading back is exact."""
    labels = {it.id: it.label for it in items}
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["id", "class", "partition"])
        for part, ids in (("train", split.train), ("validation", split.validation), ("test", split.test)):
            for ident in ids:
                w.writerow([ident, CLASS_DIRS[labels[ident]], part])


def read_split_manifest(path: str | Path) -> DatasetSplit:
    parts: dict[str, list[str]] = {"train": [], "validation": [], "test": []}
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            if row["partition"] not in parts:
                raise DatasetError(f"unknown partition {row['partition']!r} in {path}")
            parts[row["partition"]].append(row["id"])
    return DatasetSplit(parts["train"], parts["validation"], parts["test"], seed=-1)


def select(items: list[LabeledImage], ids: list[str]) -> list[LabeledImage]:
    by_id = {it.id: it for it in items}
    missing = [i for i in ids if i not in by_id]
    if missing:
        raise DatasetError(f"{len(missing)} split ids are not in the dataset, e.g. {missing[0]}")
    return [by_id[i] for i in ids]


# ---------------------------------------------------------------- synthesis


def _upsample(field: np.ndarray, size: int) -> np.ndarray:
    """Bicubic resize of a float 2-D field to ``size`` x ``size``."""
    img = Image.fromarray(field.astype(np.float32), mode="F")
    return np.asarray(img.resize((size, size), Image.BICUBIC), dtype=np.float64)


def _value_noise(rng: np.random.Generator, size: int, cells: list[int], falloff: float) -> np.ndarray:
    out = np.zeros((size, size))
    amp = 1.0
    for c in cells:
        out += amp * _upsample(rng.standard_normal((c, c)), size)
        amp *= falloff
    return out / (np.std(out) + 1e-12)


def _base_color(rng: np.random.Generator) -> np.ndarray:
    return rng.uniform(70, 185, size=3)


def _finish(rgb: np.ndarray) -> ImageU8:
    return ImageU8(np.clip(np.floor(rgb + 0.5), 0, 255).astype(np.uint8))


def _to_rgb(luma: np.ndarray, cb: np.ndarray, cr: np.ndarray) -> np.ndarray:
    r = luma + 1.402 * cr
    g = luma - 0.344136 * cb - 0.714136 * cr
    b = luma + 1.772 * cb
    return np.stack([r, g, b], axis=-1)


def synth_real(rng: np.random.Generator, size: int) -> ImageU8:
    """Multi-octave value noise, sensor-like grain and a mild vignette."""
    base = _base_color(rng)
    contrast = rng.uniform(20, 40)
    chroma_contrast = rng.uniform(10, 18)
    luma = base.mean() + contrast * _value_noise(rng, size, [3, 7, 14, 28], 0.7)
    luma += rng.uniform(6, 10) * _value_noise(rng, size, [112], 1.0)
    chroma_cells = [4, 8, 16]
    cb = chroma_contrast * _value_noise(rng, size, chroma_cells, 0.9) + (base[2] - base.mean()) * 0.5
    cr = chroma_contrast * _value_noise(rng, size, chroma_cells, 0.9) + (base[0] - base.mean()) * 0.5
    rgb = _to_rgb(luma, cb, cr)
    yy, xx = np.mgrid[0:size, 0:size]
    r2 = ((yy - size / 2 + 0.5) ** 2 + (xx - size / 2 + 0.5) ** 2) / (size / 2) ** 2
    rgb *= (1.0 - 0.06 * r2)[..., None]
    rgb += rng.standard_normal(rgb.shape) * 2.0
    return _finish(rgb)


def synth_gan(rng: np.random.Generator, size: int) -> ImageU8:
    """A low-resolution random field upsampled 8x; chroma is smoother still."""
    low = size // 8
    base = _base_color(rng)
    contrast = rng.uniform(20, 40)
    luma_low = _value_noise(rng, low, [max(low // 8, 2), max(low // 4, 2), max(low // 2, 2), low], 0.7)
    luma = base.mean() + contrast * _upsample(luma_low, size)
    chroma_contrast = rng.uniform(3, 7)
    chroma_low = max(low // 4, 2)
    cb = chroma_contrast * _upsample(_value_noise(rng, chroma_low, [2, chroma_low], 0.7), size)
    cr = chroma_contrast * _upsample(_value_noise(rng, chroma_low, [2, chroma_low], 0.7), size)
    cb += (base[2] - base.mean()) * 0.5
    cr += (base[0] - base.mean()) * 0.5
    return _finish(_to_rgb(luma, cb, cr))


def synth_graphics(rng: np.random.Generator, size: int) -> ImageU8:
    """Flat-shaded random polygons with hard edges, at most 16 colors."""
    base = _base_color(rng)
    n_colors = int(rng.integers(4, 16))
    spread = rng.uniform(70, 110)
    palette = np.clip(base + rng.normal(0, spread, size=(n_colors, 3)), 0, 255).astype(np.uint8)
    canvas = Image.new("RGB", (size, size), tuple(int(v) for v in palette[0]))
    draw = ImageDraw.Draw(canvas)
    for _ in range(int(rng.integers(80, 140))):
        cx, cy = rng.uniform(0, size, size=2)
        radius = rng.uniform(size * 0.03, size * 0.18)
        k = int(rng.integers(3, 7))
        angles = np.sort(rng.uniform(0, 2 * np.pi, size=k))
        radii = radius * rng.uniform(0.5, 1.0, size=k)
        pts = [(float(cx + r * np.cos(a)), float(cy + r * np.sin(a))) for a, r in zip(angles, radii)]
        color = palette[int(rng.integers(1, n_colors))]
        draw.polygon(pts, fill=tuple(int(v) for v in color))
    return ImageU8(np.asarray(canvas, dtype=np.uint8).copy())


_SYNTHESIZERS = {GAN: synth_gan, GRAPHICS: synth_graphics, REAL: synth_real}


def synth_image(seed: int, label: int, index: int, size: int) -> ImageU8:
    rng = np.random.default_rng(np.random.SeedSequence([seed, label, index]))
    return _SYNTHESIZERS[label](rng, size)


def generate_synthetic(cfg: SynthConfig) -> list[LabeledImage]:
    items = []
    for label, name in enumerate(CLASS_DIRS):
        for i in range(cfg.per_class_count):
            img = synth_image(cfg.seed, label, i, cfg.image_size)
            items.append(LabeledImage(img, label, f"{name}/{name}_{i:05d}"))
    return items
