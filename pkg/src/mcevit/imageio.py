"""Binary PPM/PGM and raw float plane dumps."""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from .imaging import ImageError, ImageU8

PLANES_MAGIC = b"MCEV"


def _read_token(buf: bytes, pos: int) -> tuple[bytes, int]:
    n = len(buf)
    while pos < n:
        c = buf[pos : pos + 1]
        if c == b"#":
            while pos < n and buf[pos : pos + 1] not in (b"\n", b"\r"):
                pos += 1
        elif c.isspace():
            pos += 1
        else:
            break
    start = pos
    while pos < n and not buf[pos : pos + 1].isspace() and buf[pos : pos + 1] != b"#":
        pos += 1
    if start == pos:
        raise ImageError("truncated PNM header")
    return buf[start:pos], pos


def _parse_pnm(buf: bytes, magic: bytes) -> tuple[int, int, int, bytes]:
    tok, pos = _read_token(buf, 0)
    if tok != magic:
        raise ImageError(f"expected {magic.decode()} file, got magic {tok[:2]!r}")
    width, pos = _read_token(buf, pos)
    height, pos = _read_token(buf, pos)
    maxval, pos = _read_token(buf, pos)
    try:
        w, h, mv = int(width), int(height), int(maxval)
    except ValueError as exc:
        raise ImageError("malformed PNM header") from exc
    if mv != 255:
        raise ImageError(f"only 8-bit PNM files are supported (maxval {mv})")
    # exactly one whitespace byte separates header from raster
    return w, h, mv, buf[pos + 1 :]


def read_ppm(path: str | Path) -> ImageU8:
    buf = Path(path).read_bytes()
    w, h, _, raster = _parse_pnm(buf, b"P6")
    if len(raster) < w * h * 3:
        raise ImageError(f"{path}: raster truncated")
    return ImageU8.from_bytes(w, h, raster[: w * h * 3])


def write_ppm(path: str | Path, img: ImageU8) -> None:
    header = f"P6\n{img.width} {img.height}\n255\n".encode("ascii")
    Path(path).write_bytes(header + img.to_bytes())


def read_pgm(path: str | Path) -> np.ndarray:
    buf = Path(path).read_bytes()
    w, h, _, raster = _parse_pnm(buf, b"P5")
    if len(raster) < w * h:
        raise ImageError(f"{path}: raster truncated")
    return np.frombuffer(raster[: w * h], dtype=np.uint8).reshape(h, w).copy()


def write_pgm(path: str | Path, plane: np.ndarray, lo: float = 0.0, hi: float = 255.0) -> None:
    """Write a float plane as 8-bit grayscale, mapping ``[lo, hi]`` onto ``[0, 255]``."""
    plane = np.asarray(plane, dtype=np.float64)
    if plane.ndim != 2:
        raise ImageError(f"PGM needs a 2-D plane, got shape {plane.shape}")
    scaled = (plane - lo) * (255.0 / (hi - lo)) if hi != lo else np.zeros_like(plane)
    data = np.clip(np.floor(scaled + 0.5), 0, 255).astype(np.uint8)
    h, w = data.shape
    Path(path).write_bytes(f"P5\n{w} {h}\n255\n".encode("ascii") + data.tobytes())


def write_planes_raw(path: str | Path, planes: np.ndarray) -> None:
    """Dump ``(n, h, w)`` planes as little-endian f32 behind a 16-byte header."""
    planes = np.asarray(planes)
    if planes.ndim != 3:
        raise ImageError(f"expected (planes, height, width), got {planes.shape}")
    n, h, w = planes.shape
    header = PLANES_MAGIC + struct.pack("<III", w, h, n)
    Path(path).write_bytes(header + planes.astype("<f4").tobytes())


def read_planes_raw(path: str | Path) -> np.ndarray:
    buf = Path(path).read_bytes()
    if len(buf) < 16 or buf[:4] != PLANES_MAGIC:
        raise ImageError(f"{path}: not a plane dump")
    w, h, n = struct.unpack("<III", buf[4:16])
    body = buf[16:]
    if len(body) != 4 * w * h * n:
        raise ImageError(f"{path}: expected {4 * w * h * n} data bytes, got {len(body)}")
    return np.frombuffer(body, dtype="<f4").reshape(n, h, w).copy()
