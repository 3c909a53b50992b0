import struct

import numpy as np
import pytest

from mcevit.imageio import read_pgm, read_planes_raw, read_ppm, write_pgm, write_planes_raw, write_ppm
from mcevit.imaging import ImageError, ImageU8


def test_ppm_round_trip(tmp_path):
    img = ImageU8(np.random.default_rng(0).integers(0, 256, size=(5, 7, 3), dtype=np.uint8))
    path = tmp_path / "a.ppm"
    write_ppm(path, img)
    assert path.read_bytes().startswith(b"P6\n7 5\n255\n")
    assert np.array_equal(read_ppm(path).data, img.data)


def test_ppm_header_comments_and_whitespace(tmp_path):
    raster = bytes(range(12))
    path = tmp_path / "c.ppm"
    path.write_bytes(b"P6 # made by hand\n2\t2\n# max\n255\n" + raster)
    assert read_ppm(path).data.reshape(-1).tolist() == list(raster)


@pytest.mark.parametrize(
    "payload",
    [b"P5\n2 2\n255\n" + bytes(4), b"P6\n2 2\n65535\n" + bytes(24), b"P6\n2 2\n255\n" + bytes(5), b"P6\n2"],
)
def test_ppm_rejects_bad_files(tmp_path, payload):
    path = tmp_path / "bad.ppm"
    path.write_bytes(payload)
    with pytest.raises(ImageError):
        read_ppm(path)


def test_pgm_scaling(tmp_path):
    plane = np.array([[-10.0, 0.0], [127.5, 300.0]])
    path = tmp_path / "p.pgm"
    write_pgm(path, plane)
    assert read_pgm(path).tolist() == [[0, 0], [128, 255]]
    write_pgm(path, plane, lo=-10.0, hi=300.0)
    assert read_pgm(path).tolist() == [[0, 8], [113, 255]]


def test_planes_raw_layout(tmp_path):
    planes = np.arange(2 * 3 * 4, dtype=np.float64).reshape(2, 3, 4) - 5.5
    path = tmp_path / "x.mcev"
    write_planes_raw(path, planes)
    buf = path.read_bytes()
    assert buf[:4] == b"MCEV"
    assert struct.unpack("<III", buf[4:16]) == (4, 3, 2)
    assert len(buf) == 16 + 4 * planes.size
    back = read_planes_raw(path)
    assert back.dtype == np.float32
    assert np.array_equal(back, planes.astype(np.float32))


def test_planes_raw_rejects_truncation(tmp_path):
    path = tmp_path / "x.mcev"
    write_planes_raw(path, np.zeros((1, 2, 2)))
    path.write_bytes(path.read_bytes()[:-1])
    with pytest.raises(ImageError):
        read_planes_raw(path)
