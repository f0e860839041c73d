import io

import numpy as np
import pytest

from skyfit import pfm


def test_round_trip(tmp_path):
    rng = np.random.default_rng(0)
    img = rng.random((16, 32, 3)).astype(np.float32) * 10.0
    path = tmp_path / "x.pfm"
    pfm.write_pfm(path, img)
    back = pfm.read_pfm(path)
    assert back.shape == img.shape
    assert np.array_equal(back, img)


def test_header_and_row_order(tmp_path):
    img = np.zeros((2, 4, 3), dtype=np.float32)
    img[0, 0] = (1.0, 2.0, 3.0)   # top-left pixel
    path = tmp_path / "h.pfm"
    pfm.write_pfm(path, img)
    raw = path.read_bytes()
    assert raw.startswith(b"PF\n")
    # negative scale marks little-endian; rows stored bottom-up
    header, rest = raw.split(b"\n", 3)[:2], raw.split(b"\n", 3)[3]
    data = np.frombuffer(rest, dtype="<f4").reshape(2, 4, 3)
    assert tuple(data[1, 0]) == (1.0, 2.0, 3.0)


def test_grayscale_round_trip(tmp_path):
    img = np.arange(12, dtype=np.float32).reshape(3, 4)
    path = tmp_path / "g.pfm"
    pfm.write_pfm(path, img)
    back = pfm.read_pfm(path)
    assert back.shape == (3, 4)
    assert np.array_equal(back, img)


def test_bad_magic(tmp_path):
    path = tmp_path / "bad.pfm"
    path.write_bytes(b"P6\n4 2\n-1.0\n" + b"\0" * 96)
    with pytest.raises(ValueError):
        pfm.read_pfm(path)
