"""Portable float map (PFM) reading and writing.

PFM stores a float32 raster with a one-line header: ``PF`` (color) or
``Pf`` (grayscale), dimensions, and a scale whose sign encodes byte
order (negative = little-endian).  Rows are stored bottom-up.
"""

from __future__ import annotations

import numpy as np

__all__ = ["read_pfm", "write_pfm"]


def _read_token(f) -> bytes:
    tok = b""
    while True:
        c = f.read(1)
        if not c:
            raise ValueError("unexpected end of PFM header")
        if c.isspace():
            if tok:
                return tok
            continue
        tok += c


def read_pfm(path) -> np.ndarray:
    """Read a PFM file into a float32 array of shape (H, W, 3) or (H, W)."""
    with open(path, "rb") as f:
        header = _read_token(f)
        if header == b"PF":
            channels = 3
        elif header == b"Pf":
            channels = 1
        else:
            raise ValueError(f"not a PFM file: bad header {header!r}")
        width = int(_read_token(f))
        height = int(_read_token(f))
        scale = float(_read_token(f))
        if width <= 0 or height <= 0:
            raise ValueError("bad PFM dimensions")
        endian = "<" if scale < 0 else ">"
        count = width * height * channels
        data = np.frombuffer(f.read(count * 4), dtype=endian + "f4")
        if data.size != count:
            raise ValueError("truncated PFM payload")
    data = data.reshape(height, width, channels)
    data = data[::-1]  # bottom-up storage
    if channels == 1:
        data = data[..., 0]
    return np.ascontiguousarray(data.astype(np.float32))


def write_pfm(path, image: np.ndarray) -> None:
    """Write a (H, W, 3) or (H, W) float array as little-endian PFM."""
    image = np.asarray(image, dtype=np.float32)
    if image.ndim == 2:
        header = b"Pf"
        h, w = image.shape
    elif image.ndim == 3 and image.shape[2] == 3:
        header = b"PF"
        h, w = image.shape[:2]
    else:
        raise ValueError(f"unsupported image shape {image.shape}")
    with open(path, "wb") as f:
        f.write(header + b"\n")
        f.write(f"{w} {h}\n".encode())
        f.write(b"-1.0\n")  # negative scale: little-endian
        f.write(image[::-1].astype("<f4").tobytes())
