"""Binary PPM (P6) and PGM (P5) image io, maxval 255.

Images travel as rank-4 tensors (1, C, H, W) with values in [0, 1];
3-channel tensors write P6, 1-channel write P5.
"""

from __future__ import annotations

import numpy as np

from .tensor import Tensor

__all__ = ["read_image", "write_image"]


def write_image(path: str, image: Tensor) -> None:
    b, c, h, w = image.shape
    if b != 1 or c not in (1, 3):
        raise ValueError(f"image must be (1, 1|3, H, W), got {image.shape}")
    magic = b"P6" if c == 3 else b"P5"
    data = np.clip(image.data[0] * 255.0, 0.0, 255.0).round().astype(np.uint8)
    # (C, H, W) -> (H, W, C) interleaved raster
    raster = data.transpose(1, 2, 0).tobytes()
    with open(path, "wb") as f:
        f.write(magic + b"\n" + f"{w} {h}\n255\n".encode("ascii"))
        f.write(raster)


def _read_token(f) -> bytes:
    """Next header token, skipping whitespace and # comments."""
    tok = b""
    while True:
        ch = f.read(1)
        if ch == b"":
            if tok:
                return tok
            raise ValueError("unexpected end of header")
        if ch == b"#":
            while ch not in (b"\n", b""):
                ch = f.read(1)
            continue
        if ch.isspace():
            if tok:
                return tok
            continue
        tok += ch


def read_image(path: str) -> Tensor:
    with open(path, "rb") as f:
        magic = _read_token(f)
        if magic not in (b"P5", b"P6"):
            raise ValueError(f"{path}: expected binary PGM/PPM (P5/P6), got {magic!r}")
        w = int(_read_token(f))
        h = int(_read_token(f))
        maxval = int(_read_token(f))
        if maxval != 255:
            raise ValueError(f"{path}: only maxval 255 is supported, got {maxval}")
        c = 3 if magic == b"P6" else 1
        raw = f.read(w * h * c)
    if len(raw) != w * h * c:
        raise ValueError(f"{path}: truncated pixel data, expected {w * h * c} bytes, got {len(raw)}")
    data = np.frombuffer(raw, dtype=np.uint8).reshape(h, w, c).transpose(2, 0, 1)
    return Tensor(data[None].astype(np.float64) / 255.0)
