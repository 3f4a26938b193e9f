"""Binary PGM (P5, maxval 255) reading and writing.

Masks are stored with values 0/255 only; shaded renders use the full
8-bit range.  The format carries no timestamps or metadata, so written
files are bit-reproducible.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np

from .errors import FormatError


def write_pgm(path, image: np.ndarray) -> None:
    img = np.asarray(image)
    if img.dtype == bool:
        img = img.astype(np.uint8) * 255
    if img.dtype != np.uint8 or img.ndim != 2:
        raise ValueError(f"expected 2-D uint8 or bool image, got {img.dtype} {img.shape}")
    h, w = img.shape
    with open(path, "wb") as fh:
        fh.write(f"P5\n{w} {h}\n255\n".encode("ascii"))
        fh.write(img.tobytes())


def read_pgm(path) -> np.ndarray:
    """Read a P5 PGM with maxval 255 into a uint8 (H, W) array."""
    path = Path(path)
    data = path.read_bytes()
    if not data.startswith(b"P5"):
        raise FormatError(f"{path}: not a binary PGM (P5)")
    # header: magic, width, height, maxval as whitespace-separated tokens,
    # with '#' comments running to end of line
    pos = 2
    fields: list[int] = []
    while len(fields) < 3:
        if pos >= len(data):
            raise FormatError(f"{path}: truncated header")
        ch = data[pos : pos + 1]
        if ch == b"#":
            nl = data.find(b"\n", pos)
            pos = len(data) if nl < 0 else nl + 1
        elif ch.isspace():
            pos += 1
        else:
            end = pos
            while end < len(data) and not data[end : end + 1].isspace():
                end += 1
            try:
                fields.append(int(data[pos:end]))
            except ValueError:
                raise FormatError(f"{path}: bad header token {data[pos:end]!r}") from None
            pos = end
    width, height, maxval = fields
    if maxval != 255:
        raise FormatError(f"{path}: unsupported maxval {maxval}")
    if width < 1 or height < 1:
        raise FormatError(f"{path}: bad dimensions {width}x{height}")
    pos += 1  # single whitespace byte after maxval
    pixels = data[pos : pos + width * height]
    if len(pixels) != width * height:
        raise FormatError(f"{path}: truncated pixel data")
    return np.frombuffer(pixels, dtype=np.uint8).reshape(height, width)


def read_mask(path) -> np.ndarray:
    """Read a mask PGM; every pixel must be exactly 0 or 255."""
    img = read_pgm(path)
    bad = (img != 0) & (img != 255)
    if bad.any():
        raise FormatError(f"{path}: mask contains values other than 0/255")
    return img == 255
