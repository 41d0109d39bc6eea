"""Binary PGM (P5, maxval 255) reading and writing."""

import numpy as np

from .errors import FormatError

__all__ = ["read_pgm", "write_pgm", "read_mask", "MASK_THRESHOLD"]

MASK_THRESHOLD = 128


def _tokens(data):
    """Yield (token, end offset) for header fields, skipping # comments."""
    pos = 0
    n = len(data)
    while pos < n:
        ch = data[pos:pos + 1]
        if ch.isspace():
            pos += 1
        elif ch == b"#":
            while pos < n and data[pos:pos + 1] not in (b"\n", b"\r"):
                pos += 1
        else:
            start = pos
            while pos < n and not data[pos:pos + 1].isspace() and data[pos:pos + 1] != b"#":
                pos += 1
            yield data[start:pos], pos


def parse_pgm(data: bytes):
    """Decode P5 bytes to a uint8 array of shape ``(height, width)``."""
    toks = _tokens(data)
    try:
        magic, _ = next(toks)
        width, _ = next(toks)
        height, _ = next(toks)
        maxval, end = next(toks)
        width, height, maxval = int(width), int(height), int(maxval)
    except (StopIteration, ValueError):
        raise FormatError("malformed PGM header") from None
    if magic != b"P5":
        raise FormatError(f"only binary PGM (P5) is supported, got {magic!r}")
    if maxval != 255:
        raise FormatError(f"only maxval 255 is supported, got {maxval}")
    if width <= 0 or height <= 0:
        raise FormatError("PGM dimensions must be positive")
    start = end + 1  # exactly one whitespace byte separates header and raster
    raster = data[start:start + width * height]
    if len(raster) != width * height:
        raise FormatError("PGM raster is truncated")
    return np.frombuffer(raster, dtype=np.uint8).reshape(height, width).copy()


def read_pgm(path):
    """Read a P5 image as float64 in [0, 1]."""
    with open(path, "rb") as fh:
        return parse_pgm(fh.read()).astype(np.float64) / 255.0


def read_mask(path):
    """Read a P5 mask; pixels >= 128 are 1, the rest 0."""
    with open(path, "rb") as fh:
        raw = parse_pgm(fh.read())
    return (raw >= MASK_THRESHOLD).astype(np.uint8)


def to_uint8(x):
    x = np.asarray(x)
    if x.dtype == np.uint8:
        return x
    return np.clip(np.floor(np.asarray(x, dtype=np.float64) * 255.0 + 0.5), 0, 255).astype(np.uint8)


def encode_pgm(x) -> bytes:
    raw = to_uint8(x)
    if raw.ndim != 2:
        raise FormatError("PGM images are 2-D")
    h, w = raw.shape
    return b"P5\n%d %d\n255\n" % (w, h) + raw.tobytes()


def write_pgm(path, x):
    """Write a float [0, 1] (or uint8) array as P5."""
    with open(path, "wb") as fh:
        fh.write(encode_pgm(x))
