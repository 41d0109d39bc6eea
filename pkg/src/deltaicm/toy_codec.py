"""Fixed 8x8 orthonormal DCT-II analysis/synthesis.

Latent layout is ``(64, blocks_y, blocks_x)``: channel ``8*u + v`` holds the
coefficient of vertical frequency ``u`` and horizontal frequency ``v`` for
every block, so channels play the role of latent feature maps.
"""

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .errors import DimensionError

__all__ = [
    "TransformSpec",
    "dct_basis",
    "pad_to_blocks",
    "analyze",
    "quantize",
    "synthesize",
    "mask_to_latent_mask",
    "block_grid",
]


@lru_cache(maxsize=None)
def _basis(n):
    k = np.arange(n)[:, None]
    j = np.arange(n)[None, :]
    b = np.cos(np.pi * (2 * j + 1) * k / (2 * n))
    b[0] *= np.sqrt(1.0 / n)
    b[1:] *= np.sqrt(2.0 / n)
    b.flags.writeable = False
    return b


def dct_basis(n=8):
    """Orthonormal DCT-II matrix; row ``k`` is the k-th cosine basis vector."""
    return _basis(n)


@dataclass(frozen=True)
class TransformSpec:
    q: float = 1.0 / 32.0
    block: int = 8

    def __post_init__(self):
        if not (np.isfinite(self.q) and self.q > 0):
            raise ValueError("quantization step q must be positive")
        if self.block < 1:
            raise ValueError("block size must be positive")

    @property
    def basis(self):
        return dct_basis(self.block)

    @property
    def channels(self):
        return self.block * self.block


def block_grid(shape, block=8):
    """Number of blocks ``(rows, cols)`` covering an image of ``shape``."""
    h, w = shape
    return -(-h // block), -(-w // block)


def pad_to_blocks(x, block=8):
    """Replicate-edge pad a 2-D array up to multiples of ``block``."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2:
        raise DimensionError("images are 2-D grayscale arrays")
    by, bx = block_grid(x.shape, block)
    return np.pad(x, ((0, by * block - x.shape[0]), (0, bx * block - x.shape[1])),
                  mode="edge")


def analyze(x, spec: TransformSpec = TransformSpec()):
    """Blockwise forward DCT, scaled by ``1/q``; returns ``(64, by, bx)``."""
    n = spec.block
    xp = pad_to_blocks(x, n)
    by, bx = xp.shape[0] // n, xp.shape[1] // n
    blocks = xp.reshape(by, n, bx, n).transpose(0, 2, 1, 3)
    b = spec.basis
    coeffs = b @ blocks @ b.T
    return coeffs.reshape(by, bx, n * n).transpose(2, 0, 1) / spec.q


def quantize(coeffs):
    """Round half away from zero to int64 (0.5 -> 1, -0.5 -> -1)."""
    c = np.asarray(coeffs, dtype=np.float64)
    out = (np.sign(c) * np.floor(np.abs(c) + 0.5)).astype(np.int64)
    return int(out) if out.ndim == 0 else out


def synthesize(coeffs, spec: TransformSpec = TransformSpec(), shape=None):
    """Inverse of :func:`analyze`; clamps to [0, 1] and crops to ``shape``."""
    c = np.asarray(getattr(coeffs, "values", coeffs), dtype=np.float64)
    n = spec.block
    if c.ndim != 3 or c.shape[0] != n * n:
        raise DimensionError(f"expected ({n * n}, by, bx) coefficients, got {c.shape}")
    _, by, bx = c.shape
    b = spec.basis
    blocks = c.transpose(1, 2, 0).reshape(by, bx, n, n) * spec.q
    pix = (b.T @ blocks @ b).transpose(0, 2, 1, 3).reshape(by * n, bx * n)
    if shape is not None:
        pix = pix[:shape[0], :shape[1]]
    return np.clip(pix, 0.0, 1.0)


def mask_to_latent_mask(m, spec: TransformSpec = TransformSpec()):
    """Per-coefficient weights: a block is in if any of its pixels has m=1."""
    m = np.asarray(m)
    if m.ndim != 2:
        raise DimensionError("masks are 2-D")
    n = spec.block
    by, bx = block_grid(m.shape, n)
    padded = np.zeros((by * n, bx * n), dtype=bool)
    padded[:m.shape[0], :m.shape[1]] = m > 0
    hit = padded.reshape(by, n, bx, n).any(axis=(1, 3))
    return np.broadcast_to(hit, (n * n, by, bx)).astype(np.float64)

