"""Byte-oriented range coder and the ``.dicm`` bitstream framing.

Coder construction (frozen; streams depend on it bit for bit):

* ``low`` is a 56-bit register (plus one carry bit, so it fits 64 bits),
  ``range`` starts at ``2**56 - 1`` and is renormalised by whole bytes
  whenever it drops below ``2**48``.
* A symbol with cumulative frequency ``c`` and frequency ``f`` out of
  ``2**P`` narrows the interval to ``r = range >> P``, ``low += r * c``,
  ``range = r * f``.
* Carries are propagated with a delayed byte: the most recent byte whose
  value might still change is held back together with a count of pending
  ``0xFF`` bytes (the LZMA ``cache``/``cache_size`` scheme). The very first
  held byte is provably always zero and is never written.
* Flushing writes the shortest byte string that identifies a value inside
  the final interval, assuming the decoder reads zero bytes past the end.
  When less than one bit was coded in total (for example a single-symbol
  support) nothing is written at all.

The payload length therefore stays within eight bits above the sum of
``-log2(f / 2**P)`` over the coded symbols, and never below it.
"""

import bisect
import struct
from dataclasses import dataclass
from enum import IntEnum
from typing import Tuple

import numpy as np

from .errors import DecodeError, EncodeError
from .prob_models import PmfBatch, PmfTable

__all__ = [
    "MAGIC",
    "VERSION",
    "ModelId",
    "LatentTensor",
    "Bitstream",
    "RangeEncoder",
    "RangeDecoder",
    "encode",
    "decode",
    "measure",
    "ideal_bits",
    "element_bits",
]

MAGIC = b"DICM"
VERSION = 1
DEFAULT_SUPPORT = (-255, 255)
DEFAULT_PRECISION = 16

_STATE_BITS = 56
_TOP = 1 << _STATE_BITS
_MASK = _TOP - 1
_BOTTOM = 1 << (_STATE_BITS - 8)
_SHIFT = _STATE_BITS - 8
_FF_ZONE = 0xFF << _SHIFT

_HEADER = struct.Struct("<4sBBB3I2iQQ")


class ModelId(IntEnum):
    GAUSSIAN = 0
    DELTA = 1
    MIXTURE = 2
    MIXTURE_SOFT = 3
    GMM = 4
    GENERIC = 255


@dataclass(frozen=True, eq=False)
class LatentTensor:
    """Integer latents laid out as ``(channels, height, width)``."""

    values: np.ndarray

    def __post_init__(self):
        vals = np.array(self.values, dtype=np.int64)
        if vals.ndim != 3:
            raise ValueError("latent tensors are (channels, height, width)")
        vals.flags.writeable = False
        object.__setattr__(self, "values", vals)

    @property
    def dims(self) -> Tuple[int, int, int]:
        return tuple(int(d) for d in self.values.shape)

    @property
    def size(self):
        return self.values.size

    def __eq__(self, other):
        if not isinstance(other, LatentTensor):
            return NotImplemented
        return np.array_equal(self.values, other.values)

    __hash__ = None


@dataclass(frozen=True)
class Bitstream:
    model_id: int
    precision_bits: int
    dims: Tuple[int, int, int]
    support: Tuple[int, int]
    params: bytes
    payload: bytes
    payload_bit_length: int

    def to_bytes(self) -> bytes:
        head = _HEADER.pack(MAGIC, VERSION, int(self.model_id), self.precision_bits,
                            *self.dims, *self.support, len(self.params),
                            self.payload_bit_length)
        return head + self.params + self.payload

    @classmethod
    def from_bytes(cls, data: bytes) -> "Bitstream":
        if len(data) < 4 or data[:4] != MAGIC:
            raise DecodeError("not a .dicm stream (magic mismatch)")
        if len(data) < _HEADER.size:
            raise DecodeError("truncated header")
        magic, version, model_id, precision, c, h, w, s_lo, s_hi, plen, bits = \
            _HEADER.unpack_from(data)
        if version != VERSION:
            raise DecodeError(f"unsupported stream version {version}")
        nbytes = (bits + 7) // 8
        body = data[_HEADER.size:]
        if len(body) < plen + nbytes:
            raise DecodeError(
                f"truncated stream: need {plen + nbytes} body bytes, have {len(body)}")
        return cls(model_id, precision, (c, h, w), (s_lo, s_hi),
                   bytes(body[:plen]), bytes(body[plen:plen + nbytes]), bits)

    @property
    def header_bits(self):
        return 8 * _HEADER.size


class RangeEncoder:
    def __init__(self):
        self.low = 0
        self.range = _MASK
        self._cache = 0
        self._pending = 0
        self._started = False
        self._out = bytearray()

    def encode(self, cum, freq, precision):
        r = self.range >> precision
        self.low += r * cum
        self.range = r * freq
        while self.range < _BOTTOM:
            self.range <<= 8
            self._shift_low()

    def _shift_low(self):
        low = self.low
        if low < _FF_ZONE or low >= _TOP:
            carry = low >> _STATE_BITS
            if self._started:
                self._out.append((self._cache + carry) & 0xFF)
            self._started = True
            if self._pending:
                self._out.extend(bytes([(0xFF + carry) & 0xFF]) * self._pending)
                self._pending = 0
            self._cache = (low >> _SHIFT) & 0xFF
        else:
            self._pending += 1
        self.low = (low << 8) & _MASK

    def finish(self) -> bytes:
        nothing_out = not self._started and not self._out and self._pending == 0
        if nothing_out and self.low == 0 and self.range > _TOP >> 1:
            return b""
        # smallest multiple of 2**48 inside [low, low + range)
        self.low = -(-self.low // _BOTTOM) * _BOTTOM
        self._shift_low()
        self._shift_low()
        return bytes(self._out)


class RangeDecoder:
    def __init__(self, data: bytes):
        self._data = data
        self._pos = 0
        self.range = _MASK
        code = 0
        for _ in range(_STATE_BITS // 8):
            code = (code << 8) | self._next()
        self.code = code

    def _next(self):
        pos = self._pos
        self._pos = pos + 1
        return self._data[pos] if pos < len(self._data) else 0

    def target(self, precision):
        """Cumulative-frequency value the next symbol's interval must contain."""
        v = self.code // (self.range >> precision)
        limit = (1 << precision) - 1
        return v if v <= limit else limit

    def consume(self, cum, freq, precision):
        r = self.range >> precision
        self.code -= r * cum
        self.range = r * freq
        while self.range < _BOTTOM:
            self.code = (self.code << 8) | self._next()
            self.range <<= 8


def _table_rows(tables, n):
    """Normalise a table supplier to (support_min, width, freqs 2-D, row index)."""
    if isinstance(tables, PmfBatch):
        if len(tables) != n:
            raise EncodeError(f"{len(tables)} tables supplied for {n} symbols")
        width = tables.freqs.shape[1]
        smin = np.full(tables.freqs.shape[0], tables.support_min, dtype=np.int64)
        return smin, np.full_like(smin, width), tables.freqs, tables.index, \
            tables.precision_bits
    if isinstance(tables, PmfTable):
        tables = [tables] * n
    get = tables if callable(tables) and not hasattr(tables, "__getitem__") else tables.__getitem__
    items = [get(i) for i in range(n)]
    if not items:
        return (np.zeros(0, np.int64), np.zeros(0, np.int64),
                np.ones((0, 1), np.int64), np.zeros(0, np.int64), None)
    precisions = {t.precision_bits for t in items}
    if len(precisions) != 1:
        raise EncodeError("all tables of one stream must share precision_bits")
    width = max(t.freqs.size for t in items)
    freqs = np.zeros((n, width), dtype=np.int64)
    for i, t in enumerate(items):
        freqs[i, :t.freqs.size] = t.freqs
    smin = np.array([t.support_min for t in items], dtype=np.int64)
    widths = np.array([t.freqs.size for t in items], dtype=np.int64)
    return smin, widths, freqs, np.arange(n), precisions.pop()


def _gather(symbols, tables):
    flat = symbols.values.ravel()
    n = flat.size
    smin, widths, freqs, index, precision = _table_rows(tables, n)
    if n == 0:
        return np.zeros(0, np.int64), np.zeros(0, np.int64), precision
    offset = flat - smin[index]
    bad = np.flatnonzero((offset < 0) | (offset >= widths[index]))
    if bad.size:
        i = int(bad[0])
        raise EncodeError(
            f"symbol {int(flat[i])} at element {i} is outside its table support")
    cum = np.concatenate((np.zeros((freqs.shape[0], 1), np.int64),
                          np.cumsum(freqs, axis=1)), axis=1)
    return cum[index, offset], freqs[index, offset], precision


def element_bits(symbols: LatentTensor, tables) -> np.ndarray:
    """``-log2(freq / 2**P)`` of every symbol, shaped like the tensor."""
    _, f, precision = _gather(symbols, tables)
    if f.size == 0:
        return np.zeros(symbols.dims)
    return (precision - np.log2(f)).reshape(symbols.dims)


def ideal_bits(symbols: LatentTensor, tables) -> float:
    """Sum of ``-log2(freq / 2**P)`` over the symbols: the table entropy."""
    return float(element_bits(symbols, tables).sum())


def encode(symbols: LatentTensor, tables, *, model_id=ModelId.GENERIC, params=b"",
           support=None) -> Bitstream:
    """Range-code ``symbols`` with one table per element (flattened C order)."""
    cum, freq, precision = _gather(symbols, tables)
    if precision is None:
        precision = getattr(tables, "precision_bits", DEFAULT_PRECISION)
    enc = RangeEncoder()
    for c, f in zip(cum.tolist(), freq.tolist()):
        enc.encode(c, f, precision)
    payload = enc.finish()
    if support is None:
        vals = symbols.values
        support = ((int(vals.min()), int(vals.max())) if vals.size
                   else DEFAULT_SUPPORT)
    return Bitstream(int(model_id), int(precision), symbols.dims,
                     tuple(int(s) for s in support), bytes(params), payload,
                     8 * len(payload))


def decode(stream: Bitstream, tables) -> LatentTensor:
    """Invert :func:`encode`; ``tables`` must equal the encode-time supplier."""
    dims = stream.dims
    n = dims[0] * dims[1] * dims[2]
    smin, widths, freqs, index, precision = _table_rows(tables, n)
    if n == 0:
        return LatentTensor(np.zeros(dims, dtype=np.int64))
    if precision != stream.precision_bits:
        raise DecodeError("table precision differs from the stream header")
    dec = RangeDecoder(stream.payload)
    row_cache = {}
    out = np.empty(n, dtype=np.int64)
    smin_l, index_l = smin.tolist(), index.tolist()
    for i in range(n):
        row = index_l[i]
        cum = row_cache.get(row)
        if cum is None:
            cum = [0] + np.cumsum(freqs[row, :widths[row]]).tolist()
            row_cache[row] = cum
        v = dec.target(precision)
        k = bisect.bisect_right(cum, v) - 1
        dec.consume(cum[k], cum[k + 1] - cum[k], precision)
        out[i] = smin_l[row] + k
    return LatentTensor(out.reshape(dims))


def measure(stream: Bitstream) -> int:
    """Payload size in bits: whole payload bytes minus declared padding bits."""
    padding = 8 * len(stream.payload) - stream.payload_bit_length
    if not 0 <= padding < 8:
        raise DecodeError("declared payload length disagrees with the payload bytes")
    return 8 * len(stream.payload) - padding
