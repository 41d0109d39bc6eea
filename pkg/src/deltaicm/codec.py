"""Image-level ``.dicm`` streams built on the range coder.

Parameter block (little-endian) that follows the fixed header::

    f64  q                     quantization step of the block transform
    u32  height, u32 width     image size before padding
    u16  C                     number of channels
    C x (i16 mu, u16 sigma)    channel means (Q8.7) and scales (Q9.7)
    -- model MIXTURE only --
    u32  n                     length of the coded selection flags
    n    bytes                 range-coded Gaussian/delta flag per element
    -- model MIXTURE_SOFT only --
    N x u16 w                  per-element Gaussian weight, w * 65535

Flags are coded block by block: an adaptive skip bit marks blocks that are
entirely delta, otherwise channels 0..63 follow with an adaptive binary
model whose context is the channel and whether the block already has a
Gaussian-coded coefficient. Latents are coded channel-major
(C order of ``(64, by, bx)``) in the payload.
"""

import struct
from dataclasses import dataclass

import numpy as np

from .coder import (Bitstream, LatentTensor, ModelId, RangeDecoder, RangeEncoder,
                    decode, element_bits, encode, ideal_bits)
from .errors import DecodeError
from .optimizer import (MU_SCALE, SIGMA_SCALE, OptimConfig, OptimResult, baseline_gaussian,
                        optimize)
from .prob_models import (DeltaParams, GaussianParams, MixtureParams, PmfBatch,
                          build_pmf_batch)
from .rate import masked_mse
from .toy_codec import TransformSpec, synthesize

__all__ = ["CodedImage", "DecodedImage", "Comparison", "encode_result", "decode_stream",
           "stream_tables", "encode_flags", "decode_flags", "compare", "FLAG_PRECISION"]

FLAG_PRECISION = 12
_PREFIX = struct.Struct("<dIIH")
_CHANNEL = struct.Struct("<hH")


@dataclass(frozen=True)
class CodedImage:
    stream: Bitstream
    payload_bits: int
    side_bits: int          # selection flags or soft weights
    param_bits: int         # channel mu/sigma words (identical for both arms)

    @property
    def bits(self):
        """Bits charged to the entropy model: payload plus per-element side info."""
        return self.payload_bits + self.side_bits


def _flag_freq(n0, n1):
    # KT estimate of P(flag = 1) on a 2**12 scale, kept inside [1, 4095]
    total = 1 << FLAG_PRECISION
    f1 = ((2 * n1 + 1) * total) // (2 * (n0 + n1) + 2)
    return min(max(f1, 1), total - 1)


def _block_order(shape):
    c, by, bx = shape
    return np.arange(c * by * bx).reshape(c, by, bx).transpose(1, 2, 0).ravel()


class _BitModel:
    """Adaptive KT binary model over ``2 * channels + 1`` contexts."""

    def __init__(self, channels):
        self.counts = [[0, 0] for _ in range(2 * channels + 1)]
        self.skip = 2 * channels

    def interval(self, ctx, bit):
        total = 1 << FLAG_PRECISION
        f1 = _flag_freq(*self.counts[ctx])
        return (total - f1, f1) if bit else (0, total - f1)

    def update(self, ctx, bit):
        self.counts[ctx][bit] += 1


def encode_flags(flags) -> bytes:
    """Range-code a boolean ``(64, by, bx)`` array with the adaptive context model.

    Per block: one skip bit (all delta), then unless skipped one flag per
    channel in the context ``(channel, block already has a Gaussian flag)``.
    """
    c = flags.shape[0]
    blocks = flags.ravel()[_block_order(flags.shape)].reshape(-1, c).tolist()
    model = _BitModel(c)
    enc = RangeEncoder()
    for block in blocks:
        skip = int(not any(block))
        enc.encode(*model.interval(model.skip, skip), FLAG_PRECISION)
        model.update(model.skip, skip)
        if skip:
            continue
        seen = 0
        for ch, bit in enumerate(block):
            ctx = 2 * ch + seen
            enc.encode(*model.interval(ctx, bit), FLAG_PRECISION)
            model.update(ctx, bit)
            seen |= bit
    return enc.finish()


def decode_flags(data, shape):
    c = shape[0]
    nblocks = shape[1] * shape[2]
    dec = RangeDecoder(data)
    model = _BitModel(c)

    def read(ctx):
        _, f0 = model.interval(ctx, 0)
        bit = int(dec.target(FLAG_PRECISION) >= f0)
        dec.consume(*model.interval(ctx, bit), FLAG_PRECISION)
        model.update(ctx, bit)
        return bit

    seq = np.zeros((nblocks, c), dtype=bool)
    for b in range(nblocks):
        if read(model.skip):
            continue
        seen = 0
        for ch in range(c):
            bit = read(2 * ch + seen)
            seq[b, ch] = bit
            seen |= bit
    out = np.zeros(c * nblocks, dtype=bool)
    out[_block_order(shape)] = seq.ravel()
    return out.reshape(shape)


def stream_tables(model_id, mu, sigma, shape, support, precision, flags=None, w=None):
    """PmfBatch addressing one table per coded element, as both ends rebuild it."""
    c = shape[0]
    per_channel = np.repeat(np.arange(c), shape[1] * shape[2])
    if model_id == ModelId.GAUSSIAN:
        return build_pmf_batch(GaussianParams(mu, sigma), support, precision,
                               index=per_channel)
    if model_id == ModelId.MIXTURE:
        gauss = build_pmf_batch(GaussianParams(mu, sigma), support, precision)
        delta = build_pmf_batch(DeltaParams(mu), support, precision)
        freqs = np.concatenate((gauss.freqs, delta.freqs))
        index = np.where(flags.ravel(), per_channel, per_channel + c)
        return PmfBatch(freqs, support[0], precision, index=index)
    if model_id == ModelId.MIXTURE_SOFT:
        return build_pmf_batch(
            MixtureParams(w.ravel(), mu[per_channel], sigma[per_channel]),
            support, precision)
    raise DecodeError(f"unsupported image model id {model_id}")


def _param_block(result, model_id, flag_bytes=b"", w_codes=None):
    h, w = result.shape
    c = result.mu.size
    parts = [_PREFIX.pack(result.spec.q, h, w, c)]
    mu_codes = np.round(result.mu * MU_SCALE).astype(np.int64)
    sigma_codes = np.round(result.sigma * SIGMA_SCALE).astype(np.int64)
    parts += [_CHANNEL.pack(int(m), int(s)) for m, s in zip(mu_codes, sigma_codes)]
    if model_id == ModelId.MIXTURE:
        parts.append(struct.pack("<I", len(flag_bytes)) + flag_bytes)
    elif model_id == ModelId.MIXTURE_SOFT:
        parts.append(w_codes.astype("<u2").tobytes())
    return b"".join(parts)


def encode_result(result: OptimResult, support=(-255, 255), precision=16,
                  soft=False) -> CodedImage:
    """Code a fitted image: hardened (default), soft mixture, or Gaussian-only."""
    support = (int(support[0]), int(support[1]))
    symbols = LatentTensor(result.symbols(support))
    shape = symbols.dims
    flags = result.gaussian_mask
    flag_bytes, w_codes, w_q = b"", None, None
    if result.gaussian_only:
        model_id = ModelId.GAUSSIAN
    elif soft:
        model_id = ModelId.MIXTURE_SOFT
        w_codes = np.round(result.w * 65535).astype(np.int64)
        w_q = w_codes / 65535.0
    else:
        model_id = ModelId.MIXTURE
        flag_bytes = encode_flags(flags)
    tables = stream_tables(model_id, result.mu, result.sigma, shape, support,
                           precision, flags=flags, w=w_q)
    params = _param_block(result, model_id, flag_bytes, w_codes)
    stream = encode(symbols, tables, model_id=model_id, params=params, support=support)
    c = result.mu.size
    side = {ModelId.MIXTURE: 8 * len(flag_bytes),
            ModelId.MIXTURE_SOFT: 16 * symbols.size}.get(model_id, 0)
    return CodedImage(stream, stream.payload_bit_length, side, 32 * c)


@dataclass(frozen=True)
class DecodedImage:
    latents: LatentTensor
    image: np.ndarray
    spec: TransformSpec
    mu: np.ndarray
    sigma: np.ndarray
    tables: object
    side_bits: int

    def table_bits(self):
        """Ideal total cost of the decoded latents under their tables."""
        return ideal_bits(self.latents, self.tables)

    def element_bits(self):
        """Ideal cost of every decoded latent, shaped ``(64, by, bx)``."""
        return element_bits(self.latents, self.tables)


def decode_stream(stream: Bitstream) -> DecodedImage:
    """Rebuild tables from the parameter block, decode latents, synthesize."""
    block = stream.params
    if len(block) < _PREFIX.size:
        raise DecodeError("parameter block truncated")
    q, h, w, c = _PREFIX.unpack_from(block)
    shape = stream.dims
    if c != shape[0]:
        raise DecodeError("channel count disagrees with header dims")
    off = _PREFIX.size
    need = off + c * _CHANNEL.size
    if len(block) < need:
        raise DecodeError("parameter block truncated")
    words = np.frombuffer(block, dtype="<i2", count=2 * c, offset=off).reshape(c, 2)
    mu = words[:, 0].astype(np.float64) / MU_SCALE
    sigma = words[:, 1].view("<u2").astype(np.float64) / SIGMA_SCALE
    off = need
    flags, w_q, side = None, None, 0
    model_id = stream.model_id
    n = shape[0] * shape[1] * shape[2]
    if model_id == ModelId.MIXTURE:
        if len(block) < off + 4:
            raise DecodeError("parameter block truncated")
        (nflag,) = struct.unpack_from("<I", block, off)
        flag_bytes = block[off + 4: off + 4 + nflag]
        if len(flag_bytes) != nflag:
            raise DecodeError("flag block truncated")
        flags = decode_flags(flag_bytes, shape)
        side = 8 * nflag
    elif model_id == ModelId.MIXTURE_SOFT:
        if len(block) < off + 2 * n:
            raise DecodeError("weight block truncated")
        w_q = np.frombuffer(block, dtype="<u2", count=n, offset=off).astype(np.float64) / 65535.0
        side = 16 * n
    tables = stream_tables(model_id, mu, sigma, shape, stream.support,
                           stream.precision_bits, flags=flags, w=w_q)
    latents = decode(stream, tables)
    spec = TransformSpec(q=q)
    image = synthesize(latents.values, spec, (h, w))
    return DecodedImage(latents, image, spec, mu, sigma, tables, side)


@dataclass(frozen=True, eq=False)
class Comparison:
    """Mixture arm against the Gaussian-only arm, both through the real coder."""

    bits_mixture: int
    bits_gaussian: int
    mse_in_mask_mixture: float
    mse_in_mask_gaussian: float
    mixture: OptimResult
    gaussian: OptimResult
    coded_mixture: CodedImage
    coded_gaussian: CodedImage

    @property
    def savings(self):
        """Relative bit saving of the mixture arm."""
        if self.bits_gaussian == 0:
            return 0.0
        return 1.0 - self.bits_mixture / self.bits_gaussian

    @property
    def holds(self):
        """False only if the mixture costs more bits at comparable masked quality."""
        comparable = self.mse_in_mask_mixture <= 1.05 * self.mse_in_mask_gaussian
        return not comparable or self.bits_mixture <= self.bits_gaussian

    def as_row(self):
        return {
            "bits_mixture": self.bits_mixture,
            "bits_gaussian": self.bits_gaussian,
            "mse_in_mask_mixture": self.mse_in_mask_mixture,
            "mse_in_mask_gaussian": self.mse_in_mask_gaussian,
        }


def compare(x, m, spec: TransformSpec = TransformSpec(), cfg: OptimConfig = OptimConfig(),
            support=(-255, 255), precision=16, soft=False) -> Comparison:
    """Fit and code both arms, then decode each stream to measure masked MSE."""
    arms = []
    for fit, is_soft in ((optimize, soft), (baseline_gaussian, False)):
        result = fit(x, m, spec, cfg)
        coded = encode_result(result, support, precision, soft=is_soft)
        image = decode_stream(coded.stream).image
        arms.append((result, coded, masked_mse(x, image, m)))
    (rm, cm, mse_m), (rg, cg, mse_g) = arms
    return Comparison(cm.bits, cg.bits, mse_m, mse_g, rm, rg, cm, cg)
