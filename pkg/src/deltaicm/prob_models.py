"""Discretized likelihoods of integer symbols and fixed-precision PMF tables.

Four entropy models are supported, each convolved with a unit-width uniform
box so that a real-valued density turns into a probability per integer bin:

* Gaussian ``N(mu, sigma^2)``
* Gaussian mixture ``sum_k w_k N(mu_k, sigma_k^2)``
* delta ``delta(mu)``, whose box covers exactly one integer cell
* Gaussian + delta ``w N(mu, sigma^2) + (1 - w) delta(mu)``

Parameter fields may be Python floats or numpy arrays; arrays broadcast
against the symbols they are evaluated at, which is how per-element model
parameters are represented.
"""

from dataclasses import dataclass
from typing import Union

import numpy as np

from ._special import erf, erfc, ndtr
from .errors import CapacityError, InvalidParameterError

__all__ = [
    "SIGMA_MIN",
    "GaussianParams",
    "DeltaParams",
    "MixtureParams",
    "GmmParams",
    "PmfTable",
    "PmfBatch",
    "gaussian_likelihood",
    "gaussian_bin",
    "delta_likelihood",
    "delta_cell",
    "mixture_likelihood",
    "gmm_likelihood",
    "likelihood",
    "build_pmf",
    "build_pmf_batch",
    "apportion",
]

SIGMA_MIN = 0.11
MIN_PRECISION = 8
MAX_PRECISION = 24
_INV_SQRT_2 = 0.7071067811865476


def _finite(name, value):
    arr = np.asarray(value, dtype=np.float64)
    if not np.all(np.isfinite(arr)):
        raise InvalidParameterError(f"{name} must be finite")
    return arr


def _check_sigma(sigma):
    arr = _finite("sigma", sigma)
    if np.any(arr < SIGMA_MIN):
        raise InvalidParameterError(
            f"sigma must be >= {SIGMA_MIN}, got min {arr.min():.6g}")


def _check_weight(w):
    arr = _finite("w", w)
    if np.any((arr < 0.0) | (arr > 1.0)):
        raise InvalidParameterError("mixture weight w must lie in [0, 1]")


@dataclass(frozen=True)
class GaussianParams:
    mu: Union[float, np.ndarray]
    sigma: Union[float, np.ndarray]

    def __post_init__(self):
        _finite("mu", self.mu)
        _check_sigma(self.sigma)


@dataclass(frozen=True)
class DeltaParams:
    mu: Union[float, np.ndarray]

    def __post_init__(self):
        _finite("mu", self.mu)


@dataclass(frozen=True)
class MixtureParams:
    """Gaussian + delta mixture; ``w`` is the Gaussian share."""

    w: Union[float, np.ndarray]
    mu: Union[float, np.ndarray]
    sigma: Union[float, np.ndarray]

    def __post_init__(self):
        _check_weight(self.w)
        _finite("mu", self.mu)
        _check_sigma(self.sigma)


@dataclass(frozen=True)
class GmmParams:
    """Gaussian mixture with K components along the last axis of each field."""

    weights: np.ndarray
    mus: np.ndarray
    sigmas: np.ndarray

    def __post_init__(self):
        w = _finite("weights", self.weights)
        _finite("mus", self.mus)
        _check_sigma(self.sigmas)
        if w.ndim == 0 or w.shape[-1] < 1:
            raise InvalidParameterError("a GMM needs at least one component")
        if np.shape(self.mus) != w.shape or np.shape(self.sigmas) != w.shape:
            raise InvalidParameterError("GMM weights, mus and sigmas must share a shape")
        if np.any(w < 0.0):
            raise InvalidParameterError("GMM weights must be non-negative")
        if np.any(np.abs(w.sum(axis=-1) - 1.0) > 1e-9):
            raise InvalidParameterError("GMM weights must sum to 1 within 1e-9")

    @classmethod
    def from_components(cls, components):
        """Build from a list of ``(w_k, mu_k, sigma_k)`` triples."""
        arr = np.asarray(components, dtype=np.float64)
        if arr.ndim != 2 or arr.shape[1] != 3:
            raise InvalidParameterError("components must be (w, mu, sigma) triples")
        return cls(arr[:, 0], arr[:, 1], arr[:, 2])

    @property
    def n_components(self):
        return np.shape(self.weights)[-1]


Model = Union[GaussianParams, DeltaParams, MixtureParams, GmmParams]


def _scalar_or_array(x):
    return float(x) if np.ndim(x) == 0 else x


def gaussian_bin(y, mu, sigma):
    """Mass of N(mu, sigma^2) on [y - 1/2, y + 1/2] for real-valued ``y``.

    The difference of CDFs is always formed from the tail closest to the
    bin so that far-tail bins keep full relative precision.
    """
    y, mu, sigma = np.broadcast_arrays(
        np.asarray(y, dtype=np.float64),
        np.asarray(mu, dtype=np.float64),
        np.asarray(sigma, dtype=np.float64))
    lo = (y - 0.5 - mu) / sigma * _INV_SQRT_2
    hi = (y + 0.5 - mu) / sigma * _INV_SQRT_2
    out = np.empty(y.shape)
    upper = lo >= 0.0
    lower = hi <= 0.0
    mid = ~(upper | lower)
    if upper.any():
        out[upper] = 0.5 * (erfc(lo[upper]) - erfc(hi[upper]))
    if lower.any():
        out[lower] = 0.5 * (erfc(-hi[lower]) - erfc(-lo[lower]))
    if mid.any():
        out[mid] = 0.5 * (erf(hi[mid]) - erf(lo[mid]))
    return np.clip(out, 0.0, 1.0)


def gaussian_likelihood(y_hat, p: GaussianParams):
    """P(Y = y_hat) for Y the rounded N(mu, sigma^2) variable."""
    y_hat = _finite("y_hat", y_hat)
    return _scalar_or_array(gaussian_bin(y_hat, p.mu, p.sigma))


def _step(xi):
    # F(xi) = 1 for xi >= 0; the boundary belongs to the upper side.
    return (np.asarray(xi) >= 0.0).astype(np.float64)


def delta_likelihood(y_hat, p: DeltaParams):
    """1 where ``mu`` falls in ``(y_hat - 1/2, y_hat + 1/2]``, else 0."""
    y_hat = _finite("y_hat", y_hat)
    mu = np.asarray(p.mu, dtype=np.float64)
    return _scalar_or_array(_step(y_hat + 0.5 - mu) - _step(y_hat - 0.5 - mu))


def delta_cell(mu):
    """The unique integer symbol that a delta at ``mu`` gives probability 1."""
    mu = _finite("mu", mu)
    cell = np.ceil(mu - 0.5)
    return int(cell) if cell.ndim == 0 else cell.astype(np.int64)


def mixture_likelihood(y_hat, p: MixtureParams):
    g = gaussian_likelihood(y_hat, GaussianParams(p.mu, p.sigma))
    d = delta_likelihood(y_hat, DeltaParams(p.mu))
    w = np.asarray(p.w, dtype=np.float64)
    return _scalar_or_array(w * g + (1.0 - w) * d)


def gmm_likelihood(y_hat, p: GmmParams):
    y_hat = _finite("y_hat", y_hat)
    per_comp = gaussian_bin(y_hat[..., None], p.mus, p.sigmas)
    return _scalar_or_array((np.asarray(p.weights) * per_comp).sum(axis=-1))


def likelihood(y_hat, model: Model):
    """Dispatch to the likelihood of whichever model type is given."""
    if isinstance(model, GaussianParams):
        return gaussian_likelihood(y_hat, model)
    if isinstance(model, DeltaParams):
        return delta_likelihood(y_hat, model)
    if isinstance(model, MixtureParams):
        return mixture_likelihood(y_hat, model)
    if isinstance(model, GmmParams):
        return gmm_likelihood(y_hat, model)
    raise TypeError(f"unsupported model type {type(model).__name__}")


# --- PMF tables -------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class PmfTable:
    """Integer frequencies for symbols ``support_min .. support_min + len - 1``."""

    support_min: int
    freqs: np.ndarray
    precision_bits: int

    def __post_init__(self):
        freqs = np.array(self.freqs, dtype=np.int64)
        freqs.flags.writeable = False
        object.__setattr__(self, "freqs", freqs)
        object.__setattr__(self, "support_min", int(self.support_min))
        if freqs.ndim != 1 or freqs.size < 1:
            raise InvalidParameterError("a PMF table needs at least one symbol")
        if freqs.min() < 1:
            raise InvalidParameterError("every frequency must be >= 1")
        if int(freqs.sum()) != 1 << self.precision_bits:
            raise InvalidParameterError("frequencies must sum to 2**precision_bits")

    @property
    def support_max(self):
        return self.support_min + self.freqs.size - 1

    @property
    def total(self):
        return 1 << self.precision_bits

    def cumulative(self):
        """Exclusive prefix sums, length ``len(freqs) + 1``."""
        return np.concatenate(([0], np.cumsum(self.freqs)))

    def freq(self, symbol):
        return int(self.freqs[symbol - self.support_min])

    def __eq__(self, other):
        if not isinstance(other, PmfTable):
            return NotImplemented
        return (self.support_min == other.support_min
                and self.precision_bits == other.precision_bits
                and np.array_equal(self.freqs, other.freqs))

    __hash__ = None


class PmfBatch:
    """A stack of tables sharing one support, addressed per coded element.

    ``freqs`` has one row per distinct table; ``index`` (optional) maps each
    coded element to its row, so many elements can share a table.
    """

    def __init__(self, freqs, support_min, precision_bits, index=None):
        freqs = np.array(freqs, dtype=np.int64, ndmin=2)
        if freqs.ndim != 2:
            raise InvalidParameterError("batch frequencies must be 2-D")
        if freqs.min(initial=1) < 1:
            raise InvalidParameterError("every frequency must be >= 1")
        if np.any(freqs.sum(axis=1) != 1 << precision_bits):
            raise InvalidParameterError("every row must sum to 2**precision_bits")
        freqs.flags.writeable = False
        self.freqs = freqs
        self.support_min = int(support_min)
        self.precision_bits = int(precision_bits)
        if index is None:
            index = np.arange(freqs.shape[0])
        index = np.asarray(index, dtype=np.int64).ravel()
        if index.size and (index.min() < 0 or index.max() >= freqs.shape[0]):
            raise InvalidParameterError("table index out of range")
        self.index = index

    @property
    def support_max(self):
        return self.support_min + self.freqs.shape[1] - 1

    def __len__(self):
        return self.index.size

    def __getitem__(self, i):
        return PmfTable(self.support_min, self.freqs[self.index[i]], self.precision_bits)

    def cumulative(self):
        """Per-row exclusive prefix sums, shape ``(rows, width + 1)``."""
        zero = np.zeros((self.freqs.shape[0], 1), dtype=np.int64)
        return np.concatenate((zero, np.cumsum(self.freqs, axis=1)), axis=1)


def apportion(probs, precision_bits):
    """Scale rows of probabilities to integer frequencies summing to 2**P.

    Every entry receives at least 1. The integer parts of ``p * 2**P`` are
    kept, the shortfall is handed out one unit at a time by largest
    fractional remainder (ties to the lower index), and any excess created
    by the >= 1 floor is taken from the largest entry (from the largest
    entries in turn, each kept >= 1, when one entry cannot absorb it).
    """
    probs = np.atleast_2d(np.asarray(probs, dtype=np.float64))
    total = 1 << precision_bits
    width = probs.shape[1]
    sums = probs.sum(axis=1, keepdims=True)
    probs = probs / np.where(sums > 0, sums, 1.0)
    raw = probs * total
    base = np.floor(raw)
    rem = raw - base
    freqs = np.maximum(base.astype(np.int64), 1)
    deficit = total - freqs.sum(axis=1)

    order = np.argsort(-rem, axis=1, kind="stable")
    rank = np.empty_like(order)
    rows = np.arange(probs.shape[0])[:, None]
    rank[rows, order] = np.arange(width)[None, :]
    give = np.clip(deficit, 0, width)
    freqs += (rank < give[:, None]).astype(np.int64)
    # whatever is left (surplus from the floor, or a deficit wider than the row)
    left = total - freqs.sum(axis=1)
    top = np.argmax(freqs, axis=1)
    fits = freqs[np.arange(freqs.shape[0]), top] + left >= 1
    freqs[fits, top[fits]] += left[fits]
    for r in np.flatnonzero(~fits):
        # surplus larger than the top entry: shave the largest entries in turn
        excess = -int(left[r])
        for j in np.argsort(-freqs[r], kind="stable"):
            cut = min(excess, int(freqs[r, j]) - 1)
            freqs[r, j] -= cut
            excess -= cut
            if not excess:
                break
    return freqs


def _check_support(s_min, s_max, precision_bits):
    if not MIN_PRECISION <= precision_bits <= MAX_PRECISION:
        raise CapacityError(
            f"precision_bits must be in [{MIN_PRECISION}, {MAX_PRECISION}]")
    if s_min > s_max:
        raise CapacityError("empty support")
    if s_max - s_min + 1 >= 1 << precision_bits:
        raise CapacityError(
            f"support of width {s_max - s_min + 1} does not fit {precision_bits}-bit tables")


def _column(x):
    return np.asarray(x, dtype=np.float64).reshape(-1, 1)


def _gauss_rows(symbols, mu, sigma):
    """Per-row probabilities with both tails folded into the edge symbols.

    Same arithmetic as :func:`gaussian_bin`, but each bin edge's tail mass
    is evaluated once and shared by the two bins it separates.
    """
    edges = np.append(symbols - 0.5, symbols[-1] + 0.5)
    z = (edges[None, :] - mu) / sigma * _INV_SQRT_2
    tail = 0.5 * erfc(np.abs(z))
    lo, hi = z[:, :-1], z[:, 1:]
    probs = np.where(lo >= 0.0, tail[:, :-1] - tail[:, 1:], tail[:, 1:] - tail[:, :-1])
    mid = (lo < 0.0) & (hi > 0.0)
    probs[mid] = 0.5 * (erf(hi[mid]) - erf(lo[mid]))
    probs = np.clip(probs, 0.0, 1.0)
    lo_edge = (symbols[0] + 0.5 - mu[:, 0]) / sigma[:, 0]
    hi_edge = (symbols[-1] - 0.5 - mu[:, 0]) / sigma[:, 0]
    probs[:, 0] = ndtr(lo_edge)
    if symbols.size > 1:
        probs[:, -1] = ndtr(-hi_edge)
    else:
        probs[:, 0] = 1.0
    return probs


def _delta_rows(symbols, mu):
    cell = np.clip(np.ceil(mu[:, 0] - 0.5), symbols[0], symbols[-1])
    return (symbols[None, :] == cell[:, None]).astype(np.float64)


def _model_rows(model, symbols):
    if isinstance(model, GaussianParams):
        return _gauss_rows(symbols, _column(model.mu), _column(model.sigma))
    if isinstance(model, DeltaParams):
        return _delta_rows(symbols, _column(model.mu))
    if isinstance(model, MixtureParams):
        mu, sigma, w = np.broadcast_arrays(
            _column(model.mu), _column(model.sigma), _column(model.w))
        return (w * _gauss_rows(symbols, mu, sigma)
                + (1.0 - w) * _delta_rows(symbols, mu))
    if isinstance(model, GmmParams):
        weights = np.asarray(model.weights, dtype=np.float64)
        k = weights.shape[-1]
        weights = weights.reshape(-1, k)
        mus = np.asarray(model.mus, dtype=np.float64).reshape(-1, k)
        sigmas = np.asarray(model.sigmas, dtype=np.float64).reshape(-1, k)
        acc = np.zeros((weights.shape[0], symbols.size))
        for j in range(k):
            acc += weights[:, j:j + 1] * _gauss_rows(
                symbols, mus[:, j:j + 1], sigmas[:, j:j + 1])
        return acc
    raise TypeError(f"unsupported model type {type(model).__name__}")


def build_pmf_batch(model: Model, support, precision_bits=16, index=None):
    """Tables for every parameter set in ``model`` (fields flattened to rows)."""
    s_min, s_max = (int(s) for s in support)
    _check_support(s_min, s_max, precision_bits)
    symbols = np.arange(s_min, s_max + 1, dtype=np.float64)
    probs = _model_rows(model, symbols)
    return PmfBatch(apportion(probs, precision_bits), s_min, precision_bits, index)


def build_pmf(model: Model, support, precision_bits=16):
    """Fixed-precision table for a single parameter set over ``support``."""
    batch = build_pmf_batch(model, support, precision_bits)
    if batch.freqs.shape[0] != 1:
        raise InvalidParameterError("build_pmf expects scalar parameters; use build_pmf_batch")
    return batch[0]
