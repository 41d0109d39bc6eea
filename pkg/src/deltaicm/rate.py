"""Bit-rate estimates, rate-distortion losses and the training surrogate."""

import math
from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np

from ._special import norm_pdf
from .errors import DimensionError, InvalidParameterError
from .prob_models import GmmParams, MixtureParams, gaussian_bin, likelihood

__all__ = [
    "P_FLOOR",
    "SIGMA_DELTA",
    "PARAM_BITS",
    "RateReport",
    "LossBreakdown",
    "rate_estimate",
    "side_info_bits",
    "masked_mse",
    "loss_rd",
    "loss_task",
    "loss_region",
    "surrogate_likelihood",
    "surrogate_grad",
    "surrogate_nll",
    "gauss_bin_grads",
]

P_FLOOR = 2.0 ** -24
SIGMA_DELTA = 0.05
PARAM_BITS = 16
_LN2 = math.log(2.0)


@dataclass(frozen=True)
class RateReport:
    total_bits: float
    per_element_bits: np.ndarray
    bpp: Optional[float] = None


@dataclass(frozen=True)
class LossBreakdown:
    rate_y: float
    rate_z: float
    distortion: float
    lambda_values: Tuple[float, ...]
    total: float
    task_term: Optional[float] = None


def _latent_values(latents):
    return np.asarray(getattr(latents, "values", latents))


def _check_param_shapes(shape, model):
    if isinstance(model, GmmParams):
        fields = [np.shape(model.weights)[:-1], np.shape(model.mus)[:-1]]
    else:
        fields = [np.shape(v) for v in vars(model).values()]
    for fshape in fields:
        if fshape not in ((), shape):
            raise DimensionError(
                f"parameter shape {fshape} does not match latent shape {shape}")


def rate_estimate(latents, params, pixels=None) -> RateReport:
    """Ideal code length of ``latents`` under per-element model ``params``.

    Each element costs ``-log2(max(p, 2**-24))`` bits. ``pixels`` (optional)
    turns the total into bits per pixel.
    """
    vals = _latent_values(latents)
    _check_param_shapes(vals.shape, params)
    p = np.asarray(likelihood(vals, params), dtype=np.float64)
    bits = -np.log2(np.maximum(p, P_FLOOR))
    bits = np.maximum(bits, 0.0) + 0.0
    total = float(bits.sum())
    bpp = total / pixels if pixels else None
    return RateReport(total, bits, bpp)


def side_info_bits(n_params, bits_each=PARAM_BITS):
    """Cost of shipping ``n_params`` model parameters as fixed-point words."""
    return float(n_params * bits_each)


def masked_mse(x, x_hat, m):
    """``mean((x*m - x_hat*m)**2)`` over every pixel, masked-out ones included."""
    x = np.asarray(x, dtype=np.float64)
    x_hat = np.asarray(x_hat, dtype=np.float64)
    m = np.asarray(m, dtype=np.float64)
    if x.shape != x_hat.shape or x.shape != m.shape:
        raise DimensionError(
            f"shapes differ: x {x.shape}, x_hat {x_hat.shape}, mask {m.shape}")
    if x.size == 0:
        return 0.0
    diff = x * m - x_hat * m
    return float(np.mean(diff * diff))


def _mse(x, x_hat):
    x = np.asarray(x, dtype=np.float64)
    return masked_mse(x, x_hat, np.ones_like(x))


def loss_rd(rate_y, rate_z, x, x_hat, lam) -> LossBreakdown:
    """``R(y) + R(z) + lam * mse(x, x_hat)``."""
    d = _mse(x, x_hat)
    return LossBreakdown(float(rate_y), float(rate_z), d, (float(lam),),
                         float(rate_y) + float(rate_z) + lam * d)


def loss_task(rate_y, rate_z, x, x_hat, lam1, lam2, task_value) -> LossBreakdown:
    """``R(y) + R(z) + lam1 * mse + lam2 * task_value``.

    ``task_value`` is whatever scalar a recognition model reports for the
    decoded image; no such model ships with this package.
    """
    d = _mse(x, x_hat)
    total = float(rate_y) + float(rate_z) + lam1 * d + lam2 * float(task_value)
    return LossBreakdown(float(rate_y), float(rate_z), d, (float(lam1), float(lam2)),
                         total, float(task_value))


def loss_region(rate_y, rate_z, x, x_hat, m, lam) -> LossBreakdown:
    """``R(y) + R(z) + lam * masked_mse(x, x_hat, m)``."""
    d = masked_mse(x, x_hat, m)
    return LossBreakdown(float(rate_y), float(rate_z), d, (float(lam),),
                         float(rate_y) + float(rate_z) + lam * d)


# --- differentiable surrogate ----------------------------------------------


def gauss_bin_grads(y, mu, sigma):
    """Bin mass of N(mu, sigma^2) around real ``y`` and its partials.

    Returns ``(g, dg_dy, dg_dsigma)``; ``dg_dmu`` is ``-dg_dy``.
    """
    g = gaussian_bin(y, mu, sigma)
    a = (y - 0.5 - mu) / sigma
    b = (y + 0.5 - mu) / sigma
    pa = norm_pdf(a)
    pb = norm_pdf(b)
    dg_dy = (pb - pa) / sigma
    dg_dsigma = -(b * pb - a * pa) / sigma
    return g, dg_dy, dg_dsigma


def _check_sigma_delta(sigma_delta):
    if not (np.isfinite(sigma_delta) and sigma_delta > 0):
        raise InvalidParameterError("sigma_delta must be a positive finite number")


def surrogate_likelihood(y_noisy, p: MixtureParams, sigma_delta=SIGMA_DELTA):
    """Smooth stand-in for the Gaussian+delta likelihood at real ``y_noisy``.

    The delta component is replaced by a narrow Gaussian of scale
    ``sigma_delta``; both components are integrated over the unit bin
    centred on ``y_noisy``.
    """
    _check_sigma_delta(sigma_delta)
    y = np.asarray(y_noisy, dtype=np.float64)
    w = np.asarray(p.w, dtype=np.float64)
    g = gaussian_bin(y, p.mu, p.sigma)
    d = gaussian_bin(y, p.mu, sigma_delta)
    out = w * g + (1.0 - w) * d
    return float(out) if out.ndim == 0 else out


def surrogate_nll(y, w, mu, sigma, sigma_delta=SIGMA_DELTA):
    """``-log2`` surrogate likelihood and its partials in y, w, mu, sigma.

    Arrays broadcast. The likelihood is floored at ``P_FLOOR`` before the
    logarithm; below the floor all partials are zero.
    """
    _check_sigma_delta(sigma_delta)
    g, g_y, g_s = gauss_bin_grads(y, mu, sigma)
    d, d_y, _ = gauss_bin_grads(y, mu, sigma_delta)
    p = w * g + (1.0 - w) * d
    live = p > P_FLOOR
    scale = np.where(live, -1.0 / (np.maximum(p, P_FLOOR) * _LN2), 0.0)
    nll = -np.log2(np.maximum(p, P_FLOOR))
    p_y = w * g_y + (1.0 - w) * d_y
    return nll, scale * p_y, scale * (g - d), -scale * p_y, scale * w * g_s


def surrogate_grad(y_noisy, p: MixtureParams, sigma_delta=SIGMA_DELTA):
    """Analytic ``(d/dw, d/dmu, d/dsigma)`` of ``-log2 surrogate_likelihood``."""
    y = np.asarray(y_noisy, dtype=np.float64)
    _, _, dw, dmu, dsigma = surrogate_nll(
        y, np.asarray(p.w, dtype=np.float64), np.asarray(p.mu, dtype=np.float64),
        np.asarray(p.sigma, dtype=np.float64), sigma_delta)
    if np.ndim(dw) == 0:
        return float(dw), float(dmu), float(dsigma)
    return dw, dmu, dsigma
