"""Per-element fitting of the Gaussian + delta entropy model to one image.

Every coefficient ``i`` of channel ``c`` is either coded with the channel's
Gaussian ``N(mu_c, sigma_c^2)`` or replaced by the delta cell of ``mu_c``,
which then costs (almost) nothing. The per-element weight ``w_i`` is the
probability of the Gaussian outcome, and the relaxed objective is the
expected region-weighted rate-distortion cost of the two outcomes::

    J_i = w_i       * [R(yhat_i) + lam * D_i(round(yhat_i))]
        + (1 - w_i) * [R(mu_c)   + lam * D_i(cell(mu_c))]

``R`` is ``-log2`` of the smooth surrogate likelihood (narrow Gaussian in
place of the delta), ``D_i`` the squared reconstruction error of the
coefficient on the 8-bit intensity scale, zero outside the (block-dilated)
mask. ``yhat_i = mu_c + t_i (y_i - mu_c)`` with a shrink factor ``t_i`` in
[0, 1] lets the Gaussian outcome trade fidelity for rate as well, so the
Gaussian-only baseline can also drop masked-out content. The rate term sees
rounding as the identity; the distortion slope is taken at the unrounded
latent.

Steps are first-order and projected (w to [0.01, 0.99], t to [0, 1],
sigma to >= SIGMA_MIN) with Adam-normalised step lengths, since the
coordinates differ in curvature by several orders of magnitude.
"""

import logging
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import DimensionError, InvalidParameterError, OptimizationError
from .prob_models import SIGMA_MIN, delta_cell
from .rate import P_FLOOR, SIGMA_DELTA, surrogate_nll, gauss_bin_grads
from .toy_codec import TransformSpec, analyze, mask_to_latent_mask, quantize

__all__ = [
    "OptimConfig",
    "OptimResult",
    "optimize",
    "baseline_gaussian",
    "W_BOUNDS",
    "HARDEN_AT",
    "DISTORTION_SCALE",
    "snap_mu",
    "snap_sigma",
]

log = logging.getLogger(__name__)

W_BOUNDS = (0.01, 0.99)
HARDEN_AT = 0.5
# distortion is measured in 8-bit intensity units
DISTORTION_SCALE = 255.0 ** 2
# 16-bit fixed point for transmitted channel parameters
MU_SCALE = 128.0
SIGMA_SCALE = 128.0
_LN2 = np.log(2.0)


def snap_mu(mu):
    """Round to the signed Q8.7 grid the bitstream carries."""
    code = np.clip(np.round(np.asarray(mu) * MU_SCALE), -32768, 32767)
    return code / MU_SCALE


def snap_sigma(sigma):
    """Round to the unsigned Q9.7 grid, never below SIGMA_MIN."""
    floor = np.ceil(SIGMA_MIN * SIGMA_SCALE)
    code = np.clip(np.round(np.asarray(sigma) * SIGMA_SCALE), floor, 65535)
    return code / SIGMA_SCALE


@dataclass(frozen=True)
class OptimConfig:
    lam: float = 1.0
    steps: int = 500
    step_size: float = 0.05
    sigma_delta: float = SIGMA_DELTA
    w_init: float = 0.5
    seed: int = 0
    # evaluate the rate at yhat + U(-1/2, 1/2) instead of yhat
    noise: bool = False

    def __post_init__(self):
        if not self.lam > 0:
            raise ValueError("lam must be positive")
        if self.steps < 0:
            raise ValueError("steps must be non-negative")
        if not self.step_size > 0:
            raise ValueError("step_size must be positive")
        if not self.sigma_delta > 0:
            raise ValueError("sigma_delta must be positive")
        if not 0.0 < self.w_init < 1.0:
            raise ValueError("w_init must lie in (0, 1)")


@dataclass(frozen=True, eq=False)
class OptimResult:
    """Fitted model for one image.

    ``w`` and ``latents`` are per element ``(64, by, bx)``; ``mu`` and
    ``sigma`` are per channel and already snapped to the transmitted grid.
    """

    w: np.ndarray
    mu: np.ndarray
    sigma: np.ndarray
    latents: np.ndarray
    coeffs: np.ndarray
    trace: np.ndarray
    shape: tuple
    spec: TransformSpec
    gaussian_only: bool = False
    config: Optional[OptimConfig] = field(default=None, repr=False)

    @property
    def gaussian_mask(self):
        """Hardened choice per element: True for Gaussian, False for delta."""
        if self.gaussian_only:
            return np.ones(self.w.shape, dtype=bool)
        return self.w >= HARDEN_AT

    @property
    def weight_map(self):
        """Mean ``w`` of every block, image-aligned ``(by, bx)``."""
        return self.w.mean(axis=0)

    @property
    def delta_fraction(self):
        return float(1.0 - self.gaussian_mask.mean()) if self.w.size else 0.0

    def mu_per_element(self):
        return np.broadcast_to(self.mu[:, None, None], self.w.shape)

    def sigma_per_element(self):
        return np.broadcast_to(self.sigma[:, None, None], self.w.shape)

    def symbols(self, support=(-255, 255)):
        """Integers the codec transmits: rounded latents or the delta cell."""
        cells = np.broadcast_to(delta_cell(self.mu)[:, None, None], self.w.shape)
        vals = np.where(self.gaussian_mask, quantize(self.latents), cells)
        return np.clip(vals, support[0], support[1])


class _Adam:
    def __init__(self, lr, beta1=0.9, beta2=0.999, eps=1e-8):
        self.lr, self.b1, self.b2, self.eps = lr, beta1, beta2, eps
        self.t = 0
        self.m = {}
        self.v = {}

    def step(self, params, grads):
        self.t += 1
        c1 = 1.0 - self.b1 ** self.t
        c2 = 1.0 - self.b2 ** self.t
        for name, g in grads.items():
            m = self.m.get(name, 0.0) * self.b1 + (1.0 - self.b1) * g
            v = self.v.get(name, 0.0) * self.b2 + (1.0 - self.b2) * g * g
            self.m[name], self.v[name] = m, v
            params[name] = params[name] - self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)


def _init_channel_params(y):
    flat = y.reshape(y.shape[0], -1)
    mu = flat.mean(axis=1)
    sigma = np.sqrt(((flat - mu[:, None]) ** 2).mean(axis=1))
    return mu, np.maximum(sigma, SIGMA_MIN)


def _flag_prior(w, lm):
    """Mean weight per (channel, in/out region): the flag coder's two main contexts."""
    inside = lm > 0
    n_in = inside.sum(axis=(1, 2))
    n_out = inside[0].size - n_in
    s_in = np.where(inside, w, 0.0).sum(axis=(1, 2))
    s_out = w.sum(axis=(1, 2)) - s_in
    pi_in = s_in / np.maximum(n_in, 1)
    pi_out = s_out / np.maximum(n_out, 1)
    return np.where(inside, pi_in[:, None, None], pi_out[:, None, None])


def _objective(y, lm, p, cfg, scale, gaussian_only, dither):
    """Relaxed objective per element and its gradients."""
    w, t = p["w"], p["t"]
    mu = p["mu"][:, None, None]
    sigma = p["sigma"][:, None, None]
    diff = y - mu
    yhat = mu + t * diff
    r_g, rg_y, rg_w, rg_mu, rg_s = surrogate_nll(yhat + dither, w, mu, sigma, cfg.sigma_delta)
    e_g = quantize(yhat) - y
    dist_g = scale * lm * e_g * e_g
    # slope of the unrounded error; the rounded one makes t oscillate across cells
    dd_g = 2.0 * scale * lm * (yhat - y)

    if gaussian_only:
        j = r_g + dist_g
        grads = {
            "t": (rg_y + dd_g) * diff,
            "mu": ((rg_y + dd_g) * (1.0 - t) + rg_mu).sum(axis=(1, 2)),
            "sigma": rg_s.sum(axis=(1, 2)),
        }
        return j, grads

    # delta outcome: rate at the centre of the delta, reconstruction at its cell
    g0, _, g0_s = gauss_bin_grads(0.0, 0.0, sigma)
    d0, _, _ = gauss_bin_grads(0.0, 0.0, cfg.sigma_delta)
    p0 = np.maximum(w * g0 + (1.0 - w) * d0, P_FLOOR)
    r_d = -np.log2(p0)
    rd_w = -(g0 - d0) / (p0 * _LN2)
    rd_s = -w * g0_s / (p0 * _LN2)
    e_d = delta_cell(mu) - y
    dist_d = scale * lm * e_d * e_d
    # the cell of mu passes mu's gradient straight through
    dd_d = 2.0 * scale * lm * e_d

    # selection flag under a Bernoulli prior fitted to the weights; at the
    # fitted prior the derivative through the prior vanishes
    pi = _flag_prior(w, lm)
    r_f = -(w * np.log2(pi) + (1.0 - w) * np.log2(1.0 - pi))
    rf_w = np.log2((1.0 - pi) / pi)

    j = w * (r_g + dist_g) + (1.0 - w) * (r_d + dist_d) + r_f
    grads = {
        "w": (r_g + dist_g) - (r_d + dist_d) + w * rg_w + (1.0 - w) * rd_w + rf_w,
        "t": w * (rg_y + dd_g) * diff,
        "mu": (w * ((rg_y + dd_g) * (1.0 - t) + rg_mu) + (1.0 - w) * dd_d).sum(axis=(1, 2)),
        "sigma": (w * rg_s + (1.0 - w) * rd_s).sum(axis=(1, 2)),
    }
    return j, grads


def _snap_channels(y, lm, p, cfg, scale, gaussian_only, state):
    """Snap sigma, then pick per channel the grid mu with the lowest objective.

    The delta cell of mu has no gradient, so descent can leave mu on the wrong
    side of a cell edge; the grid points just inside the neighbouring cells
    are tried alongside the two nearest ones.
    """
    p["sigma"] = snap_sigma(p["sigma"])
    mu = p["mu"]
    k = delta_cell(mu)
    candidates = [np.floor(mu * MU_SCALE) / MU_SCALE, np.ceil(mu * MU_SCALE) / MU_SCALE,
                  k - 0.5, k + 0.5 + 1.0 / MU_SCALE]
    best, best_j = None, None
    for cand in candidates:
        cand = snap_mu(cand)
        j, _ = _objective(y, lm, state(dict(p, mu=cand)), cfg, scale, gaussian_only, 0.0)
        j = j.sum(axis=(1, 2))
        if best is None:
            best, best_j = cand, j
        else:
            better = j < best_j
            best = np.where(better, cand, best)
            best_j = np.where(better, j, best_j)
    p["mu"] = best


def _project(p, gaussian_only):
    if not gaussian_only:
        p["w"] = np.clip(p["w"], *W_BOUNDS)
    p["t"] = np.clip(p["t"], 0.0, 1.0)
    p["sigma"] = np.maximum(p["sigma"], SIGMA_MIN)


def _run(x, m, spec, cfg, gaussian_only):
    x = np.asarray(x, dtype=np.float64)
    m = np.asarray(m)
    if x.ndim != 2 or x.shape != m.shape:
        raise DimensionError(f"image {x.shape} and mask {m.shape} must be equal 2-D shapes")
    if not np.all(np.isfinite(x)):
        raise InvalidParameterError("image contains non-finite pixels")
    y = analyze(x, spec)
    lm = mask_to_latent_mask(m, spec)
    scale = cfg.lam * DISTORTION_SCALE * spec.q ** 2
    mu0, sigma0 = _init_channel_params(y)
    p = {"t": np.ones_like(y), "mu": mu0, "sigma": sigma0}
    if not gaussian_only:
        p["w"] = np.full_like(y, cfg.w_init)
    w_fixed = np.ones_like(y)
    rng = np.random.default_rng(cfg.seed)
    adam = _Adam(cfg.step_size)
    trace = np.empty(cfg.steps + 1)

    def state(q):
        return q if not gaussian_only else dict(q, w=w_fixed)

    def evaluate(step):
        if not all(np.all(np.isfinite(v)) for v in p.values()):
            raise OptimizationError("parameters became non-finite", step)
        dither = rng.uniform(-0.5, 0.5, y.shape) if cfg.noise else 0.0
        j, grads = _objective(y, lm, state(p), cfg, scale, gaussian_only, dither)
        j = float(j.sum())
        if not np.isfinite(j) or not all(np.all(np.isfinite(g)) for g in grads.values()):
            raise OptimizationError("objective became non-finite", step)
        trace[step] = j
        return grads

    for step in range(cfg.steps):
        grads = evaluate(step)
        adam.step(p, grads)
        _project(p, gaussian_only)
    _snap_channels(y, lm, p, cfg, scale, gaussian_only, state)
    evaluate(cfg.steps)
    log.debug("objective %.1f -> %.1f over %d steps", trace[0], trace[-1], cfg.steps)

    w = w_fixed if gaussian_only else p["w"]
    mu = p["mu"]
    latents = mu[:, None, None] + p["t"] * (y - mu[:, None, None])
    return OptimResult(w=w, mu=mu, sigma=p["sigma"], latents=latents, coeffs=y,
                       trace=trace, shape=x.shape, spec=spec,
                       gaussian_only=gaussian_only, config=cfg)


def optimize(x, m, spec: TransformSpec = TransformSpec(), cfg: OptimConfig = OptimConfig()):
    """Fit the Gaussian + delta model to image ``x`` under region mask ``m``."""
    return _run(x, m, spec, cfg, gaussian_only=False)


def baseline_gaussian(x, m, spec: TransformSpec = TransformSpec(),
                      cfg: OptimConfig = OptimConfig()):
    """Same descent with every weight frozen at 1 (Gaussian-only model)."""
    return _run(x, m, spec, cfg, gaussian_only=True)
