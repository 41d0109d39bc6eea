"""Quick invariant checks behind ``dicm selftest``.

Each check returns ``(name, ok, detail)``. They are small versions of the
test-suite properties and finish in a few seconds.
"""

import math

import numpy as np

from .coder import LatentTensor, decode, encode, ideal_bits
from .optimizer import OptimConfig, optimize
from .prob_models import (DeltaParams, GaussianParams, MixtureParams, build_pmf_batch,
                          delta_likelihood, gaussian_likelihood, likelihood)
from .rate import surrogate_grad, surrogate_nll

__all__ = ["run_all"]


def _bin_reference(y, mu, sigma):
    # upper-tail form keeps precision on both sides of the mean
    a = (y - 0.5 - mu) / (sigma * math.sqrt(2.0))
    b = (y + 0.5 - mu) / (sigma * math.sqrt(2.0))
    if a >= 0:
        return 0.5 * (math.erfc(a) - math.erfc(b))
    if b <= 0:
        return 0.5 * (math.erfc(-b) - math.erfc(-a))
    return 1.0 - 0.5 * (math.erfc(-a) + math.erfc(b))


def check_likelihood(rng):
    worst = 0.0
    for _ in range(300):
        mu = rng.uniform(-20, 20)
        sigma = rng.uniform(0.11, 10)
        y = round(mu + rng.normal() * 2 * sigma)
        ref = _bin_reference(y, mu, sigma)
        if ref < 1e-12:
            continue
        got = float(gaussian_likelihood(y, GaussianParams(mu, sigma)))
        worst = max(worst, abs(got - ref) / ref)
    return "likelihood", worst < 1e-9, f"max rel error {worst:.2e}"


def check_delta(rng):
    mus = rng.uniform(-100, 100, 2000)
    ys = np.arange(-102, 103)
    ones = delta_likelihood(ys[None, :], DeltaParams(mus[:, None])).sum(axis=1)
    boundary = float(delta_likelihood(3, DeltaParams(3.5)))
    ok = bool(np.all(ones == 1.0)) and boundary == 1.0
    return "delta", ok, "one cell per mu, mu = k + 0.5 maps to k"


def check_normalization(rng):
    worst = 0.0
    for _ in range(100):
        mu, sigma, w = rng.uniform(-30, 30), rng.uniform(0.11, 8), rng.uniform(0, 1)
        ys = np.arange(math.floor(mu - 40 * sigma), math.ceil(mu + 40 * sigma) + 1)
        total = float(np.sum(likelihood(ys, MixtureParams(w, mu, sigma))))
        worst = max(worst, abs(total - 1.0))
    return "normalization", worst < 1e-6, f"max |sum - 1| {worst:.2e}"


def check_coder(rng):
    worst = -1.0
    for _ in range(20):
        shape = tuple(int(v) for v in rng.integers(1, 8, 3))
        n = int(np.prod(shape))
        mu = rng.uniform(-20, 20, n)
        sigma = rng.uniform(0.11, 6, n)
        w = rng.uniform(0, 1, n)
        tables = build_pmf_batch(MixtureParams(w, mu, sigma), (-64, 64), 16)
        vals = np.clip(np.round(mu + sigma * rng.normal(size=n)), -64, 64).astype(np.int64)
        sym = LatentTensor(vals.reshape(shape))
        stream = encode(sym, tables)
        if decode(stream, tables) != sym:
            return "coder", False, "round trip mismatch"
        ideal = ideal_bits(sym, tables)
        slack = stream.payload_bit_length - ideal
        if not -1 <= slack <= 32:
            return "coder", False, f"payload {stream.payload_bit_length} vs ideal {ideal:.1f}"
        worst = max(worst, slack)
    return "coder", True, f"20 round trips, max slack {worst:.2f} bits"


def check_gradient(rng):
    h = 1e-5
    worst = 0.0
    for _ in range(200):
        y, mu = rng.uniform(-4, 4), rng.uniform(-4, 4)
        sigma, w = rng.uniform(0.3, 4), rng.uniform(0.05, 0.95)
        if float(np.exp(-surrogate_nll(y, w, mu, sigma)[0] * math.log(2))) <= 1e-6:
            continue
        an = surrogate_grad(y, MixtureParams(w, mu, sigma))
        for k, (dw, dm, ds) in enumerate(((h, 0, 0), (0, h, 0), (0, 0, h))):
            up = surrogate_nll(y, w + dw, mu + dm, sigma + ds)[0]
            dn = surrogate_nll(y, w - dw, mu - dm, sigma - ds)[0]
            fd = (up - dn) / (2 * h)
            worst = max(worst, abs(an[k] - fd) / max(abs(fd), 1e-6))
    return "gradient", worst < 1e-4, f"max rel error {worst:.2e}"


def check_takeover(rng):
    x = rng.uniform(0, 1, (16, 16))
    res = optimize(x, np.zeros(x.shape, dtype=np.uint8), cfg=OptimConfig(steps=150))
    frac = res.delta_fraction
    return "delta takeover", frac == 1.0, f"delta fraction {frac:.3f} on an all-zero mask"


def run_all(seed=0):
    rng = np.random.default_rng(seed)
    checks = (check_likelihood, check_delta, check_normalization, check_coder,
              check_gradient, check_takeover)
    return [check(rng) for check in checks]
