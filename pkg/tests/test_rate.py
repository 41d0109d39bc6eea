import math

import mpmath
import numpy as np
import pytest
from hypothesis import given, strategies as st

from deltaicm.coder import LatentTensor
from deltaicm.errors import DimensionError, InvalidParameterError
from deltaicm.prob_models import (SIGMA_MIN, DeltaParams, GaussianParams, GmmParams,
                                  MixtureParams, gaussian_likelihood, mixture_likelihood)
from deltaicm.rate import (P_FLOOR, gauss_bin_grads, loss_rd, loss_region, loss_task,
                           masked_mse, rate_estimate, side_info_bits, surrogate_grad,
                           surrogate_likelihood, surrogate_nll)

mpmath.mp.dps = 40


def test_rate_examples():
    assert rate_estimate(np.array([3]), DeltaParams(3.2)).total_bits == 0.0
    ref = -math.log2(float(mpmath.ncdf(0.5) - mpmath.ncdf(-0.5)))
    # erf oracle bin mass 0.3829249 -> 1.38487 bits
    assert float(mpmath.ncdf(0.5) - mpmath.ncdf(-0.5)) == pytest.approx(0.3829249, abs=1e-7)
    assert ref == pytest.approx(1.38487, abs=1e-5)
    r = rate_estimate(np.array([0]), GaussianParams(0.0, 1.0))
    assert r.total_bits == pytest.approx(ref, rel=1e-13)
    # bin [-1/2, 1/2] holds half of N(1/2, 0.11^2) up to 1e-19
    assert rate_estimate(np.array([0]), GaussianParams(0.5, SIGMA_MIN)).total_bits == 1.0


def test_rate_floor_and_report_fields(rng):
    vals = LatentTensor(rng.integers(-5, 6, (2, 3, 4)))
    mu = rng.uniform(-3, 3, (2, 3, 4))
    r = rate_estimate(vals, DeltaParams(mu), pixels=48)
    off = vals.values != np.ceil(mu - 0.5)
    np.testing.assert_array_equal(r.per_element_bits[off], 24.0)
    np.testing.assert_array_equal(r.per_element_bits[~off], 0.0)
    assert r.total_bits == pytest.approx(r.per_element_bits.sum(), abs=1e-6)
    assert r.bpp == pytest.approx(r.total_bits / 48)
    assert rate_estimate(vals, DeltaParams(mu)).bpp is None


def test_rate_shape_mismatch():
    with pytest.raises(DimensionError):
        rate_estimate(np.zeros((2, 2, 2)), GaussianParams(np.zeros(3), np.ones(3)))
    with pytest.raises(DimensionError):
        rate_estimate(np.zeros((2, 2)), GmmParams(np.full((3, 2), 0.5), np.zeros((3, 2)),
                                                  np.ones((3, 2))))


@given(st.lists(st.integers(-300, 300), min_size=1, max_size=20),
       st.floats(-300, 300), st.floats(SIGMA_MIN, 50), st.floats(0, 1))
def test_rate_finite_and_non_negative(vals, mu, sigma, w):
    r = rate_estimate(np.array(vals), MixtureParams(w, mu, sigma))
    assert np.all(np.isfinite(r.per_element_bits))
    assert np.all(r.per_element_bits >= 0)
    assert np.all(r.per_element_bits <= -math.log2(P_FLOOR))


def test_side_info_bits():
    assert side_info_bits(64) == 1024.0
    assert side_info_bits(3, 12) == 36.0


def test_masked_mse_examples():
    assert masked_mse(np.array([[4.0], [2.0]]), np.array([[1.0], [2.0]]),
                      np.array([[1], [0]])) == 4.5
    x = np.arange(6.0).reshape(2, 3)
    y = x[::-1].copy()
    assert masked_mse(x, y, np.ones_like(x)) == np.mean((x - y) ** 2)
    assert masked_mse(x, y, np.zeros_like(x)) == 0.0
    with pytest.raises(DimensionError):
        masked_mse(x, y, np.ones((3, 2)))


def test_losses_hand_computed():
    x = np.array([[0.0, 1.0], [0.5, 0.5]])
    xh = np.array([[0.5, 1.0], [0.5, 0.0]])
    # mse = (0.25 + 0 + 0 + 0.25) / 4 = 0.125
    rd = loss_rd(10.0, 2.0, x, xh, 8.0)
    assert (rd.distortion, rd.total) == (0.125, 13.0)
    assert rd.lambda_values == (8.0,)
    assert loss_rd(10.0, 2.0, x, xh, 0.0).total == 12.0
    assert loss_rd(10.0, 2.0, x, x, 5.0).total == 12.0
    t = loss_task(10.0, 2.0, x, xh, 8.0, 3.0, 0.5)
    assert t.total == 14.5 and t.task_term == 0.5 and t.lambda_values == (8.0, 3.0)
    assert loss_task(10.0, 2.0, x, xh, 8.0, 0.0, 7.0).total == rd.total
    assert loss_task(10.0, 2.0, x, xh, 8.0, 3.0, 0.0).total == rd.total
    m = np.array([[1, 0], [0, 1]])
    # masked: (0.25 + 0.25) / 4
    reg = loss_region(10.0, 2.0, x, xh, m, 8.0)
    assert reg.total == 13.0
    m2 = np.array([[0, 1], [1, 0]])
    assert loss_region(10.0, 2.0, x, xh, m2, 8.0).total == 12.0


@given(st.lists(st.floats(0, 1), min_size=4, max_size=4),
       st.lists(st.floats(0, 1), min_size=4, max_size=4), st.floats(0, 100))
def test_region_loss_with_full_mask_equals_rd(a, b, lam):
    x = np.array(a).reshape(2, 2)
    xh = np.array(b).reshape(2, 2)
    r1 = loss_region(3.0, 1.0, x, xh, np.ones((2, 2)), lam)
    r2 = loss_rd(3.0, 1.0, x, xh, lam)
    assert r1 == r2


# --- surrogate --------------------------------------------------------------


def test_surrogate_reduces_to_gaussian_at_w1():
    ys = np.linspace(-4, 4, 33)
    s = surrogate_likelihood(ys, MixtureParams(1.0, 0.3, 1.2))
    np.testing.assert_array_equal(s, gaussian_likelihood(ys, GaussianParams(0.3, 1.2)))


def test_surrogate_delta_recovery():
    vals = [surrogate_likelihood(2.3, MixtureParams(0.0, 2.0, 1.0), sd) for sd in (0.05, 0.01, 1e-4)]
    assert vals[-1] == pytest.approx(1.0, abs=1e-12)
    assert vals == sorted(vals)


def test_surrogate_invalid_sigma_delta():
    for bad in (0.0, -1.0, np.nan):
        with pytest.raises(InvalidParameterError):
            surrogate_likelihood(0.0, MixtureParams(0.5, 0.0, 1.0), bad)


@given(st.floats(-0.45, 0.45), st.floats(-20, 20), st.floats(0, 1), st.floats(SIGMA_MIN, 5))
def test_surrogate_converges_monotonically_to_hard_rate(off, mu, w, sigma):
    y = delta_center = mu + off
    sds = [0.2, 0.1, 0.05, 0.02, 0.01, 0.005]
    rates = [surrogate_nll(y, w, mu, sigma, sd)[0] for sd in sds]
    assert all(b <= a + 1e-12 for a, b in zip(rates, rates[1:]))
    # bin of y about the narrow Gaussian at mu: 1 up to the tail beyond 0.05/0.005
    g = float(surrogate_likelihood(delta_center, MixtureParams(1.0, mu, sigma)))
    hard = -math.log2(w * g + (1 - w))
    assert rates[-1] == pytest.approx(hard, abs=1e-9)
    if w == 0:
        assert rates[-1] < 1e-9


def _fd(fn, x, h=1e-5):
    return (fn(x + h) - fn(x - h)) / (2 * h)


def test_surrogate_gradient_three_points():
    for y, w, mu, sigma in [(0.3, 0.5, 0.0, 1.0), (-2.7, 0.2, 1.1, 2.5), (4.0, 0.9, 3.6, 0.4)]:
        dw, dmu, ds = surrogate_grad(y, MixtureParams(w, mu, sigma))
        nll = lambda w_, m_, s_: -math.log2(surrogate_likelihood(y, MixtureParams(w_, m_, s_)))
        assert dw == pytest.approx(_fd(lambda v: nll(v, mu, sigma), w), rel=1e-6)
        assert dmu == pytest.approx(_fd(lambda v: nll(w, v, sigma), mu), rel=1e-6)
        assert ds == pytest.approx(_fd(lambda v: nll(w, mu, v), sigma), rel=1e-6)


@given(st.floats(-6, 6), st.floats(0.05, 0.95), st.floats(-6, 6), st.floats(0.2, 6))
def test_surrogate_gradient_property(y, w, mu, sigma):
    nll = lambda w_, m_, s_: surrogate_nll(y, w_, m_, s_)[0]
    if surrogate_likelihood(y, MixtureParams(w, mu, sigma)) <= 1e-6:
        return
    _, d_y, d_w, d_mu, d_s = surrogate_nll(y, w, mu, sigma)
    fds = (_fd(lambda v: surrogate_nll(v, w, mu, sigma)[0], y),
           _fd(lambda v: nll(v, mu, sigma), w),
           _fd(lambda v: nll(w, v, sigma), mu),
           _fd(lambda v: nll(w, mu, v), sigma))
    for an, fd in zip((d_y, d_w, d_mu, d_s), fds):
        assert abs(an - fd) <= 1e-4 * max(abs(fd), 1e-3)


def test_bin_grads_against_finite_differences(rng):
    for _ in range(50):
        y, mu, s = rng.uniform(-5, 5), rng.uniform(-5, 5), rng.uniform(0.2, 4)
        g, gy, gs = gauss_bin_grads(y, mu, s)
        assert gy == pytest.approx(_fd(lambda v: gauss_bin_grads(v, mu, s)[0], y), rel=1e-5, abs=1e-9)
        assert gs == pytest.approx(_fd(lambda v: gauss_bin_grads(y, mu, v)[0], s), rel=1e-5, abs=1e-9)


def test_surrogate_floor_zeroes_gradients():
    nll, dy, dw, dmu, ds = surrogate_nll(40.0, 0.5, 0.0, 0.2)
    assert nll == pytest.approx(24.0)
    assert (dy, dw, dmu, ds) == (0.0, 0.0, 0.0, 0.0)


def test_mixture_surrogate_is_hard_mixture_in_limit():
    p = MixtureParams(0.3, 1.0, 0.8)
    hard = mixture_likelihood(1, p)
    assert surrogate_likelihood(1.0, p, 1e-6) == pytest.approx(hard, rel=1e-12)
