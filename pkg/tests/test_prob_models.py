import math

import mpmath
import numpy as np
import pytest
from hypothesis import assume, given, strategies as st
from scipy import integrate

from deltaicm.errors import CapacityError, InvalidParameterError
from deltaicm.prob_models import (SIGMA_MIN, DeltaParams, GaussianParams, GmmParams,
                                  MixtureParams, PmfBatch, PmfTable, apportion, build_pmf,
                                  build_pmf_batch, delta_cell, delta_likelihood,
                                  gaussian_likelihood, gmm_likelihood, likelihood,
                                  mixture_likelihood)

mpmath.mp.dps = 40

finite_mu = st.floats(-50, 50, allow_nan=False)
sigmas = st.floats(SIGMA_MIN, 20, allow_nan=False)
weights = st.floats(0, 1)


def _mp_bin(y, mu, sigma):
    a = (mpmath.mpf(y) - mpmath.mpf("0.5") - mpmath.mpf(mu)) / mpmath.mpf(sigma)
    b = (mpmath.mpf(y) + mpmath.mpf("0.5") - mpmath.mpf(mu)) / mpmath.mpf(sigma)
    return float(mpmath.ncdf(b) - mpmath.ncdf(a))


def _quad_bin(y, mu, sigma):
    pdf = lambda t: math.exp(-0.5 * ((t - mu) / sigma) ** 2) / (sigma * math.sqrt(2 * math.pi))
    val, _ = integrate.quad(pdf, y - 0.5, y + 0.5, epsabs=0, epsrel=1e-13, limit=200)
    return val


# --- Gaussian ---------------------------------------------------------------


def test_gaussian_standard_central_bin():
    ref = _mp_bin(0, 0, 1)
    assert ref == pytest.approx(0.3829249225480262, rel=1e-15)
    assert gaussian_likelihood(0, GaussianParams(0.0, 1.0)) == pytest.approx(ref, rel=1e-14)


def test_gaussian_narrow_scale_concentrates():
    p = gaussian_likelihood(5, GaussianParams(5.0, SIGMA_MIN))
    assert p >= 0.99
    assert p == pytest.approx(_mp_bin(5, 5, SIGMA_MIN), rel=1e-13)


def test_gaussian_even_symmetry():
    a = gaussian_likelihood(1, GaussianParams(0.0, 2.0))
    b = gaussian_likelihood(-1, GaussianParams(0.0, 2.0))
    assert a == b


def test_gaussian_matches_quadrature_on_grid(rng):
    mus = rng.uniform(-10, 10, 60)
    sig = rng.uniform(0.2, 8, 60)
    worst = 0.0
    for mu, s in zip(mus, sig):
        for y in range(int(mu - 3 * s) - 1, int(mu + 3 * s) + 2, max(1, int(s))):
            ref = _quad_bin(y, mu, s)
            if ref < 1e-12:
                continue
            got = gaussian_likelihood(y, GaussianParams(mu, s))
            worst = max(worst, abs(got - ref) / ref)
    assert worst < 1e-9


def test_gaussian_far_tail_keeps_relative_precision():
    for y in (12, 20, -25):
        got = gaussian_likelihood(y, GaussianParams(0.0, 1.0))
        assert got == pytest.approx(_mp_bin(y, 0, 1), rel=1e-11)


@pytest.mark.parametrize("mu,sigma", [(np.nan, 1.0), (0.0, np.inf), (0.0, 0.05), (0.0, -1.0)])
def test_gaussian_invalid_parameters(mu, sigma):
    with pytest.raises(InvalidParameterError):
        GaussianParams(mu, sigma)


def test_non_finite_symbol_rejected():
    with pytest.raises(InvalidParameterError):
        gaussian_likelihood(np.inf, GaussianParams(0.0, 1.0))
    with pytest.raises(InvalidParameterError):
        delta_likelihood(np.nan, DeltaParams(0.0))


# --- delta ------------------------------------------------------------------


@pytest.mark.parametrize("y,mu,expected", [
    (3, 3.2, 1.0),
    (3, 3.5, 1.0),
    (4, 3.5, 0.0),
    (0, 7.0, 0.0),
    (-3, -2.5, 1.0),
    (-2, -2.5, 0.0),
])
def test_delta_cells(y, mu, expected):
    assert delta_likelihood(y, DeltaParams(mu)) == expected


def test_delta_rejects_non_finite_mu():
    with pytest.raises(InvalidParameterError):
        DeltaParams(np.inf)


@given(finite_mu)
def test_delta_exactly_one_cell(mu):
    ys = np.arange(math.floor(mu) - 3, math.ceil(mu) + 4)
    probs = delta_likelihood(ys, DeltaParams(mu))
    assert probs.sum() == 1.0
    assert ys[probs == 1.0][0] == delta_cell(mu)


@given(st.integers(-1000, 1000))
def test_delta_boundary_goes_to_lower_symbol(k):
    assert delta_cell(k + 0.5) == k
    assert delta_likelihood(k, DeltaParams(k + 0.5)) == 1.0


# --- mixtures ---------------------------------------------------------------


def test_mixture_examples():
    ys = np.arange(-6, 7)
    g = gaussian_likelihood(ys, GaussianParams(0.3, 1.7))
    np.testing.assert_array_equal(mixture_likelihood(ys, MixtureParams(1.0, 0.3, 1.7)), g)
    assert mixture_likelihood(2, MixtureParams(0.0, 2.4, 1.0)) == 1.0
    expected = 0.5 * _mp_bin(0, 0, 1) + 0.5
    assert expected == pytest.approx(0.6914624612740131, rel=1e-15)
    assert mixture_likelihood(0, MixtureParams(0.5, 0.0, 1.0)) == pytest.approx(expected, rel=1e-14)


@given(weights, weights, finite_mu, sigmas, st.integers(-3, 3))
def test_mixture_monotone_in_w(w1, w2, mu, sigma, off):
    lo, hi = sorted((w1, w2))
    y = delta_cell(mu) + off
    p_lo = mixture_likelihood(y, MixtureParams(lo, mu, sigma))
    p_hi = mixture_likelihood(y, MixtureParams(hi, mu, sigma))
    if off == 0:
        assert p_hi <= p_lo + 1e-15
    else:
        assert p_hi >= p_lo - 1e-15


def test_mixture_invalid_weight():
    with pytest.raises(InvalidParameterError):
        MixtureParams(1.2, 0.0, 1.0)


def test_gmm_examples():
    one = GmmParams.from_components([(1.0, 0.4, 1.3)])
    ys = np.arange(-5, 6)
    np.testing.assert_allclose(gmm_likelihood(ys, one),
                               gaussian_likelihood(ys, GaussianParams(0.4, 1.3)), rtol=1e-15)
    twin = GmmParams.from_components([(0.3, 0.4, 1.3), (0.7, 0.4, 1.3)])
    np.testing.assert_allclose(gmm_likelihood(ys, twin), gmm_likelihood(ys, one), rtol=1e-14)
    two = GmmParams.from_components([(0.5, -2.0, 1.0), (0.5, 2.0, 1.0)])
    expected = 0.5 * (_mp_bin(0, -2, 1) + _mp_bin(0, 2, 1))
    assert gmm_likelihood(0, two) == pytest.approx(expected, rel=1e-14)


@pytest.mark.parametrize("comps", [
    [(0.5, 0.0, 1.0), (0.4, 1.0, 1.0)],
    [(1.2, 0.0, 1.0), (-0.2, 1.0, 1.0)],
    [(1.0, 0.0, 0.01)],
])
def test_gmm_invalid(comps):
    with pytest.raises(InvalidParameterError):
        GmmParams.from_components(comps)


def test_dispatch_and_unknown_model():
    assert likelihood(0, GaussianParams(0.0, 1.0)) == gaussian_likelihood(0, GaussianParams(0.0, 1.0))
    assert likelihood(1, DeltaParams(1.2)) == 1.0
    with pytest.raises(TypeError):
        likelihood(0, object())


@st.composite
def any_model(draw):
    kind = draw(st.sampled_from(["g", "d", "m", "k"]))
    mu, sigma = draw(finite_mu), draw(sigmas)
    if kind == "g":
        return GaussianParams(mu, sigma), sigma, mu
    if kind == "d":
        return DeltaParams(mu), 1.0, mu
    if kind == "m":
        return MixtureParams(draw(weights), mu, sigma), sigma, mu
    k = draw(st.integers(1, 4))
    raw = np.array([draw(st.floats(0.05, 1)) for _ in range(k)])
    w = raw / raw.sum()
    w[-1] = 1.0 - w[:-1].sum()
    mus = np.array([draw(finite_mu) for _ in range(k)])
    sg = np.array([draw(sigmas) for _ in range(k)])
    lo, hi = (mus - 40 * sg).min(), (mus + 40 * sg).max()
    return GmmParams(w, mus, sg), (hi - lo) / 80, (hi + lo) / 2


@given(any_model())
def test_normalization_over_wide_window(case):
    model, sigma, mu = case
    ys = np.arange(math.floor(mu - 40 * sigma) - 2, math.ceil(mu + 40 * sigma) + 3)
    total = float(np.sum(likelihood(ys, model)))
    assert abs(total - 1.0) <= 1e-6


# --- PMF tables -------------------------------------------------------------


def test_pmf_delta_floor_example():
    t = build_pmf(DeltaParams(0.0), (-8, 8), 16)
    expected = np.ones(17, dtype=np.int64)
    expected[8] = 65536 - 16
    np.testing.assert_array_equal(t.freqs, expected)
    assert t.support_min == -8 and t.support_max == 8


def test_pmf_single_symbol_support():
    t = build_pmf(GaussianParams(3.0, 2.0), (0, 0), 12)
    np.testing.assert_array_equal(t.freqs, [4096])


def test_pmf_gaussian_by_construction():
    # reference: tail-folded probabilities, floors, largest remainders by hand
    support = np.arange(-3, 4)
    mu, sigma, total = 0.4, 1.1, 1 << 10
    cdf = lambda v: float(mpmath.ncdf((mpmath.mpf(v) - mu) / sigma))
    edges = [-math.inf] + [s + 0.5 for s in support[:-1]] + [math.inf]
    probs = [(1.0 if b == math.inf else cdf(b)) - (0.0 if a == -math.inf else cdf(a))
             for a, b in zip(edges[:-1], edges[1:])]
    raw = [p * total for p in probs]
    freqs = [max(int(math.floor(r)), 1) for r in raw]
    short = total - sum(freqs)
    order = sorted(range(len(raw)), key=lambda i: (-(raw[i] - math.floor(raw[i])), i))
    for i in order[:short]:
        freqs[i] += 1
    t = build_pmf(GaussianParams(mu, sigma), (-3, 3), 10)
    assert t.freqs.tolist() == freqs


def test_apportion_surplus_taken_from_largest():
    freqs = apportion([[1e-9, 1e-9, 1.0 - 2e-9]], 8)
    assert freqs.tolist() == [[1, 1, 254]]


@pytest.mark.parametrize("support,precision", [((-128, 127), 8), ((0, 10), 7), ((0, 1), 25), ((3, 2), 16)])
def test_pmf_capacity_errors(support, precision):
    with pytest.raises(CapacityError):
        build_pmf(GaussianParams(0.0, 1.0), support, precision)


def test_pmf_table_validation():
    with pytest.raises(InvalidParameterError):
        PmfTable(0, [0, 256], 8)
    with pytest.raises(InvalidParameterError):
        PmfTable(0, [1, 2], 8)
    with pytest.raises(InvalidParameterError):
        PmfBatch([[128, 127]], 0, 8)


@given(any_model(), st.integers(8, 20), st.integers(-40, 40), st.integers(0, 200))
def test_pmf_exactness_and_purity(case, precision, lo, width):
    model = case[0]
    assume(width + 1 < (1 << precision))
    t1 = build_pmf(model, (lo, lo + width), precision)
    t2 = build_pmf(model, (lo, lo + width), precision)
    assert int(t1.freqs.sum()) == 1 << precision
    assert t1.freqs.min() >= 1
    assert t1 == t2
    cum = t1.cumulative()
    assert cum[0] == 0 and cum[-1] == 1 << precision


def test_batch_rows_match_single_builds(rng):
    mu = rng.uniform(-5, 5, 6)
    sigma = rng.uniform(0.2, 3, 6)
    w = rng.uniform(0, 1, 6)
    batch = build_pmf_batch(MixtureParams(w, mu, sigma), (-20, 20), 14, index=[5, 0, 0, 3])
    assert len(batch) == 4
    for k, row in enumerate([5, 0, 0, 3]):
        single = build_pmf(MixtureParams(w[row], mu[row], sigma[row]), (-20, 20), 14)
        assert batch[k] == single
    np.testing.assert_array_equal(batch.cumulative()[:, -1], 1 << 14)


def test_apportion_surplus_wider_than_top_entry():
    # 129 symbols at P=8: the >= 1 floor lifts ~100 entries, more than the peak holds
    t = build_pmf(MixtureParams(0.856, -28.28, 6.97), (-64, 64), 8)
    assert t.freqs.min() >= 1 and t.freqs.sum() == 256
    flat = np.full((1, 200), 1 / 200)
    f = apportion(flat, 8)
    assert f.min() == 1 and f.sum() == 256


@given(st.integers(2, 255), st.integers(0, 2**32 - 1))
def test_apportion_always_valid_at_low_precision(width, seed):
    p = np.random.default_rng(seed).dirichlet(np.full(width, 0.05))[None, :]
    f = apportion(p, 8)
    assert f.min() >= 1 and f.sum() == 256
