import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays
from scipy import special
from scipy import stats as sps
from sklearn.base import clone

from langevin_bounce import stats as ls
from langevin_bounce._validation import DomainError


def pareto(rng, alpha, n, scale=1.0):
    # inverse-CDF draw: P(X > t) = (t / scale)^-alpha for t >= scale
    return scale * rng.random(n) ** (-1.0 / alpha)


# ---- Kolmogorov-Smirnov ------------------------------------------------------------------

@given(st.floats(0.2, 3.0))
def test_kolmogorov_sf_matches_scipy(lam):
    assert ls.kolmogorov_sf(lam) == pytest.approx(special.kolmogorov(lam), abs=1e-12)


def test_kolmogorov_sf_small_argument():
    assert ls.kolmogorov_sf(0.0) == 1.0
    assert ls.kolmogorov_sf(0.18) == pytest.approx(special.kolmogorov(0.18), abs=1e-9)


def test_ks_statistic_matches_scipy():
    x = np.random.default_rng(0).normal(size=3000)
    d, p = ls.ks_test(x, sps.norm.cdf)
    ref = sps.kstest(x, "norm")
    assert d == pytest.approx(ref.statistic, abs=1e-14)
    assert p == pytest.approx(ref.pvalue, abs=0.01)


def test_ks_2sample_statistic_matches_scipy():
    rng = np.random.default_rng(1)
    a, b = rng.normal(size=2000), rng.normal(0.05, size=1500)
    d, p = ls.ks_2sample(a, b)
    ref = sps.ks_2samp(a, b)
    assert d == pytest.approx(ref.statistic, abs=1e-14)
    assert p == pytest.approx(ref.pvalue, abs=0.02)


def test_ks_uniform_calibration():
    passed = [ls.ks_test(np.random.default_rng(s).random(10_000), lambda x: x)[1] > 0.01
              for s in range(200)]
    assert np.mean(passed) >= 0.97


def test_ks_null_pvalues_roughly_uniform():
    pv = np.array([ls.ks_test(np.random.default_rng(1000 + s).random(500), lambda x: x)[1]
                   for s in range(500)])
    assert 0.03 <= np.mean(pv < 0.05) <= 0.08


def test_ks_quantile_samples_fit_perfectly():
    n = 1000
    x = np.arange(1, n + 1) / (n + 1)
    d, _ = ls.ks_test(x, lambda t: t)
    assert d <= 1 / (n + 1) + 1e-12


def test_ks_constant_samples_rejected():
    _, p = ls.ks_test(np.full(1000, 0.5), lambda t: np.clip(t, 0, 1))
    assert p < 1e-10


def test_ks_needs_samples():
    with pytest.raises(DomainError):
        ls.ks_test([0.1, 0.2], lambda t: t)


# ---- log-log tail fit ------------------------------------------------------------------

def test_loglog_pareto_exponent():
    x = pareto(np.random.default_rng(2), 0.25, 100_000)
    fit = ls.tail_exponent_loglog(x)
    assert abs(fit.exponent - 0.25) < 0.02
    assert fit.stderr > 0 and fit.fit_range == (0.1, 0.001)
    assert not fit.drift_flag


def test_loglog_flags_exponential_tail():
    x = np.random.default_rng(3).exponential(size=100_000)
    fit = ls.tail_exponent_loglog(x)
    assert fit.drift_flag
    near = ls.tail_exponent_loglog(x, 0.1, 0.01).exponent
    far = ls.tail_exponent_loglog(x, 0.01, 0.001).exponent
    assert far > near


@pytest.mark.parametrize("a", [0.01, 3.0, 1e4])
def test_loglog_scaling(a):
    x = pareto(np.random.default_rng(4), 0.4, 50_000)
    f1 = ls.tail_exponent_loglog(x, n_bootstrap=20)
    f2 = ls.tail_exponent_loglog(a * x, n_bootstrap=20)
    assert f2.exponent == pytest.approx(f1.exponent, rel=1e-9)
    assert f2.prefactor == pytest.approx(f1.prefactor * a**f1.exponent, rel=1e-8)


def test_loglog_prefactor_on_pareto():
    x = pareto(np.random.default_rng(5), 0.25, 100_000, scale=2.0)
    fit = ls.tail_exponent_loglog(x)
    assert fit.prefactor == pytest.approx(2.0**0.25, rel=0.05)
    assert ls.tail_prefactor(x, 0.25) == pytest.approx(2.0**0.25, rel=0.02)
    assert fit.survival(16.0) == pytest.approx(fit.prefactor * 16.0**-fit.exponent)


@pytest.mark.parametrize("alpha", [0.1, 0.25, 0.5])
def test_loglog_and_hill_agree(alpha):
    x = pareto(np.random.default_rng(6), alpha, 100_000)
    fit = ls.tail_exponent_loglog(x)
    a, se = ls.hill_estimator(x, 0.01)
    assert abs(fit.exponent - a) < 2 * math.hypot(fit.stderr, se)


def test_tail_estimator_api():
    est = ls.TailExponentEstimator(n_bootstrap=10, random_state=0)
    x = pareto(np.random.default_rng(7), 0.3, 5000)
    twin = clone(est)
    assert est.fit(x).exponent_ == twin.fit(x).exponent_
    assert est.stderr_ == twin.stderr_
    with pytest.raises(DomainError):
        ls.TailExponentEstimator(q_lo=0.001, q_hi=0.1).fit(x)
    with pytest.raises(DomainError):
        est.fit(x[:100])


# ---- Hill ------------------------------------------------------------------------------

def test_hill_pareto():
    x = pareto(np.random.default_rng(8), 0.25, 100_000)
    a, se = ls.hill_estimator(x, 0.01)
    assert abs(a - 0.25) < 3 * se


@given(st.floats(1e-3, 1e3))
@settings(max_examples=20)
def test_hill_scale_free(a):
    x = pareto(np.random.default_rng(9), 0.5, 10_000)
    assert ls.hill_estimator(a * x)[0] == pytest.approx(ls.hill_estimator(x)[0], rel=1e-9)


def test_hill_too_few_points():
    x = pareto(np.random.default_rng(10), 0.5, 10_000)
    with pytest.raises(DomainError):
        ls.hill_estimator(x, 1 / x.size)
    with pytest.raises(DomainError):
        ls.hill_estimator(x, 0.5)


# ---- median of means ---------------------------------------------------------------------

def test_mom_constant():
    assert ls.median_of_means(np.full(1000, 3.25)) == 3.25


def test_mom_single_block_is_mean():
    x = np.random.default_rng(11).normal(size=777)
    assert ls.median_of_means(x, 1) == pytest.approx(x.mean(), rel=1e-15)


def test_mom_normal_calibration():
    x = np.random.default_rng(12).normal(size=1_000_000)
    assert abs(ls.median_of_means(x, 32)) < 0.01
    se = ls.median_of_means_stderr(x, 32)
    assert se == pytest.approx(math.sqrt(math.pi / 2) / 1000, rel=0.3)


@given(arrays(float, st.integers(1, 300), elements=st.floats(-1e6, 1e6)), st.integers(1, 64))
def test_mom_within_range(x, blocks):
    m = ls.median_of_means(x, blocks)
    assert x.min() - 1e-6 <= m <= x.max() + 1e-6


def test_mom_rejects_bad_blocks():
    with pytest.raises(DomainError):
        ls.median_of_means([1.0, 2.0], 0)
