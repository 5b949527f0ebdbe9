import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate, optimize, special

from langevin_bounce import analytic as an
from langevin_bounce import skeleton as sk
from langevin_bounce._validation import DomainError, SimulationGuardError
from langevin_bounce.analytic import ModelParams
from langevin_bounce.rng import make_rng
from langevin_bounce.stats import (HillEstimator, ks_2sample, ks_test, median_of_means,
                                   median_of_means_stderr, tail_exponent_loglog)


@pytest.fixture(scope="module")
def params():
    return ModelParams.from_k(0.1)


@pytest.fixture(scope="module")
def steps(params):
    return sk.sample_step_batch(params, 400_000, seed=3)


@pytest.fixture(scope="module")
def tilted_steps(params):
    return sk.sample_step_batch(params, 400_000, seed=4, tilted=True)


def mean_se(x):
    return x.mean(), x.std(ddof=1) / math.sqrt(x.size)


# ---- speed ratio --------------------------------------------------------------------

def test_speed_ratio_law():
    v = sk.sample_v(make_rng(1), 100_000)
    assert np.all(v > 0)
    _, p = ks_test(v, an.v_marginal_cdf)
    assert p > 0.01


def test_speed_ratio_median():
    v = sk.sample_v(make_rng(2), 100_000)
    med = optimize.brentq(lambda x: an.v_marginal_cdf(x) - 0.5, 1e-3, 1e3, xtol=1e-12)
    # binomial SE of the empirical median: sqrt(1/4n) / density
    se = 0.5 / math.sqrt(v.size) / an.v_marginal_pdf(med)
    assert abs(np.median(v) - med) < 4 * se


def test_scalar_draw():
    assert isinstance(sk.sample_v(make_rng(0)), float)
    tau, rho = sk.sample_step(make_rng(0), ModelParams(0.05))
    assert tau > 0 and rho > 0


# ---- flight time given speed ----------------------------------------------------------

def _conditional_time_cdf(v):
    # CDF of T given V/c = v, built by integrating the joint density in log time
    r = np.linspace(math.log(1e-5), math.log(1e7), 20001)
    s = np.exp(r)
    dens = an.mckean_joint_pdf(s, v) * s
    cum = integrate.cumulative_trapezoid(dens, r, initial=0.0)
    cum /= an.v_marginal_pdf(v)
    return lambda x: np.interp(np.log(np.maximum(x, 1e-300)), r, cum, left=0.0, right=1.0)


@pytest.mark.parametrize("v", [0.05, 1.0, 8.0])
def test_time_given_speed_law(v):
    t = sk.sample_t_given_v(make_rng(7), np.full(100_000, v))
    _, p = ks_test(t, _conditional_time_cdf(v))
    assert p > 0.01


@given(st.floats(1e-8, 1e8))
def test_acceptance_probabilities_bounded(y):
    ry = math.sqrt(y)
    assert special.erf(ry) <= 1.0
    assert special.erf(ry) * math.sqrt(math.pi) / (2 * ry) <= 1.0 + 1e-15
    assert an.mckean_inner(y) <= math.sqrt(2 / 3)


def test_time_given_speed_rejects_bad_speed():
    with pytest.raises(DomainError):
        sk.sample_t_given_v(make_rng(0), np.array([1.0, -1.0]))


def test_rejection_guard(monkeypatch):
    monkeypatch.setattr(sk, "_MAX_ROUNDS", 0)
    with pytest.raises(SimulationGuardError):
        sk.sample_v(make_rng(0), 10)


# ---- one skeleton step ----------------------------------------------------------------

def test_martingale_moment_one_step(params, steps):
    g = steps[1] ** (2 * params.k)
    assert abs(median_of_means(g) - 1) < 3 * median_of_means_stderr(g)


def test_log_speed_drift(params, steps):
    m, se = mean_se(np.log(steps[1]))
    assert abs(m - (math.log(params.c) + math.pi / math.sqrt(3))) < 3 * se


def test_flight_time_tail(steps):
    fit = tail_exponent_loglog(steps[0][:100_000], random_state=0)
    assert abs(fit.exponent - 0.25) < 0.03


def test_martingale_over_three_bounces(params):
    # products of independent steps are the speed ratios V_n / u0
    rho = [sk.sample_step_batch(params, 300_000, seed=10 + j)[1] for j in range(3)]
    prod = np.ones_like(rho[0])
    for r in rho:
        prod *= r
        g = prod ** (2 * params.k)
        assert abs(median_of_means(g) - 1) < 3 * median_of_means_stderr(g)


# ---- tilted law -------------------------------------------------------------------------

def test_tilted_law(params):
    v = sk.sample_tilted_v(make_rng(5), params, 100_000)
    assert np.all(v > 0)
    _, p = ks_test(v, lambda x: an.v_marginal_cdf(x, params.k))
    assert p > 0.01


def test_tilt_inversion(params, steps, tilted_steps):
    # E_tilted[g(rho) rho^{-2k}] = E_killed[g(rho)] for g = 1{rho > c}
    g_t = (tilted_steps[1] > params.c) * tilted_steps[1] ** (-2 * params.k)
    g_k = (steps[1] > params.c).astype(float)
    (m1, s1), (m2, s2) = mean_se(g_t), mean_se(g_k)
    assert abs(m1 - m2) < 3 * math.hypot(s1, s2)


def test_tilted_tail_heavier(params, steps, tilted_steps):
    assert np.quantile(tilted_steps[1], 0.999) > np.quantile(steps[1], 0.999)


def test_tilted_drift_matches_mu_up(params, tilted_steps):
    m, se = mean_se(np.log(tilted_steps[1][:100_000]))
    assert abs(m - params.mu_up) < 3 * se


def test_tilted_flight_time_tail(params, tilted_steps):
    fit = tail_exponent_loglog(tilted_steps[0][:100_000], random_state=0)
    assert abs(fit.exponent - (0.25 - params.k)) < 0.03


def test_c1_denominator_monte_carlo(params, steps):
    g = params.k * steps[1] ** (2 * params.k) * np.log(steps[1] ** 2)
    est, se = median_of_means(g), median_of_means_stderr(g)
    assert abs(est - an.c1_denominator(params)) < 3 * se


# ---- chains -------------------------------------------------------------------------------

def test_chain_invariants(params):
    ch = sk.simulate_chain(make_rng(9), params, u0=2.0)
    assert np.all(ch.speeds > 0)
    # late flight times drop below the spacing of doubles near zeta
    assert np.all(np.diff(ch.log_times) >= 0)
    assert np.all(np.diff(ch.log_times[:10]) > 0)
    assert ch.zeta >= ch.times[-1]
    assert ch.speeds[0] == pytest.approx(2.0)
    assert ch.truncated_weight < 1e-12 or ch.capped
    assert ch.log_speed_increments.size == ch.n_bounces


def test_chain_determinism(params):
    a = sk.simulate_chain(make_rng(11), params)
    b = sk.simulate_chain(make_rng(11), params)
    assert np.array_equal(a.log_times, b.log_times) and np.array_equal(a.log_speeds, b.log_speeds)


def test_degenerate_truncation_is_one_bounce(params):
    cfg = sk.ChainConfig(truncation_epsilon=1.0)
    u0 = 1.7
    ch = sk.simulate_chain(make_rng(12), params, u0, cfg)
    assert ch.n_bounces == 1
    assert ch.zeta == ch.times[1]
    # the batch path applies the same rule: zeta is the first flight time
    batch = sk.simulate_chain_batch(params, 1000, seed=12, u0=u0, cfg=cfg)
    assert np.array_equal(batch.zeta, batch.t1) and np.all(batch.n_bounces == 1)


def test_config_validation():
    for bad in (0.0, 1.5, -1e-3):
        with pytest.raises(DomainError):
            sk.ChainConfig(truncation_epsilon=bad)
    with pytest.raises(DomainError):
        sk.ChainConfig(max_bounces=0)


def test_bounce_cap(params):
    ch = sk.simulate_chain(make_rng(1), params, cfg=sk.ChainConfig(max_bounces=3))
    assert ch.n_bounces == 3 and ch.capped


def test_batch_matches_thread_count(params):
    a = sk.simulate_chain_batch(params, 40_000, seed=21, threads=1)
    b = sk.simulate_chain_batch(params, 40_000, seed=21, threads=2)
    for x, y in zip(a, b):
        assert np.array_equal(x, y)


def test_absorption_time_scaling(params):
    a = sk.simulate_chain_batch(params, 10_000, seed=31, u0=1.0)
    b = sk.simulate_chain_batch(params, 10_000, seed=32, u0=3.0)
    _, p = ks_2sample(a.zeta, b.zeta / 9.0)
    assert p > 0.01


@pytest.mark.parametrize("c", [0.05, 0.09, 0.13])
def test_absorption_tail_exponent(c):
    p = ModelParams(c)
    batch = sk.simulate_chain_batch(p, 50_000, seed=41)
    fit = tail_exponent_loglog(batch.zeta, random_state=0)
    assert abs(fit.exponent - p.k) < 0.03


def test_c1_numerator_positive(params):
    c1, se, batch = sk.estimate_C1(params, 20_000, seed=2)
    num = sk.c1_numerator(batch.zeta, batch.t1, params.k)
    assert np.all(num > 0)
    naive = batch.zeta**params.k - (batch.zeta - batch.t1) ** params.k
    big = batch.t1 / batch.zeta > 1e-3
    assert np.allclose(num[big], naive[big], rtol=1e-9)
    assert c1 > 0 and se > 0


def test_tilted_chain_diverges(params):
    ok = 0
    cfg = sk.ChainConfig(max_bounces=10_000)
    for i in range(100):
        ch = sk.simulate_tilted_chain(make_rng(50, i), params, 1.0, cfg)
        assert math.isinf(ch.zeta)
        ok += ch.log_speeds[5_000:].min() > 0.0
    assert ok >= 99


def test_tilted_chain_horizon(params):
    ch = sk.simulate_tilted_chain(make_rng(3), params, 1.0, sk.ChainConfig(max_bounces=10_000), horizon=1e6)
    assert ch.times[-1] >= 1e6 and ch.times[-2] < 1e6 and not ch.capped


def test_tilted_increment_drift(params):
    ch = sk.simulate_tilted_chain(make_rng(8), params, 1.0, sk.ChainConfig(max_bounces=100_000))
    m, se = mean_se(ch.log_speed_increments)
    assert abs(m - params.mu_up) < 3 * se


# ---- stationary start -----------------------------------------------------------------------

@pytest.fixture(scope="module")
def overshoot(params):
    from langevin_bounce.ladder import StationaryOvershoot
    return StationaryOvershoot(params.c, table_size=20_000, random_state=0).fit()


def _starts(params, overshoot, v_gate, seed, n=2000):
    cfg = sk.ChainConfig(max_bounces=3)
    return [sk.sample_stationary_start(make_rng(seed, i), params, v_gate, cfg, overshoot) for i in range(n)]


def test_stationary_start_wiring(params, overshoot):
    chains = _starts(params, overshoot, 1e-3, seed=60)
    o = np.array([ch.log_speeds[0] - math.log(1e-3) for ch in chains])
    assert np.all(o >= 0)
    _, p = ks_test(o, overshoot.cdf)
    assert p > 0.01


def test_stationary_start_gate_invariance(params, overshoot):
    a = _starts(params, overshoot, 1e-3, seed=61)
    b = _starts(params, overshoot, 5e-4, seed=62)
    # after rescaling by the gate, later speeds have the same law
    ra = np.array([ch.log_speeds[2] - math.log(1e-3) for ch in a])
    rb = np.array([ch.log_speeds[2] - math.log(5e-4) for ch in b])
    _, p = ks_2sample(ra, rb)
    assert p > 0.01


def test_hill_agrees_on_absorption_times(params):
    batch = sk.simulate_chain_batch(params, 50_000, seed=70)
    h = HillEstimator(top_fraction=0.01).fit(batch.zeta)
    assert abs(h.alpha_ - params.k) < 3 * h.stderr_ + 0.01
