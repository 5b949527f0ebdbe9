"""Estimators and goodness-of-fit tests used by the verification paths.

The tail estimators follow the scikit-learn estimator protocol
(``fit`` / fitted attributes with a trailing underscore / ``get_params``) so
they can be cloned, grid-searched over their window settings and dropped into
pipelines; the plain functions below are thin wrappers around them.
"""

import math
from dataclasses import dataclass

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from ._validation import DomainError, check_samples
from .rng import check_random_state


def kolmogorov_sf(lam):
    """Asymptotic survival function of the Kolmogorov distribution.

    ``Q(lam) = 2 sum_{j>=1} (-1)^{j-1} exp(-2 j^2 lam^2)``; the alternating
    series is summed until the terms are negligible.
    """
    lam = float(lam)
    if lam < 0.18:
        # series is numerically 1 here and converges too slowly to sum
        return 1.0
    total = 0.0
    sign = 1.0
    for j in range(1, 101):
        term = math.exp(-2.0 * j * j * lam * lam)
        total += sign * term
        if term < 1e-16 * max(total, 1e-300):
            break
        sign = -sign
    return min(max(2.0 * total, 0.0), 1.0)


def ks_test(samples, cdf):
    """One-sample Kolmogorov-Smirnov test against ``cdf``.

    Returns ``(statistic, p_value)``; the p-value uses the asymptotic series
    with Stephens' finite-sample correction of the argument.
    """
    x = np.sort(check_samples(samples, min_size=20))
    n = x.size
    f = np.asarray(cdf(x), dtype=float)
    if f.shape != x.shape:
        f = np.array([float(cdf(xi)) for xi in x])
    d_plus = np.max(np.arange(1, n + 1) / n - f)
    d_minus = np.max(f - np.arange(n) / n)
    d = float(max(d_plus, d_minus))
    sqrt_n = math.sqrt(n)
    return d, kolmogorov_sf((sqrt_n + 0.12 + 0.11 / sqrt_n) * d)


def ks_2sample(a, b):
    """Two-sample Kolmogorov-Smirnov test, ``(statistic, p_value)``."""
    a = np.sort(check_samples(a, "a", min_size=20))
    b = np.sort(check_samples(b, "b", min_size=20))
    pooled = np.concatenate([a, b])
    fa = np.searchsorted(a, pooled, side="right") / a.size
    fb = np.searchsorted(b, pooled, side="right") / b.size
    d = float(np.max(np.abs(fa - fb)))
    ne = math.sqrt(a.size * b.size / (a.size + b.size))
    return d, kolmogorov_sf((ne + 0.12 + 0.11 / ne) * d)


def median_of_means(samples, n_blocks=32):
    """Median of the means of ``n_blocks`` contiguous blocks."""
    x = check_samples(samples)
    if n_blocks < 1:
        raise DomainError(f"n_blocks must be >= 1, got {n_blocks}")
    if n_blocks == 1:
        return float(np.mean(x))
    means = [blk.mean() for blk in np.array_split(x, min(n_blocks, x.size))]
    return float(np.median(means))


def median_of_means_stderr(samples, n_blocks=32):
    """Standard error of ``median_of_means`` from the spread of the block means.

    Uses the large-sample efficiency of the median of Gaussian block means,
    ``sqrt(pi / 2) * sd(block means) / sqrt(n_blocks)``.
    """
    x = check_samples(samples, min_size=2 * n_blocks)
    means = np.array([blk.mean() for blk in np.array_split(x, n_blocks)])
    return float(math.sqrt(math.pi / 2.0) * means.std(ddof=1) / math.sqrt(n_blocks))


@dataclass(frozen=True)
class TailFit:
    """Power-law fit ``P(X > t) ~ prefactor * t^(-exponent)`` over a survival window."""

    exponent: float
    prefactor: float
    fit_range: tuple
    stderr: float
    n_points: int
    drift_flag: bool = False

    def survival(self, t):
        return self.prefactor * np.asarray(t, dtype=float) ** (-self.exponent)


def _survival_window(x_sorted, q_lo, q_hi):
    n = x_sorted.size
    surv = (n - np.arange(n)) / n
    mask = (surv <= q_lo) & (surv >= q_hi)
    return x_sorted[mask], surv[mask]


def _loglog_slope(xs, surv):
    lx = np.log(xs)
    ls = np.log(surv)
    lx_mean = lx.mean()
    slope = np.dot(lx - lx_mean, ls - ls.mean()) / np.dot(lx - lx_mean, lx - lx_mean)
    intercept = ls.mean() - slope * lx_mean
    return slope, intercept


class TailExponentEstimator(BaseEstimator):
    """Least-squares slope of the log-log empirical survival curve.

    Parameters
    ----------
    q_lo, q_hi : float
        Survival levels bounding the fit window, ``1 > q_lo > q_hi > 0``.
        The default window ``(0.1, 0.001)`` skips the bulk and the far tail.
    n_bootstrap : int
        Case-resampling replicates for the standard error; residuals along a
        survival curve are strongly dependent, so no analytic SE is offered.
    random_state : None, int or numpy Generator
        Drives the bootstrap only.

    Attributes
    ----------
    exponent_, prefactor_, stderr_ : float
    fit_ : TailFit
    """

    def __init__(self, q_lo=0.1, q_hi=0.001, n_bootstrap=200, random_state=None):
        self.q_lo = q_lo
        self.q_hi = q_hi
        self.n_bootstrap = n_bootstrap
        self.random_state = random_state

    def fit(self, X, y=None):
        if not 0.0 < self.q_hi < self.q_lo < 1.0:
            raise DomainError(f"need 0 < q_hi < q_lo < 1, got q_lo={self.q_lo}, q_hi={self.q_hi}")
        x = np.sort(check_samples(X, "X", min_size=1000, positive=True))
        xs, surv = _survival_window(x, self.q_lo, self.q_hi)
        if xs.size < 3 or xs[0] == xs[-1]:
            raise DomainError("survival window holds fewer than 3 distinct points")
        slope, intercept = _loglog_slope(xs, surv)

        rng = check_random_state(self.random_state)
        n = x.size
        boot = []
        for _ in range(self.n_bootstrap):
            # a resample of a sorted array is itself sorted once repeated by its counts
            counts = rng.multinomial(n, np.full(n, 1.0 / n))
            xb, sb = _survival_window(np.repeat(x, counts), self.q_lo, self.q_hi)
            if xb.size >= 3 and xb[0] != xb[-1]:
                boot.append(_loglog_slope(xb, sb)[0])
        stderr = float(np.std(boot, ddof=1)) if len(boot) > 1 else float("nan")

        self.exponent_ = float(-slope)
        self.prefactor_ = float(math.exp(intercept))
        self.stderr_ = stderr
        self.fit_ = TailFit(
            exponent=self.exponent_,
            prefactor=self.prefactor_,
            fit_range=(self.q_lo, self.q_hi),
            stderr=stderr,
            n_points=int(xs.size),
            drift_flag=self._curvature_flag(x, stderr),
        )
        return self

    def _curvature_flag(self, x, stderr):
        # a power tail gives the same slope on both halves of the window
        q_mid = math.sqrt(self.q_lo * self.q_hi)
        halves = []
        for lo, hi in ((self.q_lo, q_mid), (q_mid, self.q_hi)):
            xs, surv = _survival_window(x, lo, hi)
            if xs.size < 3 or xs[0] == xs[-1]:
                return False
            halves.append(-_loglog_slope(xs, surv)[0])
        near, far = halves
        tol = 0.25 * abs(near) + 3.0 * (stderr if np.isfinite(stderr) else 0.0)
        return bool(far - near > tol)

    def survival(self, t):
        check_is_fitted(self, "fit_")
        return self.fit_.survival(t)


def tail_exponent_loglog(samples, q_lo=0.1, q_hi=0.001, n_bootstrap=200, random_state=0):
    """Fit a power-law tail on the survival window ``[q_hi, q_lo]``; returns a ``TailFit``."""
    return TailExponentEstimator(q_lo, q_hi, n_bootstrap, random_state).fit(samples).fit_


def tail_prefactor(samples, exponent, q_lo=0.1, q_hi=0.001):
    """Plateau of ``t^exponent * P(X > t)`` over the survival window, exponent held fixed."""
    x = np.sort(check_samples(samples, min_size=100, positive=True))
    xs, surv = _survival_window(x, q_lo, q_hi)
    if xs.size == 0:
        raise DomainError("survival window is empty")
    return float(np.mean(surv * xs**exponent))


class HillEstimator(BaseEstimator):
    """Hill estimate of the tail index on the top order statistics.

    Attributes
    ----------
    alpha_ : float
    stderr_ : float
        ``alpha_ / sqrt(n_top)``.
    n_top_ : int
    """

    def __init__(self, top_fraction=0.01):
        self.top_fraction = top_fraction

    def fit(self, X, y=None):
        if not 0.0 < self.top_fraction <= 0.1:
            raise DomainError(f"top_fraction must lie in (0, 0.1], got {self.top_fraction}")
        x = np.sort(check_samples(X, "X", positive=True))[::-1]
        n_top = int(self.top_fraction * x.size)
        if n_top < 10:
            raise DomainError(f"only {n_top} tail points; Hill needs at least 10")
        logs = np.log(x[:n_top]) - math.log(x[n_top])
        self.alpha_ = float(1.0 / logs.mean())
        self.stderr_ = float(self.alpha_ / math.sqrt(n_top))
        self.n_top_ = n_top
        return self


def hill_estimator(samples, top_fraction=0.01):
    """Returns ``(alpha, stderr)``."""
    est = HillEstimator(top_fraction).fit(samples)
    return est.alpha_, est.stderr_
