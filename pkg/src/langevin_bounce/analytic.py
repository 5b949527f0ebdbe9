"""Closed forms and quadratures for the free and reflected Kolmogorov process.

Conventions: ``c`` is the elasticity (outgoing speed = ``c`` x incoming speed),
``v`` usually denotes the *incoming* speed at the first bounce after a bounce
at unit speed, i.e. the ratio ``V_1 / c`` under the killed law started at
``(0, 1)``.  ``k = k(c)`` is the tail exponent, the root of
``E[V_1^{2k}] = 1``.
"""

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import integrate, optimize, special

from ._validation import DomainError, QuadratureError, check_positive, check_state

SQRT3 = math.sqrt(3.0)
_PI_OVER_SQRT3 = math.pi / SQRT3
_INNER_LIMIT = math.sqrt(2.0 / 3.0)
_K_BRACKET = (1e-12, 0.25 - 1e-12)


def critical_elasticity():
    """``exp(-pi / sqrt(3))``: below it the bounces accumulate in finite time."""
    return math.exp(-_PI_OVER_SQRT3)


C_CR = critical_elasticity()


def check_elasticity(c):
    c = check_positive(c, "c")
    if not c < C_CR:
        raise DomainError(
            f"elasticity c={c!r} outside the sub-critical interval (0, {C_CR:.10f})"
        )
    return c


def walk_drift(c):
    """Mean of ``ln(V_{n+1} / V_n)`` under the killed law (negative for c < c_cr)."""
    return math.log(c) + _PI_OVER_SQRT3


def v_moment(c, x):
    """``E[V_1^x]`` after a bounce at unit speed, for ``-5/2 < x < 1/2``."""
    c = check_positive(c, "c")
    x = float(x)
    if x >= 0.5:
        raise DomainError(f"moment of order {x} diverges (need x < 1/2)")
    if x <= -2.5:
        raise DomainError(f"moment of order {x} diverges (need x > -5/2)")
    return c**x / (2.0 * math.cos((x + 1.0) * math.pi / 3.0))


def _log_moment_over_k(k, log_c):
    # ln E[V^{2k}] / k, which is negative before the root and positive after it
    return 2.0 * log_c - math.log(2.0 * math.cos((2.0 * k + 1.0) * math.pi / 3.0)) / k


def c_of_k(k):
    """Explicit inverse of ``k_of_c``."""
    k = float(k)
    if not 0.0 < k < 0.25:
        raise DomainError(f"k must lie in (0, 1/4), got {k}")
    return (2.0 * math.cos((2.0 * k + 1.0) * math.pi / 3.0)) ** (1.0 / (2.0 * k))


def k_of_c(c):
    """Tail exponent ``k(c)``, the unique root in (0, 1/4) of ``E[V_1^{2k}] = 1``."""
    c = check_elasticity(c)
    log_c = math.log(c)
    lo, hi = _K_BRACKET
    f_lo = _log_moment_over_k(lo, log_c)
    if f_lo >= 0:
        # c is within rounding of c_cr; the root is below the bracket
        return lo
    return optimize.brentq(_log_moment_over_k, lo, hi, args=(log_c,), xtol=1e-16, rtol=4 * np.finfo(float).eps, maxiter=200)


def kc_curve(c_min, c_max, n_points):
    """``(c, k(c))`` on an evenly spaced grid of elasticities."""
    check_elasticity(c_min)
    check_elasticity(c_max)
    if not c_min < c_max:
        raise DomainError(f"need c_min < c_max, got {c_min} >= {c_max}")
    if n_points < 2:
        raise DomainError(f"need at least 2 points, got {n_points}")
    cs = np.linspace(c_min, c_max, int(n_points))
    return [(float(c), k_of_c(float(c))) for c in cs]


def tilted_drift(c, k):
    """Mean log-speed increment under the 2k-tilted law: ``d/dx ln E[V^x]`` at ``x = 2k``."""
    return math.log(c) + (math.pi / 3.0) * math.tan((2.0 * k + 1.0) * math.pi / 3.0)


@dataclass(frozen=True)
class ModelParams:
    """Elasticity and the constants derived from it.

    Build with ``ModelParams(c)``; every other field is recomputed from ``c``.
    """

    c: float
    k: float = field(init=False)
    drift: float = field(init=False)
    mu_up: float = field(init=False)
    theta: float = field(init=False)

    def __post_init__(self):
        c = check_elasticity(self.c)
        k = k_of_c(c)
        object.__setattr__(self, "c", c)
        object.__setattr__(self, "k", k)
        object.__setattr__(self, "drift", walk_drift(c))
        object.__setattr__(self, "mu_up", tilted_drift(c, k))
        object.__setattr__(self, "theta", math.exp(2.0 * k))

    @classmethod
    def from_k(cls, k):
        return cls(c_of_k(k))

    @property
    def c_cr(self):
        return C_CR

    def as_dict(self):
        return {"c": self.c, "k": self.k, "drift": self.drift, "mu_up": self.mu_up,
                "theta": self.theta, "c_cr": C_CR}


@dataclass(frozen=True)
class StateKU:
    """Position/velocity pair; on the wall only outgoing velocities are allowed."""

    x: float
    u: float

    def __post_init__(self):
        if (self.x, self.u) != (0.0, 0.0):
            x, u = check_state(self.x, self.u)
            object.__setattr__(self, "x", x)
            object.__setattr__(self, "u", u)


def mu_up(params):
    """Drift of the log-speed walk under the conditioned (tilted) law."""
    return tilted_drift(params.c, params.k)


def v_marginal_pdf(v):
    """Density ``(3 / 2 pi) v^{3/2} / (1 + v^3)`` of ``V_1 / c``."""
    v = np.asarray(v, dtype=float)
    vp = np.where(v > 0, v, 0.0)
    out = 1.5 / np.pi * vp**1.5 / (1.0 + vp**3)
    return out if out.ndim else float(out)


def v_marginal_cdf(v, k=0.0):
    """CDF of ``V_1 / c``, optionally under the ``(c v)^{2k}`` tilt.

    With ``t = v^3 / (1 + v^3)`` the law becomes a Beta(5/6 + 2k/3, 1/6 - 2k/3)
    variable, so the CDF is a regularised incomplete beta function.
    """
    v = np.asarray(v, dtype=float)
    vp = np.where(v > 0, v, 0.0)
    with np.errstate(divide="ignore", over="ignore"):
        v3 = vp**3
        t = np.where(vp > 0, v3 / (1.0 + v3), 0.0)
        # 1 - t computed directly: t rounds to 1 long before the tail mass is negligible
        tc = np.where(vp > 0, 1.0 / (1.0 + v3), 1.0)
    a = 5.0 / 6.0 + 2.0 * k / 3.0
    b = 1.0 / 6.0 - 2.0 * k / 3.0
    out = np.where(t <= 0.5, special.betainc(a, b, t), 1.0 - special.betainc(b, a, tc))
    return out if out.ndim else float(out)


def tilted_v_pdf(v, params):
    """Density of ``V_1 / c`` under the conditioned law: ``(c v)^{2k}`` times the killed one."""
    v = np.asarray(v, dtype=float)
    out = (params.c * np.where(v > 0, v, 0.0)) ** (2.0 * params.k) * v_marginal_pdf(v)
    return out if np.ndim(out) else float(out)


def mckean_inner(z):
    """``int_0^z exp(-3 theta / 2) d theta / sqrt(pi theta)``.

    Equal to ``sqrt(2/3) P(1/2, 3z/2)`` with ``P`` the regularised lower
    incomplete gamma function, which avoids the endpoint singularity.
    """
    z = np.asarray(z, dtype=float)
    out = _INNER_LIMIT * special.gammainc(0.5, 1.5 * np.where(z > 0, z, 0.0))
    return out if out.ndim else float(out)


def mckean_joint_pdf(s, v):
    """Joint density of ``(T_1, V_1 / c)`` after a bounce at unit speed."""
    s = np.asarray(s, dtype=float)
    v = np.asarray(v, dtype=float)
    ok = (s > 0) & (v > 0)
    ss = np.where(ok, s, 1.0)
    vv = np.where(ok, v, 1.0)
    dens = (3.0 * vv / (math.pi * math.sqrt(2.0) * ss**2)
            * np.exp(-2.0 * (vv * vv - vv + 1.0) / ss) * mckean_inner(4.0 * vv / ss))
    out = np.where(ok, dens, 0.0)
    return out if out.ndim else float(out)


def kolmogorov_pt(t, x, u, y, v):
    """Transition density of the free Kolmogorov process from ``(x, u)`` to ``(y, v)``."""
    t = check_positive(t, "t")
    y = np.asarray(y, dtype=float)
    v = np.asarray(v, dtype=float)
    d = y - x - t * u
    e = v - u
    q = -6.0 / t**3 * d * d + 6.0 / t**2 * d * e - 2.0 / t * e * e
    out = SQRT3 / (math.pi * t * t) * np.exp(q)
    return out if out.ndim else float(out)


def _phi_integrand(s, dx, u, e):
    # integrand of Phi after t = 1/s; the quadratic form 3A^2 - 3AE + E^2 is >= 0
    a = s * dx - u
    return math.exp(-2.0 * s * (3.0 * a * a - 3.0 * a * e + e * e))


def occupation_phi(x, u, y, v, epsrel=1e-10):
    """Total occupation density ``int_0^inf p_t(x, u; y, v) dt``.

    The substitution ``t = 1/s`` maps the sharply peaked small-``t`` region to
    an exponentially (``y != x``: cubically-exponentially) decaying tail in
    ``s`` and the slowly decaying large-``t`` region to a bounded integrand
    near ``s = 0``.  For ``y == x`` the integral is elementary.  The ``s``
    range is split at the scale where the exponent reaches order one.
    """
    x, u, y, v = float(x), float(u), float(y), float(v)
    dx = y - x
    e = v - u
    lin = 2.0 * (3.0 * u * u + 3.0 * u * e + e * e)
    if dx == 0.0 and lin == 0.0:
        raise DomainError(f"occupation density diverges at coincident points ({x}, 0)")
    if dx == 0.0:
        return SQRT3 / math.pi / lin
    cub = 6.0 * dx * dx
    scale = min(1.0 / lin if lin > 0 else math.inf, cub ** (-1.0 / 3.0))
    total = 0.0
    total_err = 0.0
    epsabs = 0.0
    for lo, hi in ((0.0, scale), (scale, 10.0 * scale), (10.0 * scale, math.inf)):
        val, err = integrate.quad(_phi_integrand, lo, hi, args=(dx, u, e), epsabs=epsabs,
                                  epsrel=epsrel, limit=200)
        if not np.isfinite(val):
            raise QuadratureError(f"Phi quadrature failed on [{lo}, {hi}]: value {val}")
        total += val
        total_err += err
        # later pieces only need to be accurate relative to the bulk
        epsabs = 1e-2 * epsrel * total
    if total_err > 1e-8 * total:
        raise QuadratureError(f"Phi quadrature error {total_err} too large for value {total}")
    return SQRT3 / math.pi * total


# Log-spaced trapezoid nodes.  After s = scale * exp(r) the Phi integrand is
# analytic in r, decays like exp(r) on the left and super-exponentially on the
# right, so the trapezoid rule converges geometrically in the node spacing.
_R_STEP = 0.15
_R_NODES = np.arange(-36.0, 9.0 + 1e-9, _R_STEP)
_M_NODES = np.arange(-32.0, 32.0 + 1e-9, _R_STEP)


def _phi_to_wall(x, u, w):
    """Vectorised ``Phi(x, u; 0, w)`` for an array of target velocities ``w``."""
    w = np.asarray(w, dtype=float)
    e = w - u
    lin = 2.0 * (3.0 * u * u + 3.0 * u * e + e * e)
    if x == 0.0:
        return SQRT3 / math.pi / lin
    cub = 6.0 * x * x
    with np.errstate(divide="ignore"):
        scale = np.minimum(1.0 / lin, cub ** (-1.0 / 3.0))
    sv = scale[..., None] * np.exp(_R_NODES)
    a = -(x * sv + u)
    ee = e[..., None]
    expo = -2.0 * sv * (3.0 * a * a - 3.0 * a * ee + ee * ee)
    return SQRT3 / math.pi * _R_STEP * np.sum(np.exp(expo) * sv, axis=-1)


def _gorkov_vec(x, u, v):
    """Gor'kov density on an array of positive speeds, no validation."""
    v = np.asarray(v, dtype=float)
    direct = _phi_to_wall(x, u, -v)
    mu = np.exp(_M_NODES)
    weight = 1.5 / math.pi * mu**2.5 / (mu**3 + 1.0)
    out = np.empty(v.shape)
    for i, vi in enumerate(v.ravel()):
        out.flat[i] = vi * (direct.flat[i] - _R_STEP * np.dot(weight, _phi_to_wall(x, u, mu * vi)))
    return out


def gorkov_hit_pdf(x, u, v):
    """Density at ``v`` of the incoming speed ``V_1 / c`` under the killed law from ``(x, u)``.

    ``(0, u)`` with ``u < 0`` is excluded (the admissible set only holds
    outgoing velocities on the wall).  The inner occupation densities and the
    outer integral over the bounce-law weight both use log-spaced trapezoid
    rules; ``occupation_phi`` is the adaptive reference for the inner one.
    """
    x, u = check_state(x, u)
    v = np.asarray(v, dtype=float)
    vp = np.where(v > 0, v, 1.0)
    out = np.where(v > 0, _gorkov_vec(x, u, vp), 0.0)
    return out if out.ndim else float(out)


def harmonic_H(params, x, u, epsrel=1e-7):
    """``H(x, u) = E_{x,u}[V_1^{2k}]``, the h-function of the conditioning."""
    x, u = check_state(x, u)
    k2 = 2.0 * params.k
    if x == 0.0:
        return u**k2
    scale = max(abs(u), x ** (1.0 / 3.0))

    def integrand(r):
        v = scale * math.exp(r)
        return (params.c * v) ** k2 * float(_gorkov_vec(x, u, np.array([v]))[0]) * v

    val, err = integrate.quad(integrand, -30.0, 30.0, epsabs=0.0, epsrel=epsrel, limit=200)
    if not np.isfinite(val) or err > 1e-5 * abs(val):
        raise QuadratureError(f"H quadrature failed: value {val}, error {err}")
    return val


def t1_tail_const(params=None):
    """Prefactor of ``P(T_1 > t) ~ c' t^{k - 1/4}`` after a bounce at unit speed.

    With ``params=None`` this is the killed-law constant (``k = 0``); otherwise
    the constant of the conditioned (tilted) law.
    """
    if params is None:
        c2k, k = 1.0, 0.0
    else:
        c2k, k = params.c ** (2.0 * params.k), params.k
    return (3.0 * c2k / (math.pi**1.5 * 2.0 ** (0.75 + k))
            * (1.0 + 4.0 * k) / (1.0 - 4.0 * k) * math.gamma(0.25 + k))


def t1_tail_const_up(params):
    """Tail constant of the first bounce time under the conditioned law."""
    return t1_tail_const(params)


def c1_denominator(params):
    """``k E[V_1^{2k} ln V_1^2]``, the denominator of the Goldie constant.

    Differentiating the moment formula at ``x = 2k`` (where it equals one)
    gives ``E[V^{2k} ln V] = tilted_drift``.
    """
    return 2.0 * params.k * mu_up(params)
