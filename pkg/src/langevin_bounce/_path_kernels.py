"""Compiled kernels for the reflected Kolmogorov dynamics.

Free flight between bounces uses the exact Gaussian transition of
``(x, u)`` over a step ``h``::

    u' = u + sqrt(h) z1
    x' = x + h (u + u') / 2 + h^{3/2} z2 / sqrt(12)

with independent standard normals ``z1, z2``; setting both to zero gives the
noise-free kinematics.  The ``EULER`` scheme drops the ``z2`` term (plain
Euler velocity step, trapezoid position) and only looks for crossings at step
ends.  Steps adapt to the local scale
``l = max(|u|, x^{1/3})``, ``h = dt * l^2``, and under ``EXACT`` may grow to a
"safe" size where a dip below the wall is a ``K_SAFE``-sigma event.  A wall crossing inside
a step is detected on the cubic Hermite interpolant of the step and located by
bisection.  Every kernel reseeds numba's generator per path, so a path depends
only on its own seed.
"""

import math

import numba as nb
import numpy as np

EXACT = 0
EULER = 1
K_SAFE = 6.0
_SCAN = 8
_REL_TOL = 1e-6
_INV_SQRT12 = 1.0 / math.sqrt(12.0)


@nb.njit(cache=True, nogil=True)
def hermite_x(x0, u0, x1, u1, h, s):
    r = s / h
    r2 = r * r
    r3 = r2 * r
    return ((2 * r3 - 3 * r2 + 1) * x0 + (r3 - 2 * r2 + r) * h * u0
            + (-2 * r3 + 3 * r2) * x1 + (r3 - r2) * h * u1)


@nb.njit(cache=True, nogil=True)
def hermite_u(x0, u0, x1, u1, h, s):
    r = s / h
    r2 = r * r
    return ((6 * r2 - 6 * r) / h * x0 + (3 * r2 - 4 * r + 1) * u0
            + (-6 * r2 + 6 * r) / h * x1 + (3 * r2 - 2 * r) * u1)


@nb.njit(cache=True, nogil=True)
def step_size(x, u, dt, max_step, scheme):
    scale = abs(u)
    if x > 0.0:
        scale = max(scale, np.cbrt(x))
    h = dt * scale * scale
    if x > 0.0 and scheme == EXACT:
        hs = (3.0 * x * x / (4.0 * K_SAFE * K_SAFE)) ** (1.0 / 3.0)
        if u < 0.0:
            hs = min(hs, x / (-2.0 * u))
        h = max(h, hs)
    if max_step > 0.0:
        h = min(h, max_step)
    return h


@nb.njit(cache=True, nogil=True)
def crossing_time(x, u, xn, un, h, scheme):
    """Time in ``(0, h]`` at which the interpolant first hits 0, or -1."""
    if scheme == EULER:
        # endpoint sign change only, root of the linear interpolant
        if xn >= 0.0:
            return -1.0
        return h * x / (x - xn)
    hi = -1.0
    if xn < 0.0:
        hi = h
    else:
        for j in range(1, _SCAN):
            s = h * j / _SCAN
            if hermite_x(x, u, xn, un, h, s) < 0.0:
                hi = s
                break
    if hi < 0.0:
        return -1.0
    lo = 0.0
    for _ in range(200):
        if hi - lo < h * _REL_TOL:
            break
        mid = 0.5 * (lo + hi)
        if hermite_x(x, u, xn, un, h, mid) > 0.0:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


@nb.njit(cache=True, nogil=True)
def _advance(x, u, h, z1, z2, scheme):
    sh = math.sqrt(h)
    un = u + sh * z1
    xn = x + 0.5 * h * (u + un)
    if scheme == EXACT:
        xn += h * sh * z2 * _INV_SQRT12
    return xn, un


@nb.njit(cache=True, nogil=True)
def _incoming(x, u, xn, un, h, s, scheme):
    if scheme == EULER:
        vin = u + (un - u) * s / h
    else:
        vin = hermite_u(x, u, xn, un, h, s)
    if vin >= 0.0:
        # grazing contact resolved at the tolerance; keep the sign convention
        vin = min(un, -abs(vin), -1e-300)
    return vin


@nb.njit(cache=True, nogil=True)
def first_bounce_batch(x0, u0, dt, max_step, horizon, seeds, deterministic, scheme):
    """First wall hit per path: ``(time, incoming velocity, step count)``.

    Paths that reach ``horizon`` first report ``inf`` and ``nan``.
    """
    n = seeds.size
    t_hit = np.full(n, np.inf)
    v_in = np.full(n, np.nan)
    steps = np.zeros(n, dtype=np.int64)
    for i in range(n):
        np.random.seed(seeds[i])
        x = x0
        u = u0
        t = 0.0
        while t < horizon:
            h = step_size(x, u, dt, max_step, scheme)
            z1 = 0.0
            z2 = 0.0
            if not deterministic:
                z1 = np.random.standard_normal()
                z2 = np.random.standard_normal()
            xn, un = _advance(x, u, h, z1, z2, scheme)
            steps[i] += 1
            s = crossing_time(x, u, xn, un, h, scheme)
            if s >= 0.0:
                t_hit[i] = t + s
                v_in[i] = _incoming(x, u, xn, un, h, s, scheme)
                break
            x = xn
            u = un
            t += h
    return t_hit, v_in, steps


@nb.njit(cache=True, nogil=True)
def excursion_batch(eps, c, dt, max_step, absorb_speed, horizon, seeds, v_grid, near_radius, scheme):
    """Independent excursions from ``(0, eps)`` until absorption.

    Returns per excursion: length, first bounce time, peak ``|u|``, bounce
    count, time spent with ``max(x, |u|) < near_radius``, summed jump sizes
    ``(1 + c) |v_in|``, absorbed flag, and the counts of bounces with outgoing
    speed in ``[v, 1]`` for each ``v`` of ``v_grid``.  An excursion still alive
    at ``horizon`` is cut there and flagged as not absorbed.
    """
    n = seeds.size
    g = v_grid.size
    length = np.zeros(n)
    t_first = np.full(n, np.nan)
    max_speed = np.zeros(n)
    n_bounces = np.zeros(n, dtype=np.int64)
    near = np.zeros(n)
    jumps = np.zeros(n)
    absorbed = np.zeros(n, dtype=np.bool_)
    counts = np.zeros((n, g), dtype=np.int64)
    for i in range(n):
        np.random.seed(seeds[i])
        x = 0.0
        u = eps
        t = 0.0
        peak = eps
        while t < horizon:
            h = step_size(x, u, dt, max_step, scheme)
            z1 = np.random.standard_normal()
            z2 = np.random.standard_normal()
            xn, un = _advance(x, u, h, z1, z2, scheme)
            s = crossing_time(x, u, xn, un, h, scheme)
            if s >= 0.0:
                h = s
            if max(x, abs(u)) < near_radius:
                near[i] += h
            if s < 0.0:
                x = xn
                u = un
                t += h
                peak = max(peak, abs(u))
                continue
            t += s
            vin = _incoming(x, u, xn, un, h, s, scheme)
            vout = -c * vin
            peak = max(peak, -vin)
            n_bounces[i] += 1
            jumps[i] += (1.0 + c) * (-vin)
            if n_bounces[i] == 1:
                t_first[i] = t
            for j in range(g):
                if v_grid[j] <= vout <= 1.0:
                    counts[i, j] += 1
            x = 0.0
            u = vout
            if vout < absorb_speed:
                absorbed[i] = True
                break
        length[i] = t
        max_speed[i] = peak
    return length, t_first, max_speed, n_bounces, near, jumps, absorbed, counts


@nb.njit(cache=True, nogil=True)
def record_path(x0, u0, c, dt, max_step, absorb_speed, horizon, seed, deterministic, restart_eps, scheme):
    """One path on its adaptive grid.

    Bounces are grid points with ``x = 0`` and the outgoing velocity.  With
    ``restart_eps > 0`` an absorption restarts the path at ``(0, restart_eps)``
    (the restart time and velocity jump are recorded); otherwise it ends the
    path.  Returns ``(t, x, u, bounces[m, 3], restarts[r, 2], absorbed_at)``
    where ``bounces`` rows are ``(time, v_in, v_out)`` and ``restarts`` rows
    ``(time, jump)``.
    """
    np.random.seed(seed)
    cap = 1024
    ts = np.empty(cap)
    xs = np.empty(cap)
    us = np.empty(cap)
    bcap = 64
    bounces = np.empty((bcap, 3))
    restarts = np.empty((bcap, 2))
    nb_ = 0
    nr = 0
    ts[0] = 0.0
    xs[0] = x0
    us[0] = u0
    m = 1
    x = x0
    u = u0
    t = 0.0
    absorbed_at = np.nan
    while t < horizon:
        h = step_size(x, u, dt, max_step, scheme)
        z1 = 0.0
        z2 = 0.0
        if not deterministic:
            z1 = np.random.standard_normal()
            z2 = np.random.standard_normal()
        xn, un = _advance(x, u, h, z1, z2, scheme)
        s = crossing_time(x, u, xn, un, h, scheme)
        if s >= 0.0:
            vin = _incoming(x, u, xn, un, h, s, scheme)
            vout = -c * vin
            t += s
            x = 0.0
            u = vout
            if nb_ == bounces.shape[0]:
                grown = np.empty((2 * nb_, 3))
                grown[:nb_] = bounces
                bounces = grown
            bounces[nb_, 0] = t
            bounces[nb_, 1] = vin
            bounces[nb_, 2] = vout
            nb_ += 1
            if vout < absorb_speed:
                if restart_eps > 0.0:
                    if nr == restarts.shape[0]:
                        grown2 = np.empty((2 * nr, 2))
                        grown2[:nr] = restarts
                        restarts = grown2
                    restarts[nr, 0] = t
                    restarts[nr, 1] = restart_eps - vout
                    nr += 1
                    u = restart_eps
                else:
                    absorbed_at = t
        else:
            x = xn
            u = un
            t += h
        if m == ts.size:
            ts2 = np.empty(2 * m)
            xs2 = np.empty(2 * m)
            us2 = np.empty(2 * m)
            ts2[:m] = ts
            xs2[:m] = xs
            us2[:m] = us
            ts = ts2
            xs = xs2
            us = us2
        ts[m] = t
        xs[m] = x
        us[m] = u
        m += 1
        if not math.isnan(absorbed_at):
            break
    return ts[:m].copy(), xs[:m].copy(), us[:m].copy(), bounces[:nb_].copy(), restarts[:nr].copy(), absorbed_at
