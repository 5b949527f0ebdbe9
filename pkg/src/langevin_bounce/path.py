"""Discretised paths of the reflected process, noise reconstruction, resurrection.

The integrator lives in ``_path_kernels``; this module validates inputs,
splits batches into seeded blocks and packages results.
"""

import math
from collections import namedtuple
from dataclasses import dataclass, field

import numpy as np

from . import _path_kernels as kern
from ._parallel import map_blocks
from ._validation import DomainError, check_int, check_positive, check_state
from .rng import BLOCK_SIZE, block_slices, kernel_seeds
from .skeleton import _as_params

STREAM_FIRST_BOUNCE = 21
STREAM_EXCURSIONS = 22
STREAM_RECORD = 23

DEFAULT_V_GRID = np.geomspace(1e-6, 1.0, 25)

#: "adaptive": exact Gaussian transitions, scale-relative steps, Hermite crossing
#: search.  "euler": Euler velocity steps with trapezoid positions, scale-relative
#: steps, crossings only at step ends (linear interpolation).
SCHEMES = {"adaptive": kern.EXACT, "euler": kern.EULER}


def _scheme_code(scheme):
    try:
        return SCHEMES[scheme]
    except KeyError:
        raise DomainError(f"unknown scheme {scheme!r}; choose from {sorted(SCHEMES)}") from None


@dataclass(frozen=True)
class PathConfig:
    """Integrator settings.

    ``dt`` is the relative step: a step at local scale ``l`` (speed, or the
    cube root of the height) lasts ``dt * l^2``, capped by ``max_step`` when
    given.  ``absorb_speed=None`` means ``1e-4`` times the initial scale.
    """

    dt: float = 1e-4
    absorb_speed: float = None
    horizon: float = 10.0
    seed: int = 0
    deterministic_mode: bool = False
    max_step: float = None
    scheme: str = "adaptive"

    def __post_init__(self):
        _scheme_code(self.scheme)
        check_positive(self.dt, "dt")
        check_positive(self.horizon, "horizon")
        check_int(self.seed, "seed")
        if self.absorb_speed is not None:
            check_positive(self.absorb_speed, "absorb_speed", strict=False)
        if self.max_step is not None:
            check_positive(self.max_step, "max_step")

    def resolved_absorb_speed(self, scale):
        return 1e-4 * scale if self.absorb_speed is None else float(self.absorb_speed)

    @property
    def max_step_value(self):
        return 0.0 if self.max_step is None else float(self.max_step)


def _initial_scale(x0, u0):
    return max(abs(u0), x0 ** (1.0 / 3.0))


@dataclass(frozen=True)
class PathSample:
    """A recorded path on its (adaptive) time grid.

    ``bounces`` rows are ``(time, v_in, v_out)``; ``restarts`` rows are
    ``(time, velocity jump)`` of resurrection restarts.  ``w`` is the
    reconstructed driving noise.
    """

    grid: np.ndarray
    x: np.ndarray
    v: np.ndarray
    bounces: np.ndarray
    restarts: np.ndarray
    absorbed_at: float
    c: float
    w: np.ndarray = field(default=None)

    @property
    def bounce_times(self):
        return self.bounces[:, 0]

    @property
    def jump_total(self):
        """``(1 + c) sum |v_in|`` over all bounces."""
        return float(np.sum(-self.bounces[:, 1]) * (1.0 + self.c))


def integrate_sor(params, x0, u0, cfg=None):
    """Simulate one path from ``(x0, u0)`` until absorption or ``cfg.horizon``.

    Absorption is declared at a bounce whose outgoing speed is below the
    absorption speed; ``absorbed_at`` is then its time, otherwise ``nan``.
    """
    params = _as_params(params)
    x0, u0 = check_state(x0, u0)
    cfg = PathConfig() if cfg is None else cfg
    return _record(params, x0, u0, cfg, restart_eps=0.0)


def _record(params, x0, u0, cfg, restart_eps):
    seed = int(kernel_seeds(cfg.seed, 1, STREAM_RECORD)[0])
    t, x, u, bounces, restarts, absorbed_at = kern.record_path(
        x0, u0, params.c, cfg.dt, cfg.max_step_value,
        cfg.resolved_absorb_speed(_initial_scale(x0, u0)), cfg.horizon, seed,
        bool(cfg.deterministic_mode), float(restart_eps), _scheme_code(cfg.scheme),
    )
    path = PathSample(grid=t, x=x, v=u, bounces=bounces, restarts=restarts,
                      absorbed_at=float(absorbed_at), c=params.c)
    return PathSample(**{**path.__dict__, "w": reconstruct_w(path)})


def reconstruct_w(path):
    """Driving noise ``W_t = v_t - v_0 - (velocity jumps up to t)`` on the grid.

    Bounce jumps ``v_out - v_in = -(1 + c) v_in`` and restart jumps are
    removed, so ``W`` is continuous and, for an exact path, a Brownian motion.
    """
    t = path.grid
    jump_t = np.concatenate([path.bounces[:, 0], path.restarts[:, 0]])
    jump_dv = np.concatenate([path.bounces[:, 2] - path.bounces[:, 1], path.restarts[:, 1]])
    order = np.argsort(jump_t, kind="stable")
    cum = np.concatenate(([0.0], np.cumsum(jump_dv[order])))
    idx = np.searchsorted(jump_t[order], t, side="right")
    return path.v - path.v[0] - cum[idx]


def quadratic_variation(w, grid, t_max=None):
    """Sum of squared increments of ``w`` over ``[0, t_max]``."""
    w = np.asarray(w)
    if t_max is not None:
        w = w[np.asarray(grid) <= t_max]
    return float(np.sum(np.diff(w) ** 2))


def aggregated_increments(w, grid, lag):
    """Increments of ``w`` over consecutive windows of length ``lag``."""
    marks = np.arange(0.0, grid[-1] + 1e-12, lag)
    vals = np.interp(marks, grid, w)
    return np.diff(vals)


def time_near_origin(path, radius):
    """Fraction of simulated time with ``max(x, |v|) < radius``."""
    h = np.diff(path.grid)
    near = np.maximum(path.x[:-1], np.abs(path.v[:-1])) < radius
    total = path.grid[-1] - path.grid[0]
    return float(np.sum(h[near]) / total) if total > 0 else 0.0


FirstBounce = namedtuple("FirstBounce", "time v_in v_out steps")


def _seed_blocks(seed, n, stream):
    # a quarter block: paths are far costlier than skeleton steps
    seeds = kernel_seeds(seed, n, stream)
    return [seeds[start:stop] for _, start, stop in block_slices(n, BLOCK_SIZE // 4)]


def simulate_first_bounce(params, x0, u0, n, seed, dt=1e-4, max_step=None,
                          horizon=math.inf, deterministic=False, scheme="adaptive", threads=None):
    """First bounce of ``n`` independent paths from ``(x0, u0)``.

    Returns ``FirstBounce`` arrays; ``v_out = -c v_in``.  Paths still in flight
    at ``horizon`` give ``time = inf`` and ``nan`` velocities.
    """
    params = _as_params(params)
    x0, u0 = check_state(x0, u0)
    n = check_int(n, "n", minimum=1)
    check_positive(dt, "dt")
    ms = 0.0 if max_step is None else check_positive(max_step, "max_step")
    code = _scheme_code(scheme)
    parts = map_blocks(
        lambda s: kern.first_bounce_batch(x0, u0, dt, ms, float(horizon), s, bool(deterministic), code),
        _seed_blocks(seed, n, STREAM_FIRST_BOUNCE),
        threads,
    )
    t, vin, steps = (np.concatenate(col) for col in zip(*parts))
    return FirstBounce(t, vin, -params.c * vin, steps)


@dataclass(frozen=True)
class ExcursionRecord:
    """Summary of one excursion of the resurrected process."""

    start: float
    length: float
    first_bounce_time: float
    max_speed: float
    n_bounces_above: np.ndarray = field(default=None, repr=False)


class ExcursionTable(namedtuple(
        "ExcursionTable",
        "length first_bounce_time max_speed n_bounces near_time jumps absorbed counts v_grid start")):
    """Column-oriented batch of excursions (arrays of equal length)."""

    __slots__ = ()

    def records(self):
        return [
            ExcursionRecord(float(s), float(l), float(f), float(m), cnt)
            for s, l, f, m, cnt in zip(self.start, self.length, self.first_bounce_time,
                                       self.max_speed, self.counts)
        ]


def simulate_excursions(params, eps, n, seed, dt=1e-4, absorb_speed=None, max_step=None,
                        horizon=math.inf, v_grid=None, near_radius=0.0, scheme="adaptive",
                        threads=None):
    """``n`` independent excursions from ``(0, eps)``, each run until absorption.

    ``start`` is the start time of each excursion when they are laid end to
    end, as in the resurrected process.
    """
    params = _as_params(params)
    eps = check_positive(eps, "eps")
    n = check_int(n, "n", minimum=1)
    check_positive(dt, "dt")
    v_grid = DEFAULT_V_GRID if v_grid is None else np.asarray(v_grid, dtype=float)
    absorb = 1e-4 * eps if absorb_speed is None else check_positive(absorb_speed, "absorb_speed", strict=False)
    ms = 0.0 if max_step is None else check_positive(max_step, "max_step")
    code = _scheme_code(scheme)
    parts = map_blocks(
        lambda s: kern.excursion_batch(eps, params.c, dt, ms, absorb, float(horizon), s, v_grid,
                                       float(near_radius), code),
        _seed_blocks(seed, n, STREAM_EXCURSIONS),
        threads,
    )
    cols = [np.concatenate(col) for col in zip(*parts)]
    start = np.concatenate(([0.0], np.cumsum(cols[0])[:-1]))
    return ExcursionTable(*cols, v_grid, start)


def resurrect(params, eps, cfg=None):
    """Resurrected path: restart at ``(0, eps)`` after every absorption, up to the horizon.

    Returns the concatenated ``PathSample`` and one ``ExcursionRecord`` per
    completed excursion (the one cut by the horizon is left out).  Bounce
    counts in the records use ``DEFAULT_V_GRID``.
    """
    params = _as_params(params)
    eps = check_positive(eps, "eps")
    cfg = PathConfig(absorb_speed=None) if cfg is None else cfg
    if cfg.absorb_speed is None:
        cfg = PathConfig(**{**cfg.__dict__, "absorb_speed": 1e-4 * eps})
    path = _record(params, 0.0, eps, cfg, restart_eps=eps)
    return path, excursions_from_path(path)


def excursions_from_path(path, v_grid=None):
    v_grid = DEFAULT_V_GRID if v_grid is None else np.asarray(v_grid, dtype=float)
    ends = path.restarts[:, 0]
    starts = np.concatenate(([path.grid[0]], ends[:-1]))
    btimes = path.bounces[:, 0]
    vout = path.bounces[:, 2]
    records = []
    for s, e in zip(starts, ends):
        lo = np.searchsorted(btimes, s, side="right")
        hi = np.searchsorted(btimes, e, side="right")
        g0 = np.searchsorted(path.grid, s, side="left")
        g1 = np.searchsorted(path.grid, e, side="left")
        speeds = np.abs(path.v[g0:g1])
        peak = max(float(speeds.max()) if speeds.size else 0.0,
                   float(np.max(-path.bounces[lo:hi, 1])) if hi > lo else 0.0)
        vo = vout[lo:hi]
        counts = np.array([np.count_nonzero((vo >= v) & (vo <= 1.0)) for v in v_grid])
        records.append(ExcursionRecord(float(s), float(e - s), float(btimes[lo] - s), peak, counts))
    return records


BounceCounts = namedtuple("BounceCounts", "v_grid mean_counts growth_exponent")


def excursion_bounce_counts(records, v_grid=None):
    """Mean number of bounces with outgoing speed in ``[v, 1]`` per excursion.

    ``records`` is an ``ExcursionTable`` or a list of ``ExcursionRecord``
    carrying counts on ``v_grid`` (default ``DEFAULT_V_GRID``).  The growth
    exponent as ``v -> 0`` is the negated log-log slope of the per-bin
    increments ``E[N_[v_j, v_{j+1})]`` over the bins with nonzero mean.
    """
    if isinstance(records, ExcursionTable):
        v_grid = records.v_grid
        counts = records.counts
    else:
        if len(records) == 0:
            raise DomainError("need at least one excursion record")
        v_grid = DEFAULT_V_GRID if v_grid is None else np.asarray(v_grid, dtype=float)
        counts = np.array([r.n_bounces_above for r in records])
    if counts.shape[0] == 0:
        raise DomainError("need at least one excursion record")
    order = np.argsort(v_grid)
    v = np.asarray(v_grid, dtype=float)[order]
    mean = counts.mean(axis=0)[order]
    incr = mean[:-1] - mean[1:]
    ok = incr > 0
    growth = math.nan
    if np.count_nonzero(ok) >= 3:
        slope = np.polyfit(np.log(v[:-1][ok]), np.log(incr[ok]), 1)[0]
        growth = float(-slope)
    return BounceCounts(v, mean, growth)


def count_slope(lengths, s_lo, s_hi, n_points=20):
    """Log-log slope of ``#{length > s}`` over ``s`` in ``[s_lo, s_hi]``."""
    lengths = np.sort(np.asarray(lengths, dtype=float))
    s = np.geomspace(s_lo, s_hi, n_points)
    cnt = lengths.size - np.searchsorted(lengths, s, side="right")
    if np.any(cnt == 0):
        raise DomainError("no excursion longer than the top of the window")
    return float(np.polyfit(np.log(s), np.log(cnt), 1)[0])


__all__ = [
    "DEFAULT_V_GRID", "ExcursionRecord", "ExcursionTable", "FirstBounce", "PathConfig",
    "PathSample", "aggregated_increments", "count_slope", "excursion_bounce_counts",
    "excursions_from_path", "integrate_sor", "quadratic_variation", "reconstruct_w",
    "resurrect", "simulate_excursions", "simulate_first_bounce", "time_near_origin",
]
