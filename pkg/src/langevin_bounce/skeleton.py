"""Exact simulation of the bounce skeleton ``(T_n, V_n)``.

After a bounce at speed ``V_n`` the pair ``((T_{n+1} - T_n) / V_n^2, V_{n+1} / V_n)``
is independent of the past, with ``V_{n+1} / V_n = c * rho`` where ``rho`` has
density ``(3 / 2 pi) rho^{3/2} / (1 + rho^3)`` and the scaled flight time has
the McKean conditional law given ``rho``.  Both are sampled exactly by
rejection, so chains are exact up to the truncation of the infinite bounce
sequence before absorption.
"""

import math
from collections import namedtuple
from dataclasses import dataclass

import numpy as np
from scipy import special

from ._parallel import map_blocks
from ._validation import DomainError, SimulationGuardError, check_int, check_positive
from .analytic import ModelParams, c1_denominator
from .rng import BLOCK_SIZE, block_slices, make_rng
from .stats import median_of_means, median_of_means_stderr

# a vectorised rejection pass that leaves draws pending this many times is a bug
_MAX_ROUNDS = 10_000
_SQRT_PI_HALF = math.sqrt(math.pi) / 2.0

# stream namespaces below the master seed
STREAM_CHAIN_BATCH = 1
STREAM_STEP_BATCH = 2


def _as_params(params):
    return params if isinstance(params, ModelParams) else ModelParams(params)


def _power_rejection(rng, n, tilt):
    """Draws from ``v^{3/2 + tilt} / (1 + v^3)`` on (0, inf).

    Proposal: ``v^{3/2 + tilt}`` on (0, 1] and ``v^{tilt - 3/2}`` on (1, inf),
    which dominates the target with acceptance ``1 / (1 + v^3)`` resp.
    ``v^3 / (1 + v^3)``.
    """
    a_lo = 2.5 + tilt
    a_hi = 0.5 - tilt
    w_lo = (1.0 / a_lo) / (1.0 / a_lo + 1.0 / a_hi)
    out = np.empty(n)
    todo = np.arange(n)
    for _ in range(_MAX_ROUNDS):
        if todo.size == 0:
            return out
        m = todo.size
        u = rng.random(m)
        lo = rng.random(m) < w_lo
        v = np.where(lo, u ** (1.0 / a_lo), u ** (-1.0 / a_hi))
        v3 = v**3
        acc = rng.random(m) * (1.0 + v3) < np.where(lo, 1.0, v3)
        # 1 - U can be 0, giving v = inf under the heavy branch
        acc &= np.isfinite(v) & (v > 0)
        out[todo[acc]] = v[acc]
        todo = todo[~acc]
    raise SimulationGuardError("speed-ratio rejection sampler did not terminate")


def _scalar_or_array(arr, size):
    return float(arr[0]) if size is None else arr


def sample_v(rng, size=None):
    """Exact draw(s) of ``V_1 / c`` under the killed law from a bounce at unit speed."""
    n = 1 if size is None else check_int(size, "size")
    return _scalar_or_array(_power_rejection(rng, n, 0.0), size)


def sample_tilted_v(rng, params, size=None):
    """Exact draw(s) of ``V_1 / c`` under the ``(c v)^{2k}``-tilted law."""
    params = _as_params(params)
    n = 1 if size is None else check_int(size, "size")
    return _scalar_or_array(_power_rejection(rng, n, 2.0 * params.k), size)


def sample_t_given_v(rng, v):
    """Scaled flight time ``T_1`` given ``V_1 / c = v``, exact.

    The conditional density is ``s^{-2} exp(-a / s) erf(sqrt(6 v / s))`` up to
    a constant, ``a = 2 (v^2 - v + 1)``.  For ``v`` near 1 the proposal
    ``s = a / E`` (E unit exponential) is accepted with probability
    ``erf(sqrt(6 v / s))``.  Away from 1 that rate collapses, and the proposal
    ``s = a / G``, ``G ~ Gamma(3/2)``, accepted with ``erf(sqrt(y)) sqrt(pi) / (2 sqrt(y))``,
    ``y = 6 v / s``, keeps the acceptance rate bounded below.
    """
    v_arr = np.atleast_1d(np.asarray(v, dtype=float))
    if np.any(~(v_arr > 0)) or not np.all(np.isfinite(v_arr)):
        raise DomainError("v must be finite and > 0")
    out = np.empty(v_arr.size)
    todo = np.arange(v_arr.size)
    for _ in range(_MAX_ROUNDS):
        if todo.size == 0:
            break
        vv = v_arr[todo]
        a = 2.0 * (vv * vv - vv + 1.0)
        near = np.abs(vv - 2.0) <= math.sqrt(3.0)
        g = np.where(near, rng.exponential(size=todo.size), rng.gamma(1.5, size=todo.size))
        s = a / g
        y = 6.0 * vv / s
        ry = np.sqrt(y)
        e = special.erf(ry)
        with np.errstate(divide="ignore", invalid="ignore"):
            p = np.where(near, e, np.where(ry > 0, e * _SQRT_PI_HALF / ry, 1.0))
        acc = (rng.random(todo.size) < p) & np.isfinite(s)
        out[todo[acc]] = s[acc]
        todo = todo[~acc]
    else:
        raise SimulationGuardError("flight-time rejection sampler did not terminate")
    return float(out[0]) if np.ndim(v) == 0 else out.reshape(np.shape(v))


def sample_step(rng, params, size=None, tilted=False):
    """``(tau, rho)``: scaled flight time and speed ratio of one skeleton step.

    ``rho = c * v`` with ``v`` from ``sample_v`` (or ``sample_tilted_v``); the tilt
    acts on ``v`` only, so ``tau`` always comes from the untilted conditional.
    """
    params = _as_params(params)
    n = 1 if size is None else check_int(size, "size")
    v = _power_rejection(rng, n, 2.0 * params.k if tilted else 0.0)
    tau = sample_t_given_v(rng, v)
    rho = params.c * v
    if size is None:
        return float(tau[0]), float(rho[0])
    return tau, rho


@dataclass(frozen=True)
class ChainConfig:
    """Stopping rules for skeleton chains.

    ``truncation_epsilon`` stops a killed chain once ``prod (V_n / V_0)^2`` falls
    below it; the value 1 is accepted and means "stop after the first bounce".
    """

    truncation_epsilon: float = 1e-12
    max_bounces: int = 100_000
    seed: int = 0

    def __post_init__(self):
        eps = check_positive(self.truncation_epsilon, "truncation_epsilon")
        if eps > 1.0:
            raise DomainError(f"truncation_epsilon must lie in (0, 1], got {eps}")
        check_int(self.max_bounces, "max_bounces", minimum=1)
        check_int(self.seed, "seed")


@dataclass(frozen=True)
class BounceChain:
    """Bounce times and outgoing speeds of one chain, stored in log scale.

    Tilted chains grow geometrically and overflow doubles after a few hundred
    bounces, hence ``log_times`` / ``log_speeds``; ``times`` and ``speeds`` are
    the exponentiated views.  ``zeta`` is the last bounce time (no estimate of
    the truncated remainder is added); ``truncated_weight`` is
    ``prod (V_n / V_0)^2`` at the stop, bounding the neglected part in scaled
    units.
    """

    log_times: np.ndarray
    log_speeds: np.ndarray
    zeta: float
    truncated_weight: float
    capped: bool
    tilted: bool = False

    @property
    def times(self):
        with np.errstate(over="ignore"):
            return np.exp(self.log_times)

    @property
    def speeds(self):
        with np.errstate(over="ignore"):
            return np.exp(self.log_speeds)

    @property
    def n_bounces(self):
        return self.log_speeds.size - 1

    @property
    def log_speed_increments(self):
        return np.diff(self.log_speeds)


def _run_chain(rng, params, u0, cfg, tilted, horizon):
    params = _as_params(params)
    u0 = check_positive(u0, "u0")
    cfg = ChainConfig() if cfg is None else cfg
    log_eps = math.log(cfg.truncation_epsilon)
    log_horizon = math.log(horizon) if horizon is not None else math.inf

    log_t = [-math.inf]
    log_s = [math.log(u0)]
    chunk = 32
    capped = True
    while len(log_s) <= cfg.max_bounces:
        tau, rho = sample_step(rng, params, chunk, tilted=tilted)
        stop = False
        for j in range(chunk):
            # T_{n+1} = T_n + V_n^2 tau, summed in log space
            lt = np.logaddexp(log_t[-1], 2.0 * log_s[-1] + math.log(tau[j]))
            log_t.append(float(lt))
            log_s.append(log_s[-1] + math.log(rho[j]))
            n = len(log_s) - 1
            if not tilted and (2.0 * (log_s[-1] - log_s[0]) < log_eps or cfg.truncation_epsilon >= 1.0):
                capped = False
                stop = True
            elif tilted and lt > log_horizon:
                capped = False
                stop = True
            if stop or n >= cfg.max_bounces:
                stop = True
                break
        if stop:
            break

    log_t = np.array(log_t)
    log_s = np.array(log_s)
    return BounceChain(
        log_times=log_t,
        log_speeds=log_s,
        zeta=math.inf if tilted else float(math.exp(log_t[-1])),
        truncated_weight=float(math.exp(min(2.0 * (log_s[-1] - log_s[0]), 700.0))),
        capped=bool(capped and not (tilted and horizon is None)),
        tilted=tilted,
    )


def simulate_chain(rng, params, u0=1.0, cfg=None):
    """Killed chain from a bounce at speed ``u0`` until truncation or the bounce cap.

    ``capped`` is set when ``cfg.max_bounces`` ran out before the weight fell
    below ``cfg.truncation_epsilon``.
    """
    return _run_chain(rng, params, u0, cfg, tilted=False, horizon=None)


def simulate_tilted_chain(rng, params, u0=1.0, cfg=None, horizon=None):
    """Chain of the process conditioned never to be absorbed.

    Runs ``cfg.max_bounces`` bounces, or stops at the first bounce after time
    ``horizon`` when one is given (``capped`` then means the horizon was not
    reached).  ``zeta`` is ``inf``: the conditioned process is never absorbed.
    """
    if horizon is not None:
        horizon = check_positive(horizon, "horizon")
    return _run_chain(rng, params, u0, cfg, tilted=True, horizon=horizon)


ChainBatch = namedtuple("ChainBatch", "zeta t1 v1 n_bounces weight capped")


def _chain_block(params, u0, cfg, seed, key, n):
    rng = make_rng(seed, *key)
    log_eps = math.log(cfg.truncation_epsilon)
    zeta = np.zeros(n)
    logw = np.zeros(n)
    nb = np.zeros(n, dtype=np.int64)
    active = np.arange(n)
    t1 = v1 = None
    while active.size:
        tau, rho = sample_step(rng, params, active.size)
        zeta[active] += np.exp(logw[active]) * tau
        if t1 is None:
            t1, v1 = tau.copy(), rho.copy()
        logw[active] += 2.0 * np.log(rho)
        nb[active] += 1
        done = (logw[active] < log_eps) | (nb[active] >= cfg.max_bounces)
        if cfg.truncation_epsilon >= 1.0:
            done[:] = True
        active = active[~done]
    scale = u0 * u0
    return zeta * scale, t1 * scale, v1 * u0, nb, np.exp(logw), (logw >= log_eps)


def simulate_chain_batch(params, n, seed, u0=1.0, cfg=None, threads=None):
    """``n`` independent killed chains, summarised per chain.

    Vectorised over blocks of ``BLOCK_SIZE`` chains, each block on its own
    stream ``(seed, STREAM_CHAIN_BATCH, block)``; results do not depend on
    ``threads``.  Returns a ``ChainBatch`` of arrays: absorption time, first
    bounce time, first outgoing speed, bounce count, final weight
    ``prod (V_n / V_0)^2`` and the cap flag.
    """
    params = _as_params(params)
    n = check_int(n, "n", minimum=1)
    u0 = check_positive(u0, "u0")
    cfg = ChainConfig(seed=seed) if cfg is None else cfg
    blocks = block_slices(n, BLOCK_SIZE)
    parts = map_blocks(
        lambda blk: _chain_block(params, u0, cfg, seed, (STREAM_CHAIN_BATCH, blk[0]), blk[2] - blk[1]),
        blocks,
        threads,
    )
    return ChainBatch(*(np.concatenate(col) for col in zip(*parts)))


def sample_step_batch(params, n, seed, tilted=False, threads=None):
    """``n`` i.i.d. ``(tau, rho)`` steps on per-block streams; returns two arrays."""
    params = _as_params(params)
    n = check_int(n, "n", minimum=1)
    key0 = STREAM_STEP_BATCH * 2 + int(bool(tilted))
    parts = map_blocks(
        lambda blk: sample_step(make_rng(seed, key0, blk[0]), params, blk[2] - blk[1], tilted=tilted),
        block_slices(n, BLOCK_SIZE),
        threads,
    )
    return np.concatenate([p[0] for p in parts]), np.concatenate([p[1] for p in parts])


def c1_numerator(zeta, t1, k):
    """``zeta^k - (zeta - T_1)^k`` without cancellation when ``T_1 << zeta``."""
    ratio = np.clip(t1 / zeta, 0.0, 1.0)
    return -zeta**k * np.expm1(k * np.log1p(-ratio))


def estimate_C1(params, n_samples, seed=0, cfg=None, threads=None, n_blocks=32):
    """Constant ``C1`` of the absorption-time tail ``P(zeta > t) ~ C1 t^{-k}``.

    ``C1 = E[zeta^k - (zeta - T_1)^k] / (k E[V_1^{2k} ln V_1^2])`` from a bounce at
    unit speed.  The denominator is exact (``2 k`` times the tilted drift); the
    numerator is a median-of-means over ``n_blocks`` blocks of simulated chains,
    with ``zeta`` and ``T_1`` taken from the same chain.  Returns
    ``(C1, stderr, batch)``.
    """
    params = _as_params(params)
    n_samples = check_int(n_samples, "n_samples", minimum=1000)
    batch = simulate_chain_batch(params, n_samples, seed, 1.0, cfg, threads)
    k = params.k
    num = c1_numerator(batch.zeta, batch.t1, k)
    den = c1_denominator(params)
    return (median_of_means(num, n_blocks) / den,
            median_of_means_stderr(num, n_blocks) / den,
            batch)


def sample_stationary_start(rng, params, v_gate, cfg=None, overshoot=None, horizon=None):
    """Conditioned chain seen from the first time its speed exceeds ``v_gate``.

    The initial speed is ``v_gate * exp(O)`` with ``O`` drawn from the
    stationary overshoot law of the tilted log-speed walk (``overshoot`` is a
    fitted ``ladder.StationaryOvershoot``; one is built from the default table
    size when omitted).  The bounces before the gate are not reconstructed.
    """
    from .ladder import StationaryOvershoot

    params = _as_params(params)
    v_gate = check_positive(v_gate, "v_gate")
    if overshoot is None:
        overshoot = StationaryOvershoot(params.c, random_state=0).fit()
    o = float(overshoot.sample(1, random_state=rng)[0])
    return simulate_tilted_chain(rng, params, v_gate * math.exp(o), cfg, horizon)
