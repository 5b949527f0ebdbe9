"""Ladder heights and overshoots of the log-speed random walk.

Under the conditioned law ``S_n = ln V_n`` is a random walk with positive
drift.  Its strict ascending ladder heights are i.i.d. and the overshoot over
a high level converges to the stationary law with density
``P(H_1 > y) / E[H_1]``.  That law is realised here by size-biasing an
empirical table of ladder heights: pick ``H`` with probability proportional
to its value, return ``U * H``.
"""

import csv
import os
from dataclasses import dataclass

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.exceptions import NotFittedError
from sklearn.utils.validation import check_is_fitted

from ._validation import DomainError, SimulationGuardError, check_int, check_positive
from .analytic import ModelParams
from .rng import check_random_state, make_rng
from .skeleton import _as_params, sample_tilted_v, sample_v

MAX_LADDER_STEPS = 10_000_000
DEFAULT_TABLE_SIZE = 100_000
STREAM_LADDER_TABLE = 11


def walk_increments(rng, params, n, tilted=False):
    """``n`` i.i.d. increments ``ln(c * rho)`` of the log-speed walk."""
    params = _as_params(params)
    n = check_int(n, "n", minimum=1)
    v = sample_tilted_v(rng, params, n) if tilted else sample_v(rng, n)
    return np.log(params.c) + np.log(v)


def default_level(params):
    """Level high enough for the overshoot to be near stationarity: 20 tilted drifts."""
    return 20.0 * _as_params(params).mu_up


@dataclass(frozen=True)
class LadderSample:
    """Strict ascending ladder heights ``H_1 < H_2 < ...`` and their epochs.

    ``walk_mean`` is the mean increment over the walk consumed up to the last
    epoch.
    """

    heights: np.ndarray
    epochs: np.ndarray
    walk_mean: float

    @property
    def increments(self):
        """``H_j - H_{j-1}`` with ``H_0 = 0``: i.i.d. copies of ``H_1``."""
        return np.diff(self.heights, prepend=0.0)

    @property
    def mu_H_hat(self):
        return float(self.heights[-1] / self.heights.size)


def ladder_heights(rng, params, n_ladders, tilted=True, max_steps=MAX_LADDER_STEPS):
    """First ``n_ladders`` strict ascending ladder heights of the walk from 0.

    Raises ``SimulationGuardError`` when ``max_steps`` increments pass without
    a new ladder height, which for the tilted walk means a misconfigured drift.
    ``tilted=False`` exists to exercise that guard.
    """
    params = _as_params(params)
    n_ladders = check_int(n_ladders, "n_ladders", minimum=1)
    max_steps = check_int(max_steps, "max_steps", minimum=1)
    heights = []
    epochs = []
    level = 0.0
    pos = 0.0
    steps = 0
    last_epoch = 0
    while len(heights) < n_ladders:
        chunk = int(min(65536, max(256, 2 * (n_ladders - len(heights)))))
        walk = pos + np.cumsum(walk_increments(rng, params, chunk, tilted))
        before = np.maximum.accumulate(np.concatenate(([level], walk)))[:-1]
        rec = np.flatnonzero(walk > before)
        need = n_ladders - len(heights)
        if rec.size > need:
            rec = rec[:need]
            walk = walk[: rec[-1] + 1]
        if rec.size:
            heights.extend(walk[rec])
            epochs.extend(steps + rec + 1)
            level = float(walk[rec[-1]])
            last_epoch = int(steps + rec[-1] + 1)
        pos = float(walk[-1])
        steps += walk.size
        if steps - last_epoch > max_steps:
            raise SimulationGuardError(
                f"no ladder epoch within {max_steps} steps; the walk does not drift upward"
            )
    return LadderSample(
        heights=np.asarray(heights, dtype=float),
        epochs=np.asarray(epochs, dtype=np.int64),
        walk_mean=float(heights[-1] / epochs[-1]),
    )


@dataclass(frozen=True)
class OvershootSample:
    """Overshoots ``S_T - level`` at the first passage ``T`` above ``level``.

    ``early_max`` holds, per replica, the running maximum of the walk just
    before it first passed ``level / 2``: a summary of the history far below
    the level, used to check that overshoots forget it.
    """

    values: np.ndarray
    level: float
    early_max: np.ndarray


def overshoot_at_level(rng, params, level=None, n=10_000, max_steps=MAX_LADDER_STEPS):
    """Overshoots of ``n`` independent tilted walks from 0 over ``level``."""
    params = _as_params(params)
    level = default_level(params) if level is None else check_positive(level, "level")
    n = check_int(n, "n", minimum=1)
    pos = np.zeros(n)
    runmax = np.zeros(n)
    early = np.full(n, np.nan)
    out = np.empty(n)
    active = np.arange(n)
    steps = 0
    half = 0.5 * level
    while active.size:
        steps += 1
        if steps > max_steps:
            raise SimulationGuardError(f"level {level} not crossed within {max_steps} steps")
        new = pos[active] + walk_increments(rng, params, active.size, tilted=True)
        first_half = np.isnan(early[active]) & (new > half)
        early[active[first_half]] = runmax[active[first_half]]
        pos[active] = new
        runmax[active] = np.maximum(runmax[active], new)
        crossed = new > level
        out[active[crossed]] = new[crossed] - level
        active = active[~crossed]
    return OvershootSample(values=out, level=float(level), early_max=early)


def cache_path(cache_dir, c, seed, size):
    """Cache file for a ladder table keyed by ``(c, seed, size)``."""
    return os.path.join(cache_dir, f"ladder_c{float(c).hex()}_seed{int(seed)}_n{int(size)}.csv")


class StationaryOvershoot(BaseEstimator):
    """Stationary overshoot law of the conditioned log-speed walk.

    ``fit`` builds (or loads) a table of ``table_size`` i.i.d. ladder heights;
    afterwards the object is read-only and ``sample`` / ``cdf`` / ``mean`` can
    be used concurrently.

    Parameters
    ----------
    c : float
        Elasticity.
    table_size : int
    random_state : int or numpy Generator
        Seed of the table; integer seeds also key the on-disk cache.
    cache_dir : str or None
        Directory for the CSV table cache; ``None`` disables caching.

    Attributes
    ----------
    table_ : ndarray
        Ladder-height increments.
    mu_H_ : float
        Their mean.
    """

    def __init__(self, c, table_size=DEFAULT_TABLE_SIZE, random_state=0, cache_dir=None):
        self.c = c
        self.table_size = table_size
        self.random_state = random_state
        self.cache_dir = cache_dir

    def fit(self, X=None, y=None):
        params = ModelParams(self.c)
        size = check_int(self.table_size, "table_size", minimum=1)
        seeded = isinstance(self.random_state, (int, np.integer)) and not isinstance(self.random_state, bool)
        path = None
        if self.cache_dir is not None and seeded:
            path = cache_path(self.cache_dir, params.c, self.random_state, size)
            if os.path.exists(path):
                return self._set_table(read_table(path))
        if seeded:
            rng = make_rng(int(self.random_state), STREAM_LADDER_TABLE)
        else:
            rng = check_random_state(self.random_state)
        table = ladder_heights(rng, params, size).increments
        if path is not None:
            os.makedirs(self.cache_dir, exist_ok=True)
            write_table(path, table)
        return self._set_table(table)

    @classmethod
    def from_table(cls, table, c=None):
        """Fitted instance over a given table of ladder heights."""
        table = np.asarray(table, dtype=float).ravel()
        if table.size == 0 or np.any(~(table > 0)) or not np.all(np.isfinite(table)):
            raise DomainError("ladder table must hold finite positive heights")
        obj = cls(c=c, table_size=table.size, random_state=None)
        return obj._set_table(table)

    def _set_table(self, table):
        self.table_ = np.asarray(table, dtype=float)
        self.mu_H_ = float(self.table_.mean())
        self._cum = np.cumsum(self.table_)
        self._sorted = np.sort(self.table_)
        self._sorted_cum = np.concatenate(([0.0], np.cumsum(self._sorted)))
        return self

    def _check(self):
        try:
            check_is_fitted(self, "table_")
        except NotFittedError:
            raise NotFittedError("ladder table not built; call fit() first") from None

    def sample(self, n=1, random_state=None):
        """``n`` draws: size-biased table entry times an independent uniform."""
        self._check()
        rng = check_random_state(random_state)
        n = check_int(n, "n", minimum=1)
        idx = np.searchsorted(self._cum, rng.random(n) * self._cum[-1], side="right")
        idx = np.minimum(idx, self.table_.size - 1)
        return rng.random(n) * self.table_[idx]

    def cdf(self, y):
        """``int_0^y P(H > s) ds / E[H]`` under the empirical table."""
        self._check()
        y = np.asarray(y, dtype=float)
        yc = np.maximum(y, 0.0)
        j = np.searchsorted(self._sorted, yc, side="right")
        # heights below y contribute themselves, the rest contribute y
        total = self._sorted_cum[j] + yc * (self._sorted.size - j)
        out = total / self._sorted_cum[-1]
        return out if out.ndim else float(out)

    def mean(self):
        """Mean overshoot ``E[H^2] / (2 E[H])``."""
        self._check()
        return float(np.mean(self.table_**2) / (2.0 * self.mu_H_))


def stationary_overshoot_sampler(rng, overshoot, size=None):
    """Draw(s) from the stationary overshoot law of a fitted ``StationaryOvershoot``."""
    if not isinstance(overshoot, StationaryOvershoot):
        raise DomainError("need a StationaryOvershoot instance")
    draws = overshoot.sample(1 if size is None else size, random_state=rng)
    return float(draws[0]) if size is None else draws


def write_table(path, table):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["ladder_height"])
        for h in table:
            w.writerow([repr(float(h))])


def read_table(path):
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    if not rows or rows[0] != ["ladder_height"]:
        raise DomainError(f"{path} is not a ladder table")
    return np.array([float(r[0]) for r in rows[1:]])


def mean_overshoot_oracle(sample):
    """``E[H^2] / (2 E[H])`` from a ``LadderSample``; the renewal-theory mean overshoot."""
    h = sample.increments
    return float(np.mean(h * h) / (2.0 * np.mean(h)))


__all__ = [
    "DEFAULT_TABLE_SIZE", "LadderSample", "OvershootSample", "StationaryOvershoot",
    "cache_path", "default_level", "ladder_heights", "mean_overshoot_oracle",
    "overshoot_at_level", "stationary_overshoot_sampler", "walk_increments",
]
