"""Acceptance checks of the simulators against closed-form predictions.

Each check returns a ``CriterionResult``; ``run_suite`` runs all ten and is
what ``langevin-bounce verify`` and the acceptance tests call.  Sample sizes
come from a suite profile ("full" or "quick") scaled by an optional base size.
"""

import math
import time
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy import stats as sps

from . import analytic, ladder, path, skeleton, stats
from .analytic import ModelParams
from .rng import derive_seed, make_rng

FULL = {
    "moment_n": 1_000_000, "zeta_n": 100_000, "t1_n": 100_000, "c1_n": 1_000_000,
    "hit_n": 5_000, "disc_n": 20_000, "overshoot_n": 10_000, "table_n": 100_000,
    "drift_n": 1_000_000, "excursion_m": 10_000, "near_reps": 200,
}
QUICK = {
    "moment_n": 200_000, "zeta_n": 50_000, "t1_n": 50_000, "c1_n": 200_000,
    "hit_n": 2_000, "disc_n": 20_000, "overshoot_n": 10_000, "table_n": 50_000,
    "drift_n": 200_000, "excursion_m": 4_000, "near_reps": 100,
}
SUITES = {"full": FULL, "quick": QUICK}
_BASE_N = 100_000
# sizes that are part of a criterion's definition and never scaled
_FIXED = {"disc_n", "hit_n"}


def suite_sizes(suite="full", n=None):
    """Sample sizes of a suite, optionally rescaled so that the base size is ``n``."""
    sizes = dict(SUITES[suite])
    if n is not None:
        scale = n / _BASE_N
        for key, val in sizes.items():
            if key not in _FIXED:
                sizes[key] = max(int(round(val * scale)), 2_000)
    return sizes


@dataclass
class CriterionResult:
    id: int
    name: str
    anchor: str
    measured: dict
    tolerance: str
    passed: bool
    runtime_s: float = 0.0
    notes: str = ""

    def line(self):
        status = "PASS" if self.passed else "FAIL"
        vals = ", ".join(f"{k}={_fmt(v)}" for k, v in self.measured.items())
        return f"[{status}] criterion {self.id:2d} {self.name}: {vals} (tolerance: {self.tolerance})"


def _fmt(v):
    if isinstance(v, float):
        return f"{v:.6g}"
    if isinstance(v, (list, tuple)):
        return "[" + ", ".join(_fmt(x) for x in v) + "]"
    return str(v)


def _timed(fn):
    def wrapper(*args, **kwargs):
        t0 = time.perf_counter()
        res = fn(*args, **kwargs)
        res.runtime_s = round(time.perf_counter() - t0, 3)
        return res
    wrapper.__name__ = fn.__name__
    wrapper.__doc__ = fn.__doc__
    return wrapper


@_timed
def check_k_solver(params, seed, sizes, expected_k=None, threads=None):
    """Root residuals on a 50-point grid, round trips through ``c_of_k``, monotone curve."""
    t0 = time.perf_counter()
    curve = analytic.kc_curve(1e-3, analytic.C_CR * (1 - 1e-3), 50)
    elapsed = time.perf_counter() - t0
    resid = max(abs(analytic.v_moment(c, 2 * k) - 1.0) for c, k in curve)
    round_trip = max(abs(analytic.k_of_c(analytic.c_of_k(k)) - k) for k in (0.02, 0.1, 0.2, 0.24))
    ks = np.array([k for _, k in curve])
    decreasing = bool(np.all(np.diff(ks) < 0))
    return CriterionResult(
        1, "k(c) solver", "root of E[V^2k] = 1 and its explicit inverse",
        {"max_residual": resid, "max_round_trip_error": round_trip, "strictly_decreasing": decreasing,
         "curve_seconds": elapsed},
        "residual < 1e-12, round trip < 1e-10, decreasing, < 1 s",
        resid < 1e-12 and round_trip < 1e-10 and decreasing and elapsed < 1.0,
    )


@_timed
def check_moment_identity(params, seed, sizes, expected_k=None, threads=None):
    """Median-of-means estimate of ``E[(V_1/u_0)^{2k}]`` equals 1."""
    k = params.k if expected_k is None else expected_k
    _, rho = skeleton.sample_step_batch(params, sizes["moment_n"], derive_seed(seed, 2), threads=threads)
    vals = rho ** (2 * k)
    est = stats.median_of_means(vals, 32)
    se = stats.median_of_means_stderr(vals, 32)
    return CriterionResult(
        2, "moment identity", "E[V_1^{2k}] = 1 for the killed law",
        {"estimate": est, "robust_se": se, "n": int(vals.size)},
        "|estimate - 1| <= 3 robust SE",
        abs(est - 1.0) <= 3 * se,
    )


@_timed
def check_zeta_tail(params, seed, sizes, expected_k=None, threads=None):
    """Absorption-time tail exponent by log-log slope and by Hill."""
    k = params.k if expected_k is None else expected_k
    batch = skeleton.simulate_chain_batch(params, sizes["zeta_n"], derive_seed(seed, 3), threads=threads)
    fit = stats.tail_exponent_loglog(batch.zeta, random_state=derive_seed(seed, 3, 1))
    alpha, alpha_se = stats.hill_estimator(batch.zeta, 0.01)
    joint = math.hypot(fit.stderr, alpha_se)
    ok_slope = abs(fit.exponent - k) <= 0.03
    ok_hill = abs(fit.exponent - alpha) <= 2 * joint
    return CriterionResult(
        3, "absorption-time tail", "P(zeta > t) ~ C1 t^-k",
        {"loglog_exponent": fit.exponent, "loglog_se": fit.stderr, "hill_exponent": alpha,
         "hill_se": alpha_se, "target_k": k, "n": int(batch.zeta.size)},
        "|exponent - k| <= 0.03 and |loglog - hill| <= 2 joint SE",
        ok_slope and ok_hill,
    )


@_timed
def check_t1_tails(params, seed, sizes, expected_k=None, threads=None):
    """First-bounce-time tails under the killed and the conditioned law."""
    k = params.k if expected_k is None else expected_k
    n = sizes["t1_n"]
    tau, _ = skeleton.sample_step_batch(params, n, derive_seed(seed, 4, 0), threads=threads)
    tau_up, _ = skeleton.sample_step_batch(params, n, derive_seed(seed, 4, 1), tilted=True, threads=threads)
    fit = stats.tail_exponent_loglog(tau, random_state=derive_seed(seed, 4, 2))
    fit_up = stats.tail_exponent_loglog(tau_up, random_state=derive_seed(seed, 4, 3))
    target_up = 0.25 - k
    pref = stats.tail_prefactor(tau_up, target_up)
    pref_theory = analytic.t1_tail_const(ModelParams.from_k(k)) if 0 < k < 0.25 else float("nan")
    rel = abs(pref / pref_theory - 1.0)
    return CriterionResult(
        4, "first-bounce-time tails", "P(T_1 > t) ~ t^-1/4, conditioned ~ c' t^(k-1/4)",
        {"killed_exponent": fit.exponent, "tilted_exponent": fit_up.exponent,
         "tilted_target": target_up, "tilted_prefactor": pref, "tilted_prefactor_theory": pref_theory,
         "prefactor_rel_error": rel, "n": n},
        "|killed - 0.25| <= 0.03, |tilted - (1/4 - k)| <= 0.03, prefactor within 20%",
        abs(fit.exponent - 0.25) <= 0.03 and abs(fit_up.exponent - target_up) <= 0.03 and rel <= 0.2,
    )


@_timed
def check_c1_consistency(params, seed, sizes, expected_k=None, threads=None):
    """Goldie constant from its moment formula against the tail plateau ``t^k P(zeta > t)``."""
    k = params.k if expected_k is None else expected_k
    c1, c1_se, batch = skeleton.estimate_C1(params, sizes["c1_n"], derive_seed(seed, 5), threads=threads)
    plateau = stats.tail_prefactor(batch.zeta, k)
    rel = abs(c1 / plateau - 1.0)
    return CriterionResult(
        5, "C1 consistency", "moment formula for C1 vs tail constant",
        {"c1_formula": c1, "c1_se": c1_se, "c1_tail_plateau": plateau, "rel_difference": rel,
         "n": int(batch.zeta.size)},
        "relative difference <= 15%",
        rel <= 0.15,
    )


@_timed
def check_rebound_bound(params, seed, sizes, expected_k=None, threads=None):
    """``P(V_1/c >= |u_0|/2)`` from three starts stays above ``1 - sqrt(3)/pi - 0.02``."""
    floor = 1.0 - math.sqrt(3.0) / math.pi - 0.02
    probs = []
    for j, (x0, u0) in enumerate(((1.0, -1.0), (0.5, 1.0), (2.0, 0.1))):
        fb = path.simulate_first_bounce(params, x0, u0, sizes["hit_n"], derive_seed(seed, 6, j),
                                        dt=1e-4, threads=threads)
        probs.append(float(np.mean(-fb.v_in >= abs(u0) / 2.0)))
    return CriterionResult(
        6, "rebound lower bound", "P(V_1/c >= |u_0|/2) >= 1 - sqrt(3)/pi",
        {"probabilities": probs, "floor": floor, "n_each": sizes["hit_n"]},
        "every probability >= 1 - sqrt(3)/pi - 0.02",
        min(probs) >= floor,
    )


@_timed
def check_discretisation(params, seed, sizes, expected_k=None, threads=None):
    """KS distance of integrated first-bounce speeds to the exact law, over three step sizes."""
    n = sizes["disc_n"]
    s = derive_seed(seed, 7)
    dists = []
    pvals = []
    for dt in (1e-2, 1e-3, 1e-4):
        fb = path.simulate_first_bounce(params, 0.0, 1.0, n, s, dt=dt, threads=threads)
        d, p = stats.ks_test(-fb.v_in, analytic.v_marginal_cdf)
        dists.append(d)
        pvals.append(p)
    monotone = dists[0] > dists[1] > dists[2]
    return CriterionResult(
        7, "discretisation convergence", "law of V_1/c from a unit-speed bounce",
        {"ks_distance": dists, "ks_pvalue": pvals, "dt": [1e-2, 1e-3, 1e-4], "n": n},
        "KS distance strictly decreasing in dt and < 0.02 at dt = 1e-4",
        monotone and dists[2] < 0.02,
    )


@_timed
def check_noise_reconstruction(params, seed, sizes, expected_k=None, threads=None):
    """Reconstructed driving noise of a resurrected path behaves like Brownian motion."""
    dt = 1e-4
    horizon = 10.0
    cfg = path.PathConfig(dt=dt, horizon=horizon, seed=derive_seed(seed, 8), max_step=dt)
    ps, _ = path.resurrect(params, 0.01, cfg)
    t_end = min(horizon, float(ps.grid[-1]))
    qv = path.quadratic_variation(ps.w, ps.grid, t_end)
    incr = path.aggregated_increments(ps.w, ps.grid, 0.1) / math.sqrt(0.1)
    _, p_norm = stats.ks_test(incr, sps.norm.cdf)
    steps = np.abs(np.diff(ps.w))
    frac_big = float(np.mean(steps > 6.0 * math.sqrt(dt)))
    return CriterionResult(
        8, "noise reconstruction", "W = v + (1+c) sum of incoming speeds is Brownian",
        {"quadratic_variation": qv, "t": t_end, "normality_pvalue": p_norm,
         "max_step_over_sqrt_dt": float(steps.max() / math.sqrt(dt)), "big_step_fraction": frac_big,
         "n_steps": int(steps.size)},
        "QV in [0.98 t, 1.02 t], KS p > 0.01, steps > 6 sqrt(dt) in < 1e-6 of steps",
        0.98 * t_end <= qv <= 1.02 * t_end and p_norm > 0.01 and frac_big < 1e-6,
    )


@_timed
def check_stationary_overshoot(params, seed, sizes, expected_k=None, threads=None):
    """Size-biased ladder construction vs level crossing; tilted drift."""
    so = ladder.StationaryOvershoot(params.c, table_size=sizes["table_n"],
                                    random_state=derive_seed(seed, 9, 0)).fit()
    ov = ladder.overshoot_at_level(make_rng(derive_seed(seed, 9, 1)), params, n=sizes["overshoot_n"])
    direct = so.sample(sizes["overshoot_n"], random_state=make_rng(derive_seed(seed, 9, 2)))
    _, p_cdf = stats.ks_test(ov.values, so.cdf)
    _, p_two = stats.ks_2sample(ov.values, direct)
    inc = ladder.walk_increments(make_rng(derive_seed(seed, 9, 3)), params, sizes["drift_n"], tilted=True)
    drift = float(inc.mean())
    se = float(inc.std(ddof=1) / math.sqrt(inc.size))
    return CriterionResult(
        9, "stationary overshoot", "overshoot law (1/mu_H) P(H > y) dy and tilted drift",
        {"ks_pvalue_vs_table_cdf": p_cdf, "ks_pvalue_two_sample": p_two, "tilted_drift": drift,
         "tilted_drift_theory": params.mu_up, "drift_se": se},
        "KS p > 0.01 and |drift - mu_up| <= 3 SE",
        p_cdf > 0.01 and p_two > 0.01 and abs(drift - params.mu_up) <= 3 * se,
    )


@_timed
def check_resurrection(params, seed, sizes, expected_k=None, threads=None):
    """Excursion-length counts scale like ``s^-k``; time near the origin shrinks with eps."""
    k = params.k if expected_k is None else expected_k
    ex = path.simulate_excursions(params, 0.01, sizes["excursion_m"], derive_seed(seed, 10, 0),
                                  dt=1e-4, threads=threads)
    slope = path.count_slope(ex.length, 1e-2, 1e2)
    near = []
    for j, eps in enumerate((0.1, 0.03, 0.01)):
        base = derive_seed(seed, 10, 1, j)
        fr = [path.time_near_origin(path.resurrect(params, eps, path.PathConfig(
            dt=1e-4, horizon=10.0, seed=(base + r) % 2**63))[0], eps) for r in range(sizes["near_reps"])]
        near.append(float(np.mean(fr)))
    decreasing = near[0] > near[1] > near[2]
    return CriterionResult(
        10, "resurrection scaling", "excursion measure n(zeta > s) = C1 s^-k",
        {"count_slope": slope, "target": -k, "window": [1e-2, 1e2], "m": int(ex.length.size),
         "near_origin_fraction": near, "eps": [0.1, 0.03, 0.01]},
        "|slope + k| <= 0.05 over 4 decades; near-origin fraction decreasing in eps",
        abs(slope + k) <= 0.05 and decreasing,
    )


CHECKS = [
    check_k_solver, check_moment_identity, check_zeta_tail, check_t1_tails,
    check_c1_consistency, check_rebound_bound, check_discretisation,
    check_noise_reconstruction, check_stationary_overshoot, check_resurrection,
]


#: JSON Schema of the report written by ``run_suite(...).as_dict()`` (plus ``version``).
REPORT_SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "type": "object",
    "required": ["suite", "c", "k", "seed", "sizes", "criteria", "injected_k", "all_passed"],
    "properties": {
        "suite": {"enum": ["quick", "full"]},
        "c": {"type": "number", "exclusiveMinimum": 0},
        "k": {"type": "number", "exclusiveMinimum": 0, "exclusiveMaximum": 0.25},
        "seed": {"type": "integer", "minimum": 0},
        "sizes": {"type": "object", "additionalProperties": {"type": "integer", "minimum": 1}},
        "injected_k": {"type": ["number", "null"]},
        "all_passed": {"type": "boolean"},
        "version": {"type": "string"},
        "criteria": {
            "type": "array",
            "items": {
                "type": "object",
                "required": ["id", "name", "anchor", "measured", "tolerance", "passed", "runtime_s", "notes"],
                "additionalProperties": False,
                "properties": {
                    "id": {"type": "integer", "minimum": 1, "maximum": 10},
                    "name": {"type": "string"},
                    "anchor": {"type": "string"},
                    "measured": {"type": "object"},
                    "tolerance": {"type": "string"},
                    "passed": {"type": "boolean"},
                    "runtime_s": {"type": "number", "minimum": 0},
                    "notes": {"type": "string"},
                },
            },
        },
    },
}


@dataclass
class SuiteReport:
    suite: str
    c: float
    k: float
    seed: int
    sizes: dict
    criteria: list = field(default_factory=list)
    injected_k: float = None

    @property
    def all_passed(self):
        return all(r.passed for r in self.criteria)

    def as_dict(self):
        out = asdict(self)
        out["all_passed"] = self.all_passed
        return out


def run_suite(c=None, seed=0, suite="full", n=None, inject_k=None, threads=None, only=None,
              progress=None):
    """Run the acceptance checks; ``only`` restricts to a list of criterion ids.

    ``inject_k`` replaces the tail exponent the checks compare against (a
    negative control: tail criteria must then fail).
    """
    params = ModelParams.from_k(0.1) if c is None else ModelParams(c)
    sizes = suite_sizes(suite, n)
    report = SuiteReport(suite=suite, c=params.c, k=params.k, seed=int(seed), sizes=sizes,
                         injected_k=inject_k)
    for i, check in enumerate(CHECKS, start=1):
        if only is not None and i not in only:
            continue
        res = check(params, seed, sizes, expected_k=inject_k, threads=threads)
        report.criteria.append(res)
        if progress is not None:
            progress(res)
    return report
