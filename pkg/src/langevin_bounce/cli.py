"""Command-line entry point: ``langevin-bounce {kc,simulate,overshoot,verify}``.

Exit codes: 0 success, 1 verification failure, 2 usage or domain error,
3 a simulation guard tripped.
"""

import argparse
import json
import math
import os
import shlex
import sys

import numpy as np

from . import __version__, analytic, ladder, path, skeleton, stats, verify
from ._io import RunManifest, write_csv
from ._parallel import THREADS_ENV, resolve_threads
from ._validation import DomainError, QuadratureError, SimulationGuardError
from .analytic import ModelParams
from .rng import derive_seed, make_rng

EXIT_OK = 0
EXIT_VERIFY_FAILED = 1
EXIT_USAGE = 2
EXIT_GUARD = 3

DEFAULT_C = analytic.c_of_k(0.1)
STREAM_TILTED_CHAINS = 31


class _UsageError(Exception):
    pass


def _params(c):
    return ModelParams(DEFAULT_C if c is None else c)


def _out_dir(out):
    if out is None:
        raise _UsageError("--out DIR is required")
    os.makedirs(out, exist_ok=True)
    return out


def _command_line(argv):
    return "langevin-bounce " + " ".join(shlex.quote(a) for a in argv)


def cmd_kc(args, argv):
    if args.curve is not None:
        c_min, c_max, n_points = args.curve
        if n_points != int(n_points):
            raise _UsageError("--curve N must be an integer")
        curve = analytic.kc_curve(c_min, c_max, int(n_points))
        cs, ks = zip(*curve)
        if args.out is None:
            print("c,k")
            for c, k in curve:
                print(f"{c!r},{k!r}")
            return EXIT_OK
        out = _out_dir(args.out)
        manifest = RunManifest(_command_line(argv), {"curve": [c_min, c_max, int(n_points)]}, __version__)
        target = os.path.join(out, "kc_curve.csv")
        manifest.add_output(target, write_csv(target, ["c", "k"], [cs, ks]))
        manifest.finish()
        manifest.write(out)
        return EXIT_OK
    params = _params(args.c)
    print(json.dumps({
        "c_cr": analytic.C_CR,
        "c": params.c,
        "k": params.k,
        "drift": params.drift,
        "mu_up": params.mu_up,
        "c_prime": analytic.t1_tail_const_up(params),
    }, indent=2))
    return EXIT_OK


def _run_params(args, params, **extra):
    out = {"c": params.c, "k": params.k, "seed": args.seed}
    for name in ("n", "u0", "x0", "dt", "eps", "horizon", "max_bounces", "level", "suite"):
        if hasattr(args, name):
            out[name] = getattr(args, name)
    out["threads"] = resolve_threads(getattr(args, "threads", None))
    out.update(extra)
    return out


def _simulate_chain(args, params, out, manifest, threads):
    cfg = skeleton.ChainConfig(max_bounces=args.max_bounces, seed=args.seed)
    batch = skeleton.simulate_chain_batch(params, args.n, args.seed, args.u0, cfg, threads)
    target = os.path.join(out, "chains.csv")
    rows = write_csv(target, ["chain", "zeta", "t1", "v1", "n_bounces", "truncated_weight", "capped"],
                     [np.arange(args.n), batch.zeta, batch.t1, batch.v1, batch.n_bounces,
                      batch.weight, batch.capped.astype(int)])
    manifest.add_output(target, rows)


def _simulate_tilted(args, params, out, manifest, threads):
    cfg = skeleton.ChainConfig(max_bounces=args.max_bounces, seed=args.seed)
    cols = [[], [], [], []]
    for i in range(args.n):
        ch = skeleton.simulate_tilted_chain(make_rng(args.seed, STREAM_TILTED_CHAINS, i), params,
                                            args.u0, cfg, args.horizon)
        m = ch.log_speeds.size
        cols[0].extend([i] * m)
        cols[1].extend(range(m))
        cols[2].extend(ch.log_times.tolist())
        cols[3].extend(ch.log_speeds.tolist())
    target = os.path.join(out, "tilted_chains.csv")
    rows = write_csv(target, ["chain", "bounce", "log_time", "log_speed"], cols)
    manifest.add_output(target, rows)


def _write_path(ps, out, manifest):
    target = os.path.join(out, "path.csv")
    manifest.add_output(target, write_csv(target, ["t", "x", "v", "w"], [ps.grid, ps.x, ps.v, ps.w]))
    target = os.path.join(out, "bounces.csv")
    b = ps.bounces
    manifest.add_output(target, write_csv(target, ["t", "v_in", "v_out"], [b[:, 0], b[:, 1], b[:, 2]]))


def _simulate_path(args, params, out, manifest, threads):
    cfg = path.PathConfig(dt=args.dt, horizon=args.horizon, seed=args.seed, max_step=args.max_step)
    ps = path.integrate_sor(params, args.x0, args.u0, cfg)
    _write_path(ps, out, manifest)
    manifest.data["params"]["absorbed_at"] = None if math.isnan(ps.absorbed_at) else ps.absorbed_at


def _simulate_resurrect(args, params, out, manifest, threads):
    cfg = path.PathConfig(dt=args.dt, horizon=args.horizon, seed=derive_seed(args.seed, 1),
                          max_step=args.max_step)
    ps, _ = path.resurrect(params, args.eps, cfg)
    _write_path(ps, out, manifest)
    ex = path.simulate_excursions(params, args.eps, args.n, derive_seed(args.seed, 2), dt=args.dt,
                                  max_step=args.max_step, threads=threads)
    target = os.path.join(out, "excursions.csv")
    rows = write_csv(target, ["start", "length", "first_bounce_time", "max_speed"],
                     [ex.start, ex.length, ex.first_bounce_time, ex.max_speed])
    manifest.add_output(target, rows)


_SIMULATORS = {
    "chain": _simulate_chain,
    "tilted": _simulate_tilted,
    "path": _simulate_path,
    "resurrect": _simulate_resurrect,
}


def _guarded_run(args, argv, params, body):
    """Run ``body(out, manifest, threads)`` and always leave a manifest behind."""
    out = _out_dir(args.out)
    threads = resolve_threads(args.threads)
    manifest = RunManifest(_command_line(argv), _run_params(args, params), __version__)
    try:
        code = body(out, manifest, threads)
    except (SimulationGuardError, QuadratureError) as exc:
        manifest.finish("guard", f"{type(exc).__name__}: {exc}")
        manifest.write(out)
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_GUARD
    manifest.finish("ok" if code == EXIT_OK else "failed")
    manifest.write(out)
    return code


def cmd_simulate(args, argv):
    params = _params(args.c)
    default_n = {"chain": 10_000, "tilted": 100, "path": 1, "resurrect": 1_000}[args.kind]
    if args.n is None:
        args.n = default_n
    if args.n < 1:
        raise _UsageError("--n must be >= 1")

    def body(out, manifest, threads):
        _SIMULATORS[args.kind](args, params, out, manifest, threads)
        return EXIT_OK

    return _guarded_run(args, argv, params, body)


def cmd_overshoot(args, argv):
    params = _params(args.c)

    def body(out, manifest, threads):
        so = ladder.StationaryOvershoot(params.c, table_size=args.table_size, random_state=args.seed,
                                        cache_dir=args.cache).fit()
        ov = ladder.overshoot_at_level(make_rng(args.seed, 41), params, args.level, args.n)
        direct = so.sample(args.n, random_state=make_rng(args.seed, 42))
        target = os.path.join(out, "overshoot.csv")
        rows = write_csv(target, ["source", "value"],
                         [["size_biased"] * args.n + ["level_crossing"] * args.n,
                          np.concatenate([direct, ov.values])])
        manifest.add_output(target, rows)
        d, p = stats.ks_2sample(direct, ov.values)
        summary = {"level": ov.level, "mean_size_biased": float(direct.mean()),
                   "mean_level_crossing": float(ov.values.mean()), "mean_theory": so.mean(),
                   "ks_statistic": d, "ks_pvalue": p}
        manifest.data["summary"] = summary
        print(json.dumps(summary, indent=2))
        return EXIT_OK

    return _guarded_run(args, argv, params, body)


def cmd_verify(args, argv):
    params = _params(args.c)
    only = None
    if args.only:
        only = {int(x) for x in args.only.split(",")}

    def progress(res):
        print(res.line(), file=sys.stderr, flush=True)

    threads = resolve_threads(args.threads)
    report = verify.run_suite(params.c, args.seed, args.suite, args.n, args.inject_k, threads, only, progress)
    payload = report.as_dict()
    payload["version"] = __version__
    text = json.dumps(payload, indent=2, default=_json_default)
    code = EXIT_OK if report.all_passed else EXIT_VERIFY_FAILED
    if args.out is None:
        print(text)
        return code
    out = _out_dir(args.out)
    manifest = RunManifest(_command_line(argv), _run_params(args, params, inject_k=args.inject_k), __version__)
    target = os.path.join(out, "verify_report.json")
    with open(target, "w", encoding="utf-8") as fh:
        fh.write(text + "\n")
    manifest.add_output(target)
    manifest.finish("ok" if code == EXIT_OK else "failed")
    manifest.write(out)
    print(text)
    return code


def _json_default(obj):
    if isinstance(obj, (np.floating, np.integer, np.bool_)):
        return obj.item()
    raise TypeError(f"not serialisable: {type(obj)}")


def _positive_int(text):
    try:
        val = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected an integer, got {text!r}") from None
    if val < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {val}")
    return val


def _seed(text):
    try:
        val = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"seed must be an integer, got {text!r}") from None
    if not 0 <= val < 2**64:
        raise argparse.ArgumentTypeError("seed must lie in [0, 2^64)")
    return val


def build_parser():
    p = argparse.ArgumentParser(prog="langevin-bounce",
                                description="Reflected Langevin process with sub-critical elasticity.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, seed_required):
        sp.add_argument("--c", type=float, default=None,
                        help=f"elasticity in (0, {analytic.C_CR:.6f}); default gives k = 0.1")
        sp.add_argument("--seed", type=_seed, required=seed_required, default=0 if not seed_required else None)
        sp.add_argument("--threads", type=_positive_int, default=None,
                        help=f"worker threads (fallback: ${THREADS_ENV}, then 1)")
        sp.add_argument("--out", metavar="DIR", default=None)

    kc = sub.add_parser("kc", help="tail exponent k(c) and derived constants")
    kc.add_argument("--c", type=float, default=None)
    kc.add_argument("--curve", nargs=3, type=float, metavar=("C_MIN", "C_MAX", "N"))
    kc.add_argument("--out", metavar="DIR", default=None)

    sim = sub.add_parser("simulate", help="simulate chains or paths and write CSV files")
    sim.add_argument("kind", choices=sorted(_SIMULATORS))
    common(sim, seed_required=True)
    sim.add_argument("--n", type=int, default=None, help="number of chains / excursions")
    sim.add_argument("--u0", type=float, default=1.0, help="initial speed")
    sim.add_argument("--x0", type=float, default=0.0, help="initial position (path only)")
    sim.add_argument("--dt", type=float, default=1e-4, help="relative integrator step")
    sim.add_argument("--max-step", dest="max_step", type=float, default=None)
    sim.add_argument("--eps", type=float, default=0.01, help="restart speed (resurrect)")
    sim.add_argument("--horizon", type=float, default=None)
    sim.add_argument("--max-bounces", dest="max_bounces", type=_positive_int, default=None)

    ov = sub.add_parser("overshoot", help="stationary overshoot: size-biased table vs level crossing")
    common(ov, seed_required=True)
    ov.add_argument("--n", type=_positive_int, default=10_000)
    ov.add_argument("--level", type=float, default=None, help="default: 20 tilted drifts")
    ov.add_argument("--table-size", dest="table_size", type=_positive_int, default=ladder.DEFAULT_TABLE_SIZE)
    ov.add_argument("--cache", metavar="DIR", default=None, help="ladder table cache directory")

    ver = sub.add_parser("verify", help="run the acceptance suite")
    common(ver, seed_required=False)
    ver.add_argument("--n", type=_positive_int, default=None, help="base Monte Carlo size")
    ver.add_argument("--suite", choices=sorted(verify.SUITES), default="quick")
    ver.add_argument("--only", default=None, help="comma-separated criterion ids")
    ver.add_argument("--inject-k", dest="inject_k", type=float, default=None, help=argparse.SUPPRESS)
    return p


def _apply_defaults(args):
    if args.command != "simulate":
        return
    if args.horizon is None:
        args.horizon = {"path": 10.0, "resurrect": 1.0}.get(args.kind)
    if args.max_bounces is None:
        args.max_bounces = 100 if args.kind == "tilted" else 100_000
    # path starts are validated against the admissible set by the integrator
    names = ("dt", "eps") if args.kind == "path" else ("u0", "dt", "eps")
    for name in names:
        val = getattr(args, name)
        if not (math.isfinite(val) and val > 0):
            raise _UsageError(f"--{name} must be a positive number, got {val}")


def main(argv=None):
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if exc.code is not None else EXIT_OK
    handlers = {"kc": cmd_kc, "simulate": cmd_simulate, "overshoot": cmd_overshoot, "verify": cmd_verify}
    try:
        _apply_defaults(args)
        return handlers[args.command](args, argv)
    except (_UsageError, DomainError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (SimulationGuardError, QuadratureError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_GUARD


if __name__ == "__main__":
    sys.exit(main())
