"""`fhl` command line.

Every command writes <out>/<command>.json (schema_version, command, args,
result and, unless --no-meta, a meta block with timestamp, version, thread
count and run time), plot-ready CSV where the result has a profile, and PNG
figures unless --no-figures.  The JSON is also printed to stdout.

Global options may also come from FHL_<NAME> environment variables
(FHL_SEED, FHL_THREADS, FHL_RESOLUTION, FHL_TOL, FHL_OUT, FHL_STRICT,
FHL_NO_META); command-line values win.
"""
from __future__ import annotations

import argparse
import json
import logging
import math
import os
import sys
import time
from dataclasses import asdict, is_dataclass
from pathlib import Path

import numpy as np

from . import __version__
from . import gallery as gal
from .setmodel import SetSpec, build_set

SCHEMA_VERSION = 1
EXIT_OK, EXIT_ERROR, EXIT_FAIL = 0, 1, 2

log = logging.getLogger("fhlab")


class UsageError(Exception):
    pass


# ---------------------------------------------------------------------------
# helpers


def _env(name, default, conv=str):
    raw = os.environ.get("FHL_" + name.upper())
    if raw is None:
        return default
    if conv is bool:
        return raw.strip().lower() in ("1", "true", "yes", "on")
    return conv(raw)


def _clean(x):
    """JSON-safe copy: numpy scalars to Python, non-finite floats to strings."""
    if is_dataclass(x) and not isinstance(x, type):
        x = x.to_dict() if hasattr(x, "to_dict") else asdict(x)
    if isinstance(x, dict):
        return {str(k): _clean(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_clean(v) for v in x]
    if isinstance(x, np.ndarray):
        return _clean(x.tolist())
    if isinstance(x, np.generic):
        x = x.item()
    if isinstance(x, float) and not math.isfinite(x):
        return str(x)
    return x


def load_set(ref: str, budget: int = 2**14):
    """A gallery name or a path to a set-spec JSON file."""
    if ref in gal.GALLERY:
        return gal.load(ref, budget), gal.metadata(ref)
    p = Path(ref)
    if p.exists():
        return build_set(SetSpec.load(p), budget), {}
    stem = p.stem
    if stem in gal.GALLERY:
        # the bundled sets are also addressable as <name>.json
        return gal.load(stem, budget), gal.metadata(stem)
    raise UsageError(f"no set file or gallery entry named {ref!r}")


class Run:
    def __init__(self, args):
        self.args = args
        self.out = Path(args.out)
        self.out.mkdir(parents=True, exist_ok=True)
        self.t0 = time.time()
        self.files: list[str] = []

    def path(self, suffix: str) -> Path:
        p = self.out / f"{self.args.command_name}{suffix}"
        self.files.append(p.name)
        return p

    def figure(self, fn, *a, suffix=".png"):
        if self.args.no_figures:
            return
        try:
            fn(*a, self.path(suffix))
        except ValueError as exc:
            log.info("figure skipped: %s", exc)

    def finish(self, result) -> dict:
        recorded = {
            k: v for k, v in sorted(vars(self.args).items())
            if k not in ("func", "threads", "out", "no_meta", "no_figures", "verbose")
        }
        doc = {
            "schema_version": SCHEMA_VERSION,
            "command": self.args.command_name,
            "args": _clean(recorded),
            "result": _clean(result),
            "files": sorted(self.files),
        }
        if not self.args.no_meta:
            doc["meta"] = {
                "timestamp": time.strftime("%Y-%m-%dT%H:%M:%S%z"),
                "version": __version__,
                "threads": self.args.threads,
                "elapsed_s": round(time.time() - self.t0, 3),
            }
        text = json.dumps(doc, indent=2, sort_keys=True)
        (self.out / f"{self.args.command_name}.json").write_text(text + "\n")
        print(text)
        return doc


def _params(args, n):
    from .hardy import HardyParams

    if args.n is not None and args.n != n:
        raise UsageError(f"--n {args.n} but the set lives in R^{n}")
    return HardyParams(n, args.p, args.q, args.beta)


# ---------------------------------------------------------------------------
# commands


def cmd_dim(args):
    from . import report
    from .dimension import estimate_assouad_lower, estimate_assouad_upper, estimate_minkowski, write_profile_csv

    E, _ = load_set(args.set)
    run = Run(args)
    kw = dict(centers=args.centers, R_levels=args.r_levels, k_range=(args.k_min, args.k_max), seed=args.seed, tol=args.tol)
    if args.kind == "assouad-upper":
        est = estimate_assouad_upper(E, **kw)
    elif args.kind == "assouad-lower":
        est = estimate_assouad_lower(E, **kw)
    else:
        up, lo = estimate_minkowski(E, tol=args.tol)
        est = up if args.kind == "minkowski-upper" else lo
    write_profile_csv(est, run.path(".csv"))
    run.figure(report.covering_profiles, est)
    run.finish(est)
    return EXIT_OK


def _condition(args, fn, **extra):
    from . import report

    E, _ = load_set(args.set)
    run = Run(args)
    rep = fn(E, args.s, seed=args.seed, **extra)
    rep.write_csv(run.path(".csv"))
    run.figure(report.constant_profile, rep)
    run.finish(rep)
    return EXIT_FAIL if args.strict and rep.verdict == "Fail" else EXIT_OK


def cmd_aikawa(args):
    from .conditions import aikawa_check, aikawa_threshold

    if args.threshold:
        E, _ = load_set(args.set)
        run = Run(args)
        s, calls = aikawa_threshold(E, seed=args.seed, resolution=args.resolution, threads=args.threads)
        run.finish({"threshold": s, "calls": calls})
        return EXIT_OK
    if args.s is None:
        raise UsageError("aikawa needs --s or --threshold")
    return _condition(args, aikawa_check, resolution=args.resolution, threads=args.threads)


def cmd_ps(args):
    from .conditions import ps_check

    return _condition(args, ps_check)


def cmd_equiv(args):
    from .conditions import equiv_check
    from .dimension import estimate_assouad_upper, porosity_check

    E, meta = load_set(args.set)
    dim = meta.get("dim_A")
    if dim is None:
        dim = estimate_assouad_upper(E, seed=args.seed).value
    porous = meta.get("porous")
    if porous is None:
        porous = porosity_check(E, seed=args.seed).porous
    return _condition(args, equiv_check, resolution=args.resolution, dim_upper=dim, porous=porous, tol=args.tol)


def cmd_a1(args):
    from .conditions import a1_check

    return _condition(args, a1_check, resolution=args.resolution)


def cmd_porosity(args):
    from .dimension import porosity_check

    E, _ = load_set(args.set)
    run = Run(args)
    rep = porosity_check(E, seed=args.seed)
    run.finish(rep)
    return EXIT_FAIL if args.strict and not rep.porous else EXIT_OK


def cmd_whitney(args):
    from . import report
    from .field import Box
    from .whitney import probe_coverage, whitney_decompose, whitney_validate, write_csv

    E, _ = load_set(args.set)
    run = Run(args)
    box = Box(*E.box)
    dec = whitney_decompose(E, box, max_generation=args.depth)
    bad = whitney_validate(dec, E)
    cov = probe_coverage(dec, E, seed=args.seed)
    write_csv(dec, run.path(".csv"))
    if E.n == 2:
        run.figure(report.whitney_cubes, dec)
    result = {
        "cubes": len(dec),
        "counts": {str(k): v for k, v in sorted(dec.counts.items())},
        "root_generation": dec.root_generation,
        "truncated_cubes": dec.truncated_cubes,
        "uncovered_volume": dec.uncovered_volume,
        "violations": bad[:50],
        "violation_count": len(bad),
        "coverage": cov,
    }
    run.finish(result)
    failed = bool(bad) or not cov["ok"]
    return EXIT_FAIL if args.strict and failed else EXIT_OK


def parse_family(text: str, n: int, params=None, E=None):
    """bump:C,R[,PROFILE]  sphere-fj:J  radial-power:GAMMA[,MODE]

    C is a scalar (repeated over all coordinates) or coordinates joined by
    ';'.  The bump profile defaults to the tent max(0, 1 - |x - C|/R)."""
    from .hardy import _geometry, family_bump, family_radial_power, family_sphere_fj

    name, _, rest = text.partition(":")
    parts = [p for p in rest.split(",") if p]
    if name == "bump":
        if len(parts) < 2:
            raise UsageError("bump needs C,R")
        c = [float(v) for v in parts[0].split(";")]
        center = np.full(n, c[0]) if len(c) == 1 else np.array(c)
        if len(center) != n:
            raise UsageError(f"bump centre has {len(center)} coordinates, need {n}")
        profile = parts[2] if len(parts) > 2 else "tent"
        return family_bump(center, float(parts[1]), profile=profile)
    if name == "sphere-fj":
        geo = _geometry(E) if E is not None else None
        if geo is not None and geo[0] == "sphere":
            return family_sphere_fj(int(parts[0]), params, center=geo[1], radius=geo[2])
        return family_sphere_fj(int(parts[0]), params)
    if name == "radial-power":
        mode = parts[1] if len(parts) > 1 else "point"
        return family_radial_power(np.zeros(n), float(parts[0]), mode=mode)
    raise UsageError(f"unknown family {name!r}")


def cmd_hardy_eval(args):
    from .hardy import evaluate_functional

    E, _ = load_set(args.set)
    params = _params(args, E.n)
    run = Run(args)
    f = parse_family(args.family, E.n, params, E)
    sv = evaluate_functional(f, E, params, resolution=args.resolution, method=args.method, threads=args.threads)
    run.finish(sv)
    return EXIT_OK


def cmd_hardy_optimize(args):
    from . import report
    from .hardy import estimate_constant

    E, _ = load_set(args.set)
    params = _params(args, E.n)
    run = Run(args)
    best, trace = estimate_constant(
        E, params, strategy=args.strategy, budget=args.budget, seed=args.seed,
        resolution=args.resolution, trace_path=run.path("_trace.csv"),
    )
    run.figure(report.ascent_trace, trace)
    run.finish({"best": best, "trace": [asdict(r) for r in trace]})
    return EXIT_OK


COUNTEREXAMPLES = {
    # family -> (default set, (p, q, beta), member values)
    "sphere-fj": ("sphere", (2.0, 2.0, 2.0), list(range(3, 8))),
    "radial-power": ("line3", (2.0, 2.0, 0.0), list(range(1, 8))),
    "bump": ("line3", (2.0, 3.0, 0.0), [2.0**-k for k in range(2, 7)]),
}


def cmd_hardy_counterexample(args):
    from . import report
    from .hardy import HardyParams, sweep_family, write_trace, TraceRow

    set_name, (p, q, b), values = COUNTEREXAMPLES[args.family]
    E, _ = load_set(args.set or set_name)
    p = args.p if args.p is not None else p
    q = args.q if args.q is not None else q
    b = args.beta if args.beta is not None else b
    if args.n is not None and args.n != E.n:
        raise UsageError(f"--n {args.n} but the set lives in R^{E.n}")
    params = HardyParams(E.n, p, q, b)
    run = Run(args)
    tr = sweep_family(E, params, args.family, values, resolution=args.resolution)
    write_trace([TraceRow(i, k, float("nan"), float("nan"), f"x={x:g}") for i, (x, k) in enumerate(zip(tr.x, tr.kappa))],
                run.path(".csv"))
    run.figure(report.family_traces, [tr])
    steps = [b_ / a_ for a_, b_ in zip(tr.kappa[:-1], tr.kappa[1:])]
    run.finish({"params": asdict(params), "trace": tr, "step_factors": steps, "slope": tr.slope})
    return EXIT_OK


def _dims(E, meta, args):
    from .dimension import estimate_assouad, estimate_minkowski, porosity_check
    from .verdict import dims_from_estimates

    up, lo = estimate_assouad(E, seed=args.seed, tol=args.tol)
    mk = None
    if E.bounded and E.diameter > 0:
        mk = estimate_minkowski(E, tol=args.tol)[1]
    por = porosity_check(E, seed=args.seed)
    given = meta if args.use_metadata else {k: meta[k] for k in ("dim_H",) if k in meta}
    return dims_from_estimates(up, lo, mk, por, E, given)


def cmd_verdict(args):
    from .hardy import sweep_family, critical_power, _geometry
    from .verdict import cross_check, predict

    E, meta = load_set(args.set)
    params = _params(args, E.n)
    run = Run(args)
    ds = _dims(E, meta, args)
    v = predict(params, ds)
    result = {"verdict": v}
    if args.cross_check:
        traces = []
        geo = _geometry(E)
        if geo is not None and geo[0] == "sphere":
            traces.append(sweep_family(E, params, "sphere-fj", range(3, 8)))
        if critical_power(E, params) is not None:
            traces.append(sweep_family(E, params, "radial-power", range(1, 7)))
        traces.append(sweep_family(E, params, "bump", [2.0**-k for k in range(2, 7)]))
        result["evidence"] = traces
        result["consistency"] = cross_check(v, traces)
    run.finish(result)
    return EXIT_FAIL if args.strict and v.prediction == "Fails" else EXIT_OK


def cmd_gallery(args):
    from . import report

    if args.export:
        paths = gal.export(args.export)
        print("\n".join(str(p) for p in paths))
        return EXIT_OK
    run = Run(args)
    rep = gal.run_gallery(seed=args.seed, threads=args.threads, sets=args.sets)
    with open(run.path("_verdicts.csv"), "w") as fh:
        fh.write("set,source,n,p,q,beta,prediction,rule,conflict\n")
        for v in rep["verdicts"]:
            fh.write(f"{v['set']},{v['source']},{v['n']},{v['p']},{v['q']},{v['beta']},{v['prediction']},{v['rule']},{v['conflict']}\n")
    run.figure(report.gallery_dimensions, rep)
    run.finish(rep)
    return EXIT_FAIL if args.strict and rep["conflicts"] else EXIT_OK


# ---------------------------------------------------------------------------
# parser


def _common() -> argparse.ArgumentParser:
    c = argparse.ArgumentParser(add_help=False)
    g = c.add_argument_group("global options")
    g.add_argument("--seed", type=int, default=_env("seed", 0, int))
    g.add_argument("--threads", type=int, default=_env("threads", 1, int))
    g.add_argument("--resolution", type=int, default=_env("resolution", 8, int),
                   help="base grid cells per axis for quadrature")
    g.add_argument("--tol", type=float, default=_env("tol", 0.15, float), help="dimension tolerance")
    g.add_argument("--out", default=_env("out", "fhl-out"), help="report directory")
    g.add_argument("--strict", action="store_true", default=_env("strict", False, bool),
                   help="exit 2 when a check fails")
    g.add_argument("--no-meta", action="store_true", default=_env("no_meta", False, bool),
                   help="omit timestamps and timing from the JSON")
    g.add_argument("--no-figures", action="store_true", default=_env("no_figures", False, bool))
    g.add_argument("-v", "--verbose", action="store_true")
    return c


def _hardy_args(p, required=True):
    p.add_argument("--n", type=int)
    p.add_argument("--p", type=float, required=required)
    p.add_argument("--q", type=float, required=required)
    p.add_argument("--beta", type=float, default=None if not required else 0.0)


def build_parser() -> argparse.ArgumentParser:
    common = _common()
    ap = argparse.ArgumentParser(prog="fhl", description="fractal dimensions and weighted Hardy-Sobolev checks")
    ap.add_argument("--version", action="version", version=__version__)
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("dim", parents=[common], help="dimension estimate")
    p.add_argument("--set", required=True)
    p.add_argument("--kind", default="assouad-upper",
                   choices=["assouad-upper", "assouad-lower", "minkowski-upper", "minkowski-lower"])
    p.add_argument("--centers", type=int, default=8)
    p.add_argument("--r-levels", type=int, default=4)
    p.add_argument("--k-min", type=int, default=2)
    p.add_argument("--k-max", type=int, default=7)
    p.set_defaults(func=cmd_dim)

    for name, fn, hlp in (
        ("aikawa", cmd_aikawa, "Aikawa integral condition"),
        ("ps-check", cmd_ps, "annular-volume P(s) condition"),
        ("equiv-check", cmd_equiv, "distance-integral comparability"),
        ("a1-check", cmd_a1, "A1 weight condition for dist^(-s)"),
    ):
        p = sub.add_parser(name, parents=[common], help=hlp)
        p.add_argument("--set", required=True)
        p.add_argument("--s", type=float, required=name != "aikawa")
        if name == "aikawa":
            p.add_argument("--threshold", action="store_true", help="bisect the smallest passing s")
        p.set_defaults(func=fn)

    p = sub.add_parser("porosity", parents=[common], help="porosity check")
    p.add_argument("--set", required=True)
    p.set_defaults(func=cmd_porosity)

    p = sub.add_parser("whitney", parents=[common], help="Whitney decomposition and its checks")
    p.add_argument("--set", required=True)
    p.add_argument("--depth", type=int, default=8)
    p.set_defaults(func=cmd_whitney)

    hp = sub.add_parser("hardy", help="Hardy-Sobolev functionals")
    hs = hp.add_subparsers(dest="hardy_command", required=True)
    p = hs.add_parser("eval", parents=[common], help="both sides for one test function")
    p.add_argument("--set", required=True)
    _hardy_args(p)
    p.add_argument("--family", required=True, help="bump:C,R[,PROFILE] | sphere-fj:J | radial-power:GAMMA[,MODE]")
    p.add_argument("--method", default="auto", choices=["auto", "reduced", "grid"])
    p.set_defaults(func=cmd_hardy_eval)
    p = hs.add_parser("optimize", parents=[common], help="lower bound for the best constant")
    p.add_argument("--set", required=True)
    _hardy_args(p)
    p.add_argument("--strategy", default="FamilySweep", choices=["FamilySweep", "GridAscent"])
    p.add_argument("--budget", type=int, default=24)
    p.set_defaults(func=cmd_hardy_optimize)
    p = hs.add_parser("counterexample", parents=[common], help="kappa along a concentrating family")
    p.add_argument("--family", default="sphere-fj", choices=sorted(COUNTEREXAMPLES))
    p.add_argument("--set")
    _hardy_args(p, required=False)
    p.set_defaults(func=cmd_hardy_counterexample)

    p = sub.add_parser("verdict", parents=[common], help="predicted status from dimension estimates")
    p.add_argument("--set", required=True)
    _hardy_args(p)
    p.add_argument("--use-metadata", action="store_true", help="use known dimensions of gallery sets")
    p.add_argument("--cross-check", action="store_true", help="compare with kappa along families")
    p.set_defaults(func=cmd_verdict)

    p = sub.add_parser("gallery", parents=[common], help="sweep over the bundled sets")
    p.add_argument("--sets", nargs="*", choices=gal.names())
    p.add_argument("--export", metavar="DIR", help="write the bundled set specs as JSON and exit")
    p.set_defaults(func=cmd_gallery)
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as exc:
        return EXIT_ERROR if exc.code not in (0, None) else EXIT_OK
    args.command_name = args.command if args.command != "hardy" else f"hardy_{args.hardy_command}"
    args.command_name = args.command_name.replace("-", "_")
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"fhl: {exc}", file=sys.stderr)
        return EXIT_ERROR
    except Exception as exc:  # reported, not raised: the exit code carries it
        log.debug("failure", exc_info=True)
        print(f"fhl: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_ERROR


run = main

if __name__ == "__main__":
    sys.exit(main())
