"""Command line: ``strongopen <subcommand> ...``.

Exit codes: 0 success, 1 an experiment verdict failed, 2 parse or usage
error, 3 I/O error.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from .cache import ENV_CACHE_DIR, Cache
from .expr import ExprError, parse_expr
from .metric import MetricError, Polydisc
from .scenario import (EXIT_FAIL, EXIT_IO, EXIT_OK, EXIT_PARSE, ScenarioError, clean, fmt, list_bundled,
                       parse_metric, parse_point, parse_section, resolve_scenario_path, run_scenario)


def _json_print(payload) -> None:
    print(json.dumps(clean(payload), indent=2, sort_keys=True))


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--tol", type=float, default=None, help="absolute quadrature tolerance")
    p.add_argument("--seed", type=int, default=None, help="random seed for sampled checks")
    p.add_argument("--no-cache", action="store_true", help="bypass the result cache")
    p.add_argument("--cache-dir", default=None, help=f"cache directory (default: ${ENV_CACHE_DIR})")
    p.add_argument("--out", default=None, help="output directory for reports")
    p.add_argument("--jobs", type=int, default=1, help="worker threads inside quadrature")


def _add_model(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("metric and section")
    g.add_argument("--exponents", default="0.5",
                   help="monomial model exponents: rows separated by ';', entries by ',' (e.g. '0.5' or '1,0;0,1')")
    g.add_argument("--coeffs", default=None, help="comma-separated positive coefficients, one per row")
    g.add_argument("--origin", default=None, help="comma-separated coordinates of the singular point")
    g.add_argument("--entries", default=None,
                   help="general metric as a JSON matrix of expression strings (overrides --exponents)")
    g.add_argument("--dim", type=int, default=None, help="number of variables for --entries")
    g.add_argument("--radius", type=float, default=1.0, help="polydisc radius of the domain")
    g.add_argument("--section", default="1",
                   help="section as an expression, or a JSON list with one expression per component")
    g.add_argument("--point", default=None, help="comma-separated coordinates of the point o")


def _floats(text):
    return [float(x) for x in text.split(",") if x.strip()]


def _coords(text):
    return [complex(x.strip().replace("i", "j")) for x in text.split(",") if x.strip()]


def _model_from_args(args):
    if args.entries:
        entries = json.loads(args.entries)
        dim = args.dim or 1
        spec = {"kind": "matrix", "dim": dim, "entries": entries,
                "domain": {"radii": [args.radius] * dim}}
        if args.origin:
            spec["singular_points"] = [[[c.real, c.imag] for c in _coords(args.origin)]]
    else:
        rows = [_floats(r) for r in args.exponents.split(";")]
        spec = {"kind": "monomial", "exponents": rows}
        n = len(rows[0])
        origin = _coords(args.origin) if args.origin else [0j] * n
        spec["origin"] = [[c.real, c.imag] for c in origin]
        spec["domain"] = {"center": spec["origin"], "radii": [args.radius] * n}
        if args.coeffs:
            spec["coeffs"] = _floats(args.coeffs)
    h = parse_metric(spec)
    sec = args.section
    if sec.lstrip().startswith("["):
        sec = json.loads(sec)
    F = parse_section(sec, h.dim)
    if args.point:
        o = parse_point([[c.real, c.imag] for c in _coords(args.point)], h.dim)
    elif h.singular_points:
        o = h.singular_points[0]
    else:
        o = h.domain.center
    return h, F, o


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="strongopen",
                                     description="Singular hermitian metrics, multiplier submodules and strong openness.")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="run a scenario file (or a bundled scenario by name)")
    p.add_argument("scenario", help=f"path to a scenario JSON file, or one of: {', '.join(list_bundled())}")
    _add_common(p)

    p = sub.add_parser("theta", help="effectiveness function theta(beta)")
    p.add_argument("--beta", type=float, required=True)
    p.add_argument("--identity", action="store_true", help="also report the substitution-identity residual")
    _add_common(p)

    p = sub.add_parser("g", help="g_beta(t) = e^{-1} E1((1 + beta) t)")
    p.add_argument("--beta", type=float, required=True)
    p.add_argument("--t", type=float, required=True)
    _add_common(p)

    p = sub.add_parser("exponent", help="bracket the singularity exponent c^F_o(h)")
    p.add_argument("--resolution", type=float, default=0.02)
    p.add_argument("--beta-max", type=float, default=16.0)
    _add_model(p)
    _add_common(p)

    p = sub.add_parser("gcurve", help="tail curve G_beta(t) and its lower bound")
    p.add_argument("--beta", type=float, required=True)
    p.add_argument("--t-max", type=float, default=4.0)
    p.add_argument("--num", type=int, default=50)
    p.add_argument("--method", choices=["analytic", "quadrature"], default="analytic")
    _add_model(p)
    _add_common(p)

    p = sub.add_parser("effectiveness", help="compare theta(beta) with energy / capacity")
    p.add_argument("--beta", type=float, required=True)
    p.add_argument("--resolution", type=float, default=1e-3)
    _add_model(p)
    _add_common(p)

    p = sub.add_parser("stability", help="L^p gaps along a monotone metric sequence")
    p.add_argument("--p", type=float, default=1.2)
    p.add_argument("--rule", choices=["Scale", "Offset", "Mollify"], default="Scale")
    p.add_argument("--j", default="2,4,8,16,32", help="comma-separated indices")
    _add_model(p)
    _add_common(p)

    p = sub.add_parser("lelong", help="Lelong number of a weight at a point")
    p.add_argument("--phi", required=True, help="weight expression, e.g. 'log(abs2(z1))'")
    p.add_argument("--center", default="0", help="comma-separated coordinates")
    p.add_argument("--r-min", type=float, default=1e-6)
    p.add_argument("--r-max", type=float, default=0.5)
    _add_common(p)

    p = sub.add_parser("bergman", help="Bergman approximation phi_m of phi = 2a log|z|")
    p.add_argument("--a", type=float, required=True)
    p.add_argument("--m", type=int, required=True)
    p.add_argument("--z", type=complex, required=True)
    _add_common(p)
    return parser


def _cache(args) -> Cache:
    return Cache(args.cache_dir, enabled=not args.no_cache)


def _write_out(args, name, csv=None, payload=None):
    if not args.out:
        return
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    if csv is not None:
        (out / f"{name}.csv").write_text(csv, encoding="utf-8", newline="\n")
    if payload is not None:
        (out / f"{name}.json").write_text(json.dumps(clean(payload), indent=2, sort_keys=True) + "\n",
                                          encoding="utf-8", newline="\n")


def _cmd_run(args) -> int:
    try:
        path = resolve_scenario_path(args.scenario)
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    out = args.out or f"out-{Path(path).stem}"
    return run_scenario(path, out, tol=args.tol, seed=args.seed, jobs=args.jobs, cache=_cache(args))


def _cmd_theta(args) -> int:
    from .openness import theta, theta_identity_residual

    tol = args.tol or 1e-8
    tv = theta(args.beta, tol)
    payload = tv.to_dict()
    if args.identity:
        payload["identity_residual"] = theta_identity_residual(args.beta, tol)
    print(f"theta({fmt(args.beta)}) = {fmt(tv.value)} +- {tv.quad_error:.3g}")
    _write_out(args, "theta", payload=payload)
    return EXIT_OK


def _cmd_g(args) -> int:
    from .openness import g_beta, g_beta_quadrature

    v = float(g_beta(args.beta, args.t))
    q = g_beta_quadrature(args.beta, args.t)
    print(f"g_{fmt(args.beta)}({fmt(args.t)}) = {fmt(v)} (quadrature cross-check {fmt(q)}, difference {abs(v - q):.3g})")
    _write_out(args, "g", payload={"beta": args.beta, "t": args.t, "value": v, "quadrature": q})
    return EXIT_OK


def _cmd_exponent(args) -> int:
    from .openness import singularity_exponent

    h, F, o = _model_from_args(args)
    br = singularity_exponent(h, F, o, args.resolution, args.beta_max)
    _json_print(br.to_dict())
    _write_out(args, "exponent", payload=br.to_dict())
    return EXIT_OK


def _cmd_gcurve(args) -> int:
    from .openness import g_curve, lower_bound_check

    h, F, o = _model_from_args(args)
    region = Polydisc(o, (args.radius,) * h.dim)
    t = np.linspace(0.0, args.t_max, args.num)
    curve = g_curve(h, F, args.beta, o, region, t, method=args.method, tol=args.tol or 1e-9, jobs=args.jobs)
    rep = lower_bound_check(curve) if len(curve.samples) >= 10 else None
    sys.stdout.write(curve.to_csv())
    _write_out(args, "gcurve", csv=curve.to_csv(), payload=rep.to_dict() if rep else None)
    return EXIT_OK if rep is None or rep.passed else EXIT_FAIL


def _cmd_effectiveness(args) -> int:
    from .openness import effectiveness_verdict

    h, F, o = _model_from_args(args)
    region = Polydisc(o, (args.radius,) * h.dim)
    rep = effectiveness_verdict(h, F, o, region, args.beta, args.resolution, tol=args.tol or 1e-9,
                                seed=args.seed or 0)
    _json_print(rep.to_dict())
    _write_out(args, "effectiveness", payload=rep.to_dict())
    return EXIT_OK if rep.sound else EXIT_FAIL


def _cmd_stability(args) -> int:
    from .stability import MetricSequenceSpec, build_sequence, stability_lp

    h, F, o = _model_from_args(args)
    js = [int(j) for j in args.j.split(",")]
    seq = build_sequence(MetricSequenceSpec(h, args.rule, (min(js), max(js)), seed=args.seed or 0), js)
    rep = stability_lp(h, seq, F, args.p, h.domain, o, tol=args.tol or 1e-8, jobs=args.jobs)
    sys.stdout.write(rep.to_csv())
    print(f"verdict: {rep.verdict}", file=sys.stderr)
    _write_out(args, "stability", csv=rep.to_csv(), payload=rep.to_dict())
    return EXIT_OK if rep.verdict == "Decaying" else EXIT_FAIL


def _cmd_lelong(args) -> int:
    from .psh import lelong_number

    center = _coords(args.center)
    phi = parse_expr(args.phi, params=(), dim=len(center))
    est = lelong_number(phi, center, args.r_min, args.r_max)
    _json_print(est.to_dict())
    _write_out(args, "lelong", payload=est.to_dict())
    return EXIT_OK


def _cmd_bergman(args) -> int:
    from .psh import bergman_log

    v = bergman_log(args.a, args.m, args.z)
    exact = 2 * args.a * np.log(abs(args.z)) if args.z != 0 else -np.inf
    print(f"phi_{args.m}({args.z}) = {fmt(v)}   phi = {fmt(exact)}   difference = {fmt(v - exact)}")
    _write_out(args, "bergman", payload={"a": args.a, "m": args.m, "z": args.z, "phi_m": v, "phi": exact})
    return EXIT_OK


COMMANDS = {
    "run": _cmd_run, "theta": _cmd_theta, "g": _cmd_g, "exponent": _cmd_exponent, "gcurve": _cmd_gcurve,
    "effectiveness": _cmd_effectiveness, "stability": _cmd_stability, "lelong": _cmd_lelong,
    "bergman": _cmd_bergman,
}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_PARSE
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except (ScenarioError, ExprError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_PARSE
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    except (MetricError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_PARSE


if __name__ == "__main__":
    sys.exit(main())
