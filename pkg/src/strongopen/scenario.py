"""Scenario files: a JSON document naming a metric, sections, a region and experiments.

See ``docs/formats.md`` for the schema.  ``run_scenario`` writes one report
per experiment plus ``manifest.json`` and returns the process exit code.
"""

from __future__ import annotations

import hashlib
import json
import math
import os
import platform
import sys
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__, _kernels
from .cache import Cache, cache_key
from .expr import ExprError, parse_expr
from .metric import MetricError, Polydisc, Section, SingularMetric, section_norm2_values
from .openness import (ProjectionOracleConfig, capacity_C, differential_inequality_check,
                       effectiveness_verdict, g_curve, lower_bound_check, singularity_exponent, theta,
                       theta_identity_residual)
from .psh import lelong_number
from .quad import integrability_at, integrate
from .stability import MetricSequenceSpec, SectionSequence, build_sequence, stability_lp, union_sheaf_check

EXIT_OK, EXIT_FAIL, EXIT_PARSE, EXIT_IO = 0, 1, 2, 3

EXPERIMENT_TYPES = ("theta", "gcurve", "exponent", "capacity", "effectiveness", "stability",
                    "union_sheaf", "lelong", "integrability", "integral")


class ScenarioError(ValueError):
    """Malformed scenario document."""


# ---------------------------------------------------------------------------
# parsing
# ---------------------------------------------------------------------------

def parse_complex(x, what="coordinate") -> complex:
    if isinstance(x, bool):
        raise ScenarioError(f"{what}: expected a number")
    if isinstance(x, (int, float)):
        return complex(x)
    if isinstance(x, (list, tuple)) and len(x) == 2 and all(isinstance(v, (int, float)) for v in x):
        return complex(x[0], x[1])
    if isinstance(x, str):
        try:
            return complex(x.replace(" ", "").replace("i", "j"))
        except ValueError:
            pass
    raise ScenarioError(f"{what}: expected a number, [re, im] pair or complex literal, got {x!r}")


def parse_point(x, dim: int | None = None, what="point") -> tuple:
    if not isinstance(x, (list, tuple)):
        x = [x]
    p = tuple(parse_complex(c, what) for c in x)
    if dim is not None and len(p) != dim:
        raise ScenarioError(f"{what} has {len(p)} coordinates, expected {dim}")
    return p


def parse_polydisc(d, dim: int | None = None) -> Polydisc:
    if not isinstance(d, dict) or "radii" not in d:
        raise ScenarioError("region must be an object with 'radii' (and optional 'center')")
    radii = d["radii"] if isinstance(d["radii"], list) else [d["radii"]]
    n = dim or len(radii)
    if len(radii) == 1 and n > 1:
        radii = radii * n
    center = parse_point(d.get("center", [0] * n), n, "region center")
    try:
        return Polydisc(center, tuple(float(r) for r in radii))
    except (TypeError, ValueError) as exc:
        raise ScenarioError(f"region: {exc}") from None


def parse_metric(d) -> SingularMetric:
    if not isinstance(d, dict):
        raise ScenarioError("metric must be an object")
    kind = d.get("kind", "monomial")
    domain = parse_polydisc(d["domain"]) if "domain" in d else None
    try:
        if kind == "monomial":
            a = d.get("exponents")
            if a is None:
                raise ScenarioError("monomial metric needs 'exponents'")
            a2 = np.atleast_2d(np.asarray(a, dtype=float))
            n = a2.shape[1]
            origin = parse_point(d["origin"], n, "origin") if "origin" in d else None
            if domain is None:
                domain = Polydisc(origin or (0j,) * n, (1.0,) * n)
            return SingularMetric.monomial(a2.tolist(), origin, d.get("coeffs"), domain)
        if kind in ("matrix", "diagonal"):
            dim = int(d.get("dim", 1))
            entries = d.get("entries")
            if not isinstance(entries, list) or not entries:
                raise ScenarioError(f"{kind} metric needs a non-empty 'entries' list")
            sing = [parse_point(p, dim, "singular point") for p in d.get("singular_points", [])]
            if kind == "diagonal":
                return SingularMetric.diagonal(entries, dim, domain, sing)
            return SingularMetric.from_strings(entries, dim, domain, sing)
    except (ExprError, MetricError) as exc:
        raise ScenarioError(f"metric: {exc}") from exc
    raise ScenarioError(f"unknown metric kind {kind!r}")


def parse_section(spec, dim: int) -> Section:
    texts = [spec] if isinstance(spec, str) else spec
    if not isinstance(texts, list) or not all(isinstance(t, str) for t in texts):
        raise ScenarioError("a section is a string or a list of strings (one per component)")
    try:
        return Section.from_strings(texts, dim)
    except (ExprError, MetricError) as exc:
        raise ScenarioError(f"section {texts!r}: {exc}") from exc


@dataclass
class Scenario:
    name: str
    metric: SingularMetric
    sections: dict
    region: Polydisc
    experiments: list
    tolerances: dict
    seed: int
    raw: dict = field(repr=False, default_factory=dict)

    def section(self, name: str) -> Section:
        if name not in self.sections:
            raise ScenarioError(f"unknown section {name!r}")
        return self.sections[name]

    def default_point(self):
        if self.metric.singular_points:
            return self.metric.singular_points[0]
        return self.region.center


DEFAULT_TOLERANCES = {"quad": 1e-9, "theta": 1e-8, "resolution": 0.02}


def load_scenario(source) -> Scenario:
    """Parse a scenario from a path, a JSON string or an already-decoded dict."""
    if isinstance(source, dict):
        raw = source
    else:
        text = Path(source).read_text(encoding="utf-8") if not str(source).lstrip().startswith("{") else str(source)
        try:
            raw = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ScenarioError(f"invalid JSON at line {exc.lineno} column {exc.colno}: {exc.msg}") from None
    return parse_scenario(raw)


def parse_scenario(raw: dict) -> Scenario:
    if not isinstance(raw, dict):
        raise ScenarioError("scenario must be a JSON object")
    for key in ("name", "metric"):
        if key not in raw:
            raise ScenarioError(f"scenario is missing {key!r}")
    metric = parse_metric(raw["metric"])
    sections = {k: parse_section(v, metric.dim) for k, v in raw.get("sections", {}).items()}
    for s in sections.values():
        if s.rank != metric.rank:
            raise ScenarioError("section rank does not match metric rank")
    region = parse_polydisc(raw["region"], metric.dim) if "region" in raw else metric.domain
    experiments = raw.get("experiments", [])
    if not isinstance(experiments, list):
        raise ScenarioError("'experiments' must be a list")
    names = set()
    for e in experiments:
        if not isinstance(e, dict) or e.get("type") not in EXPERIMENT_TYPES:
            raise ScenarioError(f"experiment needs a 'type' among {EXPERIMENT_TYPES}; got {e!r}")
        e.setdefault("name", e["type"])
        if e["name"] in names:
            raise ScenarioError(f"duplicate experiment name {e['name']!r}")
        names.add(e["name"])
        if "section" in e and e["section"] not in sections:
            raise ScenarioError(f"experiment {e['name']!r} references unknown section {e['section']!r}")
        if "phi" in e:
            try:
                parse_expr(e["phi"], params=(), dim=metric.dim)
            except ExprError as exc:
                raise ScenarioError(f"experiment {e['name']!r}: {exc}") from exc
    tol = dict(DEFAULT_TOLERANCES)
    tol.update(raw.get("tolerances", {}))
    return Scenario(str(raw["name"]), metric, sections, region, experiments, tol,
                    int(raw.get("seed", 0)), raw)


# ---------------------------------------------------------------------------
# experiments
# ---------------------------------------------------------------------------

def fmt(x) -> str:
    return f"{float(x):.17g}"


def clean(obj):
    """Make a structure JSON-safe: non-finite floats become strings."""
    if isinstance(obj, dict):
        return {str(k): clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [clean(v) for v in obj]
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        return x if math.isfinite(x) else ("inf" if x > 0 else ("-inf" if x < 0 else "nan"))
    if isinstance(obj, complex):
        return [obj.real, obj.imag]
    if hasattr(obj, "value") and isinstance(getattr(obj, "value"), str):
        return obj.value
    return obj


@dataclass
class Context:
    scenario: Scenario
    jobs: int = 1


def _section(ctx, e):
    return ctx.scenario.section(e.get("section", next(iter(ctx.scenario.sections), None) or ""))


def _point(ctx, e):
    if "point" in e:
        return parse_point(e["point"], ctx.scenario.metric.dim)
    return ctx.scenario.default_point()


def _grid(spec):
    if isinstance(spec, dict):
        return np.linspace(float(spec.get("start", 0.0)), float(spec["stop"]), int(spec.get("num", 50)))
    return np.asarray(spec, dtype=float)


def exp_theta(ctx, e):
    tol = float(e.get("tol", ctx.scenario.tolerances["theta"]))
    rows, ok = [], True
    for b in e.get("betas", [0.1, 0.25, 1.0, 10.0]):
        tv = theta(b, tol)
        res = theta_identity_residual(b, tol)
        ok &= res <= 3 * tol
        rows.append((b, tv.value, tv.quad_error, res))
    csv = "beta,theta,quad_error,identity_residual\n" + "".join(
        f"{fmt(b)},{fmt(v)},{fmt(q)},{fmt(r)}\n" for b, v, q, r in rows)
    return ok, {"csv": csv, "json": {"tol": tol, "rows": rows, "passed": ok}}


def exp_gcurve(ctx, e):
    sc = ctx.scenario
    F = _section(ctx, e)
    beta = float(e.get("beta", 1.0))
    t = _grid(e.get("t_grid", {"start": 0.0, "stop": 4.0, "num": 50}))
    curve = g_curve(sc.metric, F, beta, _point(ctx, e), sc.region, t,
                    method=e.get("method", "analytic"), tol=float(e.get("tol", sc.tolerances["quad"])),
                    jobs=ctx.jobs)
    summary = {"beta": beta, "method": e.get("method", "analytic"), "samples": len(curve.samples)}
    ok = True
    bounds = [None] * len(curve.samples)
    if len(curve.samples) >= 10 and curve.samples[0][0] == 0:
        rep = lower_bound_check(curve)
        ok &= rep.passed
        summary["lower_bound"] = rep.to_dict()
        bounds = [s for _, s, _ in rep.slacks]
    if "G" in e:
        resid = differential_inequality_check(curve, float(e["G"]))
        summary["differential_residual"] = resid
        ok &= resid < float(e.get("residual_tol", 1e-3))
    lines = ["t,G,abs_error,slack"]
    for (tt, g, err), s in zip(curve.samples, bounds):
        lines.append(f"{fmt(tt)},{fmt(g)},{fmt(err)},{'' if s is None else fmt(s)}")
    summary["passed"] = ok
    return ok, {"csv": "\n".join(lines) + "\n", "json": summary}


def exp_exponent(ctx, e):
    sc = ctx.scenario
    br = singularity_exponent(sc.metric, _section(ctx, e), _point(ctx, e),
                              float(e.get("resolution", sc.tolerances["resolution"])),
                              float(e.get("beta_max", 16.0)))
    out = br.to_dict()
    ok = br.flag != "NotMember"
    if "expect" in e:
        ok = br.lo <= float(e["expect"]) <= br.hi
    out["passed"] = ok
    return ok, {"json": out}


def exp_capacity(ctx, e):
    sc = ctx.scenario
    oracle = ProjectionOracleConfig(max_degree=int(e.get("max_degree", 6)), method=e.get("method", "analytic"),
                                    tol=float(e.get("tol", sc.tolerances["quad"])))
    est = capacity_C(sc.metric, _section(ctx, e), float(e.get("beta", 1.0)), sc.region, _point(ctx, e), oracle)
    out = est.to_dict()
    ok = est.converged
    if "expect" in e:
        ok &= abs(est.value - float(e["expect"])) <= float(e.get("rtol", 1e-6)) * max(1.0, abs(float(e["expect"])))
    out["passed"] = ok
    return ok, {"json": out}


def exp_effectiveness(ctx, e):
    sc = ctx.scenario
    F = _section(ctx, e)
    o = _point(ctx, e)
    betas = e.get("betas", [e.get("beta", 0.01)])
    bracket = singularity_exponent(sc.metric, F, o, float(e.get("exponent_resolution", sc.tolerances["resolution"])))
    reports = [effectiveness_verdict(sc.metric, F, o, sc.region, float(b), float(e.get("resolution", 1e-3)),
                                     tol=float(e.get("tol", sc.tolerances["quad"])),
                                     theta_tol=sc.tolerances["theta"], seed=sc.seed, exponent=bracket)
               for b in betas]
    ok = all(r.sound for r in reports)
    lines = ["beta,theta,ratio,predicted_member,observed_member"]
    for r in reports:
        lines.append(f"{fmt(r.beta)},{fmt(r.theta_beta)},{fmt(r.ratio)},{int(r.predicted_member)},{int(r.observed_member)}")
    return ok, {"csv": "\n".join(lines) + "\n",
                "json": {"passed": ok, "reports": [r.to_dict() for r in reports]}}


def exp_stability(ctx, e):
    sc = ctx.scenario
    F = _section(ctx, e)
    direction = parse_section(e["direction"], sc.metric.dim) if "direction" in e else None
    js = [int(j) for j in e.get("j", [2, 4, 8, 16, 32])]
    spec = MetricSequenceSpec(sc.metric, e.get("rule", "Scale"), (min(js), max(js)), seed=sc.seed)
    seq = build_sequence(spec, js)
    rep = stability_lp(sc.metric, seq, SectionSequence(F, direction), float(e.get("p", 1.2)), sc.region,
                       _point(ctx, e), tol=float(e.get("tol", sc.tolerances["quad"])),
                       target=float(e.get("target", 1e-3)), jobs=ctx.jobs)
    ok = rep.verdict == "Decaying"
    return ok, {"csv": rep.to_csv(), "json": dict(rep.to_dict(), passed=ok)}


def exp_union_sheaf(ctx, e):
    sc = ctx.scenario
    jmax = int(e.get("j_max", 64))
    seq = build_sequence(MetricSequenceSpec(sc.metric, e.get("rule", "Scale"), (1, jmax), seed=sc.seed))
    j0 = union_sheaf_check(sc.metric, seq, _section(ctx, e), _point(ctx, e))
    ok = j0 is not None
    return ok, {"json": {"j0": j0, "j_max": jmax, "rule": e.get("rule", "Scale"), "passed": ok}}


def exp_lelong(ctx, e):
    sc = ctx.scenario
    phi = parse_expr(e["phi"], params=(), dim=sc.metric.dim)
    est = lelong_number(phi, _point(ctx, e), float(e.get("r_min", 1e-6)), float(e.get("r_max", 0.5)),
                        int(e.get("radii", 12)))
    ok = est.confidence.value == "High"
    if "expect" in e:
        ok &= abs(est.value - float(e["expect"])) <= float(e.get("rtol", 0.01)) * max(abs(float(e["expect"])), 1e-12)
    return ok, {"json": dict(est.to_dict(), passed=ok)}


def exp_integrability(ctx, e):
    sc = ctx.scenario
    from .metric import twist

    o = _point(ctx, e)
    h = twist(sc.metric, float(e.get("beta", 0.0)))
    F = _section(ctx, e)
    v = integrability_at(lambda p: section_norm2_values(h, F, p), o,
                         float(e.get("rho0", 0.5 * sc.metric.domain.boundary_distance(o))),
                         int(e.get("levels", 20)))
    ok = v.verdict.value == e["expect"] if "expect" in e else True
    return ok, {"csv": v.annulus_csv(), "json": dict(v.to_dict(), passed=ok)}


def exp_integral(ctx, e):
    sc = ctx.scenario
    F = _section(ctx, e)
    h = sc.metric
    sing = [tuple(p) for p in h.singular_points] if h.singular_points else []
    est = integrate(lambda p: section_norm2_values(h, F, p), sc.region,
                    float(e.get("tol", sc.tolerances["quad"])), sing, jobs=ctx.jobs)
    ok = est.converged
    if "expect" in e:
        ok &= abs(est.value - float(e["expect"])) <= max(10 * est.abs_error, 1e-12)
    csv = "value,abs_error,cells_used,status\n" + f"{fmt(est.value)},{fmt(est.abs_error)},{est.cells_used},{est.status.value}\n"
    return ok, {"csv": csv, "json": dict(est.to_dict(), passed=ok)}


RUNNERS = {
    "theta": exp_theta, "gcurve": exp_gcurve, "exponent": exp_exponent, "capacity": exp_capacity,
    "effectiveness": exp_effectiveness, "stability": exp_stability, "union_sheaf": exp_union_sheaf,
    "lelong": exp_lelong, "integrability": exp_integrability, "integral": exp_integral,
}


# ---------------------------------------------------------------------------
# running
# ---------------------------------------------------------------------------

def versions() -> dict:
    import numba
    import scipy

    return {"strongopen": __version__, "python": platform.python_version(), "numpy": np.__version__,
            "scipy": scipy.__version__, "numba": numba.__version__, "kernels": _kernels.ACTIVE}


def _experiment_key(sc: Scenario, e: dict) -> str:
    inputs = {"metric": sc.raw["metric"], "sections": sc.raw.get("sections", {}),
              "region": sc.raw.get("region"), "seed": sc.seed, "experiment": e}
    return cache_key(e["type"], inputs, sc.tolerances)


def run_experiment(sc: Scenario, e: dict, cache: Cache | None = None, jobs: int = 1) -> dict:
    """Run (or fetch from cache) one experiment; returns {'passed', 'csv'?, 'json'}."""
    ctx = Context(sc, jobs)

    def compute():
        passed, payload = RUNNERS[e["type"]](ctx, e)
        return clean(dict(payload, passed=bool(passed)))

    if cache is None:
        return compute()
    return cache.get_or_compute(_experiment_key(sc, e), compute)


def _write(path: Path, text: str):
    path.write_text(text, encoding="utf-8", newline="\n")


def run_scenario(path, out_dir, tol: float | None = None, seed: int | None = None, jobs: int = 1,
                 cache: Cache | None = None, log=None) -> int:
    """Run every experiment of a scenario; returns the exit code (0/1/2/3)."""
    log = log or (lambda msg: print(msg, file=sys.stderr))
    start = time.time()
    try:
        if isinstance(path, dict):
            raw_text = json.dumps(path, sort_keys=True)
        else:
            raw_text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        log(f"error: cannot read scenario: {exc}")
        return EXIT_IO
    try:
        sc = load_scenario(json.loads(raw_text) if raw_text.lstrip().startswith("{") else raw_text)
    except json.JSONDecodeError as exc:
        log(f"error: invalid JSON at line {exc.lineno} column {exc.colno}: {exc.msg}")
        return EXIT_PARSE
    except (ScenarioError, ExprError, MetricError) as exc:
        log(f"error: {exc}")
        return EXIT_PARSE
    if tol is not None:
        sc.tolerances["quad"] = float(tol)
    if seed is not None:
        sc.seed = int(seed)
    out = Path(out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        log(f"error: cannot create output directory: {exc}")
        return EXIT_IO
    records = []
    all_ok = True
    for e in sc.experiments:
        t0 = time.time()
        try:
            result = run_experiment(sc, e, cache, jobs)
        except (ScenarioError, ExprError) as exc:
            log(f"error in experiment {e['name']!r}: {exc}")
            return EXIT_PARSE
        except (MetricError, ValueError) as exc:
            log(f"experiment {e['name']!r} failed: {exc}")
            result = {"passed": False, "json": {"error": str(exc), "passed": False}}
        files = []
        try:
            if "csv" in result:
                _write(out / f"{e['name']}.csv", result["csv"])
                files.append(f"{e['name']}.csv")
            _write(out / f"{e['name']}.json", json.dumps(result["json"], indent=2, sort_keys=True) + "\n")
            files.append(f"{e['name']}.json")
        except OSError as exc:
            log(f"error: cannot write report: {exc}")
            return EXIT_IO
        all_ok &= bool(result["passed"])
        records.append({"name": e["name"], "type": e["type"], "passed": bool(result["passed"]),
                        "files": files, "wall_time_s": time.time() - t0})
        log(f"{e['name']}: {'pass' if result['passed'] else 'FAIL'}")
    manifest = {
        "scenario": sc.name,
        "inputs_sha256": hashlib.sha256(raw_text.encode("utf-8")).hexdigest(),
        "tolerances": sc.tolerances,
        "seed": sc.seed,
        "jobs": jobs,
        "versions": versions(),
        "started_at": time.strftime("%Y-%m-%dT%H:%M:%S%z", time.localtime(start)),
        "wall_time_s": time.time() - start,
        "cache": {"enabled": bool(cache and cache.enabled), "hits": cache.hits if cache else 0,
                  "misses": cache.misses if cache else 0},
        "experiments": records,
        "passed": all_ok,
    }
    try:
        _write(out / "manifest.json", json.dumps(clean(manifest), indent=2, sort_keys=True) + "\n")
    except OSError as exc:
        log(f"error: cannot write manifest: {exc}")
        return EXIT_IO
    return EXIT_OK if all_ok else EXIT_FAIL


def bundled_scenario(name: str) -> Path:
    here = Path(__file__).parent / "scenarios" / f"{name}.json"
    if not here.exists():
        raise FileNotFoundError(f"no bundled scenario {name!r}")
    return here


def list_bundled() -> list:
    return sorted(p.stem for p in (Path(__file__).parent / "scenarios").glob("*.json"))


def resolve_scenario_path(arg: str) -> Path:
    p = Path(arg)
    if p.exists() or os.sep in arg or arg.endswith(".json"):
        return p
    return bundled_scenario(arg)
