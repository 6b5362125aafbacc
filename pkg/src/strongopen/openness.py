"""Singularity exponents, capacities, tail curves and the effectiveness function.

Notation follows the module docs: ``h`` a singular metric, ``F`` a section,
``o`` a point, ``phi = -log det h``.  For ``beta >= 0`` the twisted metric is
``h (det h)^beta``; ``F`` is a *member* at level beta when ``|F|^2`` for the
twisted metric is integrable near ``o``.

The effectiveness function is

    theta(beta) = 1 + int_0^inf (1 - exp(-g_beta(t))) e^t dt,
    g_beta(t)   = int_t^inf ds / (s e^{1 + (1+beta) s}) = e^{-1} E1((1+beta) t).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import _kernels
from .metric import (MetricError, Polydisc, Section, SingularMetric, normalize, phi_values,
                     section_norm2_values, twist)
from .quad import (IntegralEstimate, Status, Verdict, integrability_at, integrate, integrate_sublevel,
                   integrate_vector, quad1d)

DEFAULT_BETA_MAX = 16.0
# fitted slopes closer to zero than this are rounding noise at a log divergence
SLOPE_FLOOR = 1e-9


# ---------------------------------------------------------------------------
# g and theta
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ThetaValue:
    beta: float
    value: float
    quad_error: float

    def to_dict(self):
        return {"beta": self.beta, "value": self.value, "quad_error": self.quad_error}


def g_beta(beta, t):
    """g_beta(t) = e^{-1} E1((1 + beta) t) for t > 0 (vectorised)."""
    b = np.asarray(beta, dtype=float)
    tt = np.asarray(t, dtype=float)
    if np.any(tt <= 0):
        raise ValueError("g_beta requires t > 0 (g_beta(0+) is +inf)")
    if np.any(b < 0):
        raise ValueError("beta must be nonnegative")
    x = np.broadcast_to((1.0 + b) * tt, np.broadcast(b, tt).shape)
    out = math.exp(-1.0) * _kernels.e1(x.ravel()).reshape(x.shape)
    return out[()] if out.ndim == 0 else out


def g_beta_upper(beta, t):
    """e^{-1-(1+beta)t} / ((1+beta) t), an upper bound for g_beta(t)."""
    b = np.asarray(beta, dtype=float)
    t = np.asarray(t, dtype=float)
    return (np.exp(-1.0 - (1.0 + b) * t) / ((1.0 + b) * t))[()]


def g_beta_quadrature(beta: float, t: float, tol: float = 1e-13) -> float:
    """Direct adaptive quadrature of the defining integral (cross-check)."""
    if t <= 0:
        raise ValueError("t must be positive")
    k = 1.0 + beta

    def f(s):
        return np.exp(-1.0 - k * s) / s

    # truncate where the remaining mass is below tol / 10
    T = t
    while math.exp(-1.0 - k * T) / (k * T) > tol / 10:
        T = 2 * T + 1.0
    breaks = [t * 2.0 ** j for j in range(1, 60) if t * 2.0 ** j < T]
    return quad1d(f, t, T, tol, breakpoints=breaks, order=16).value


def _theta_tail_bound(beta: float, T: float) -> float:
    # int_T^inf g_beta(t) e^t dt <= e^{-1} E1(beta T) / (1 + beta)
    return math.exp(-1.0) * float(_kernels.e1(beta * T)[0]) / (1.0 + beta)


def _theta_cutoff(beta: float, tol: float) -> float:
    T = 1.0
    while (_theta_tail_bound(beta, T) >= tol / 10
           or math.exp(-1.0 - beta * T) / ((1.0 + beta) * T) >= tol * 1e-2):
        T *= 2.0
    return T


def _dyadic_breaks(T: float):
    lo = [2.0 ** -k for k in range(1, 48)]
    hi = [2.0 ** k for k in range(0, 64) if 2.0 ** k < T]
    return sorted(x for x in lo + hi if 0 < x < T)


def theta(beta: float, tol: float = 1e-8) -> ThetaValue:
    """theta(beta) by adaptive Gauss-Legendre on dyadic panels.

    The integrand equals 1 at t = 0 (removable, g_beta(0+) = inf); the tail
    past the cutoff T is bounded by ``e^{-1} E1(beta T) / (1 + beta)`` and
    that bound is included in ``quad_error``.
    """
    beta = float(beta)
    if not beta > 0:
        raise ValueError("theta requires beta > 0 (theta(0+) = +inf)")
    T = _theta_cutoff(beta, tol)
    res = quad1d(lambda t: _kernels.theta_integrand(t, beta), 0.0, T, tol / 2,
                 breakpoints=_dyadic_breaks(T))
    tail = _theta_tail_bound(beta, T)
    return ThetaValue(beta, 1.0 + res.value + tail / 2, res.abs_error + tail / 2)


def theta_alternate(beta: float, tol: float = 1e-8) -> ThetaValue:
    """1 + (1/(1+beta)) int_0^inf (1 - exp(-g_0(tau))) e^{tau/(1+beta)} dtau."""
    beta = float(beta)
    if not beta > 0:
        raise ValueError("theta requires beta > 0")
    # the substitution tau = (1 + beta) t maps the cutoff and tail bound over
    T = (1.0 + beta) * _theta_cutoff(beta, tol)
    res = quad1d(lambda tau: _kernels.theta_alt_integrand(tau, beta), 0.0, T, tol / 2,
                 breakpoints=_dyadic_breaks(T))
    tail = _theta_tail_bound(beta, T / (1.0 + beta))
    return ThetaValue(beta, 1.0 + res.value + tail / 2, res.abs_error + tail / 2)


def theta_identity_residual(beta: float, tol: float = 1e-6) -> float:
    return abs(theta(beta, tol).value - theta_alternate(beta, tol).value)


# ---------------------------------------------------------------------------
# membership and the singularity exponent
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Membership:
    member: bool
    verdict: Verdict
    slope: float
    resolved_indeterminate: bool


def _default_rho0(h: SingularMetric, o) -> float:
    return 0.5 * h.domain.boundary_distance(o)


def membership(h: SingularMetric, F: Section, o, beta: float = 0.0, rho0: float | None = None,
               levels: int = 20) -> Membership:
    """Is F in the multiplier submodule of h (det h)^beta at o?

    ``Converges`` is a member.  ``Indeterminate`` verdicts (slope within the
    margin of zero) are resolved by the sign of the fitted decay slope when
    the annulus integrals follow a clean power law (fit residual < 1e-3)
    and the slope is below ``-SLOPE_FLOOR``; otherwise they count as
    non-members.
    """
    o = np.atleast_1d(np.asarray(o, dtype=complex))
    ht = twist(h, beta)
    rho0 = rho0 or _default_rho0(h, o)
    v = integrability_at(lambda p: section_norm2_values(ht, F, p), o, rho0, levels)
    if v.verdict is Verdict.CONVERGES:
        return Membership(True, v.verdict, v.decay_slope, False)
    if v.verdict is Verdict.INDETERMINATE:
        member = v.decay_slope < -SLOPE_FLOOR and v.fit_residual < 1e-3
        return Membership(member, v.verdict, v.decay_slope, True)
    return Membership(False, v.verdict, v.decay_slope, False)


@dataclass(frozen=True)
class ExponentBracket:
    lo: float
    hi: float
    iterations: int
    indeterminate_hits: int
    flag: str = ""

    @property
    def width(self) -> float:
        return self.hi - self.lo

    def contains(self, c: float) -> bool:
        return self.lo <= c <= self.hi

    def to_dict(self):
        return {"lo": self.lo, "hi": self.hi, "iterations": self.iterations,
                "indeterminate_hits": self.indeterminate_hits, "flag": self.flag}


def singularity_exponent(h: SingularMetric, F: Section, o, resolution: float = 0.02,
                         beta_max: float = DEFAULT_BETA_MAX, rho0: float | None = None,
                         levels: int = 20) -> ExponentBracket:
    """Bisection bracket for sup{beta >= 0 : F is a member at level beta}."""
    if F.is_zero():
        raise ValueError("F must not be identically zero")
    hits = 0

    def test(beta):
        nonlocal hits
        m = membership(h, F, o, beta, rho0, levels)
        hits += m.resolved_indeterminate
        return m.member

    if not test(0.0):
        return ExponentBracket(0.0, 0.0, 1, hits, "NotMember")
    if test(beta_max):
        return ExponentBracket(beta_max, beta_max, 2, hits, "Unbounded")
    lo, hi = 0.0, float(beta_max)
    it = 2
    while hi - lo > resolution:
        mid = 0.5 * (lo + hi)
        it += 1
        if test(mid):
            lo = mid
        else:
            hi = mid
    return ExponentBracket(lo, hi, it, hits)


# ---------------------------------------------------------------------------
# monomial models
# ---------------------------------------------------------------------------

def _require_model(h: SingularMetric, o):
    if h.model is None:
        raise MetricError("operation needs a monomial-model metric (diagonal radial monomial weights); "
                          "for other metrics only the upper bound int_U |F|^2_{h/det h} is available")
    o = np.atleast_1d(np.asarray(o, dtype=complex))
    if not np.allclose(o, np.asarray(h.model.origin), atol=1e-14):
        raise MetricError("o must be the centre of the monomial model")
    return h.model


def submodule_contains(h: SingularMetric, beta: float, slot: int, k: Sequence[int]) -> bool:
    """Is the monomial (z - o)^k e_slot in the submodule of h (det h)^beta at o?"""
    model = h.model
    a = np.asarray(model.exponents[slot], dtype=float) + beta * model.total()
    return bool(np.all(np.asarray(k) + 1 > a))


def model_exponent(h: SingularMetric, F: Section, o) -> float:
    """Closed-form exponent for a monomial model: min over F's support of
    min_i (k_i + 1 - a_i) / A_i.

    Returns ``-inf`` when F is not a member even at beta = 0 (the supremum
    is then over an empty set).
    """
    model = _require_model(h, o)
    A = model.total()
    G = F.shifted(o)
    best = math.inf
    for slot, comp in enumerate(G.components):
        a = np.asarray(model.exponents[slot], dtype=float)
        for k in comp:
            gap = np.asarray(k) + 1 - a
            if np.any(gap <= 0):
                return -math.inf
            with np.errstate(divide="ignore"):
                ratios = np.where(A > 0, gap / np.where(A > 0, A, 1), math.inf)
            best = min(best, float(np.min(ratios)))
    return best


def _split(h: SingularMetric, F: Section, beta: float, o):
    G = F.shifted(o)
    inside, outside = [], []
    for slot, comp in enumerate(G.components):
        for k, c in sorted(comp.items()):
            (inside if submodule_contains(h, beta, slot, k) else outside).append((slot, k, c))
    return inside, outside


def _monomial_norm2(weight_exps, coeff, k, radii) -> float:
    # int over the polydisc of |w^k|^2 coeff prod |w_i|^{-2 b_i}
    total = coeff
    for ki, bi, R in zip(k, weight_exps, radii):
        e = 2 * ki + 2 - 2 * bi
        if e <= 0:
            return math.inf
        total *= 2 * math.pi * R ** e / e
    return float(total)


@dataclass(frozen=True)
class ProjectionOracleConfig:
    max_degree: int = 6
    method: str = "analytic"   # or "quadrature"
    tol: float = 1e-10
    allow_upper_bound: bool = False


@dataclass(frozen=True)
class CapacityEstimate(IntegralEstimate):
    kind: str = "Exact"   # or "UpperBoundOnly"
    method: str = "analytic"

    def to_dict(self):
        d = super().to_dict()
        d.update(kind=self.kind, method=self.method)
        return d


def capacity_C(h: SingularMetric, F: Section, beta: float, U: Polydisc, o,
               oracle: ProjectionOracleConfig = ProjectionOracleConfig()) -> CapacityEstimate:
    """Minimal int_U |F~|^2_{h/det h} over F~ with F~ - F in the twisted submodule at o."""
    o = np.atleast_1d(np.asarray(o, dtype=complex))
    if h.model is None or not np.allclose(o, np.asarray(h.model.origin), atol=1e-14) \
            or not np.allclose(np.asarray(U.center), o, atol=1e-14):
        if not oracle.allow_upper_bound:
            _require_model(h, o)
            raise MetricError("capacity needs U centred at the model centre o")
        hn = normalize(h)
        est = integrate(lambda p: section_norm2_values(hn, F, p), U, oracle.tol,
                        singular_points=[tuple(o)])
        return CapacityEstimate(est.value, est.abs_error, est.cells_used, est.status,
                                kind="UpperBoundOnly", method="quadrature")
    inside, outside = _split(h, F, beta, o)
    if not outside:
        return CapacityEstimate(0.0, 0.0, 0, Status.CONVERGED, method=oracle.method)
    hn = normalize(h)
    nm = hn.model
    if oracle.method == "analytic":
        total = 0.0
        for slot, k, c in outside:
            total += abs(c) ** 2 * _monomial_norm2(nm.exponents[slot], nm.coeffs[slot], k, U.radii)
        return CapacityEstimate(total, 4e-16 * total, 0, Status.CONVERGED, method="analytic")
    if oracle.method == "quadrature":
        return _capacity_quadrature(h, hn, F, beta, U, o, oracle)
    raise ValueError(f"unknown capacity method {oracle.method!r}")


def _capacity_quadrature(h, hn, F, beta, U, o, oracle):
    """Gram least-norm solve over the truncated monomial basis of the submodule."""
    n, r = h.dim, h.rank
    basis = []
    for slot in range(r):
        for k in _multi_indices(n, oracle.max_degree):
            if submodule_contains(h, beta, slot, k):
                basis.append(Section.monomial(k, r, slot).shifted(-o) if np.any(o) else Section.monomial(k, r, slot))
    sections = [F] + basis
    m = len(sections)

    def integrand(points):
        M = hn.values(points)
        V = np.stack([S.evaluate(points) for S in sections], axis=1)  # (N, m, r)
        # <u, v> = sum_ij H_ij u_i conj(v_j)
        with np.errstate(all="ignore"):
            HV = np.einsum("nij,nbj->nbi", M, np.conj(V))
            gram = np.einsum("nai,nbi->nab", V, HV)
        gram = np.where(np.isfinite(gram), gram, 0.0)
        return np.concatenate([gram.real.reshape(-1, m * m), gram.imag.reshape(-1, m * m)], axis=1)

    est = integrate_vector(integrand, U, oracle.tol, singular_points=[tuple(o)])
    vals = est.values[: m * m] + 1j * est.values[m * m:]
    errs = np.hypot(est.abs_errors[: m * m], est.abs_errors[m * m:]).reshape(m, m)
    Gm = vals.reshape(m, m)
    ff = float(Gm[0, 0].real)
    if m == 1:
        return CapacityEstimate(ff, float(errs[0, 0]), est.cells_used, est.status, method="quadrature")
    B = Gm[1:, 1:]
    rhs = Gm[1:, 0]   # <b_k, F>
    x = np.linalg.solve(B, rhs)
    value = ff - float(np.real(np.vdot(rhs, x)))
    xn = float(np.linalg.norm(x))
    err = float(errs[0, 0] + 2 * xn * np.linalg.norm(errs[1:, 0]) + xn ** 2 * np.linalg.norm(errs[1:, 1:]))
    return CapacityEstimate(max(value, 0.0), err, est.cells_used, est.status, method="quadrature")


def _multi_indices(n, degree):
    import itertools

    for k in itertools.product(range(degree + 1), repeat=n):
        if sum(k) <= degree:
            yield k


# ---------------------------------------------------------------------------
# G curves
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class GCurve:
    beta: float
    samples: tuple   # ((t, G, abs_error), ...)
    region: Polydisc

    @property
    def t(self):
        return np.array([s[0] for s in self.samples])

    @property
    def values(self):
        return np.array([s[1] for s in self.samples])

    @property
    def errors(self):
        return np.array([s[2] for s in self.samples])

    def to_csv(self) -> str:
        lines = ["t,G,abs_error"]
        lines += [f"{t:.17g},{g:.17g},{e:.17g}" for t, g, e in self.samples]
        return "\n".join(lines) + "\n"


def g_curve(h: SingularMetric, F: Section, beta: float, o, region: Polydisc, t_grid,
            method: str = "analytic", tol: float = 1e-10, jobs: int = 1) -> GCurve:
    """G_beta(t) = capacity of F over region intersected with {phi < -t}.

    On the monomial class the sublevel sets are Reinhardt domains, so
    monomials stay orthogonal and the capacity is the weighted mass of F's
    components outside the submodule.  ``method="analytic"`` uses the
    radial closed form (one variable); ``"quadrature"`` integrates each
    monomial over the sublevel set.
    """
    model = _require_model(h, o)
    o = np.atleast_1d(np.asarray(o, dtype=complex))
    t_grid = np.asarray(t_grid, dtype=float)
    if np.any(np.diff(t_grid) <= 0) or np.any(t_grid < 0):
        raise ValueError("t_grid must be increasing and nonnegative")
    if not np.allclose(np.asarray(region.center), o, atol=1e-14):
        raise MetricError("region must be centred at o")
    _, outside = _split(h, F, beta, o)
    hn = normalize(h)
    nm = hn.model
    A = model.total()
    log_c = float(np.sum(np.log(model.coeffs)))
    samples = []
    if method == "analytic" and h.dim != 1:
        method = "quadrature"
    for t in t_grid:
        if not outside:
            samples.append((float(t), 0.0, 0.0))
            continue
        if method == "analytic":
            # phi = -log c + 2 A log|w| < -t  <=>  |w| < exp((log c - t) / (2A))
            R0 = region.radii[0]
            if A[0] > 0:
                rho = min(R0, math.exp((log_c - t) / (2 * A[0])))
            else:
                rho = R0 if -log_c < -t else 0.0
            total = 0.0
            if rho > 0:
                for slot, k, c in outside:
                    total += abs(c) ** 2 * _monomial_norm2(nm.exponents[slot], nm.coeffs[slot], k, (rho,))
            samples.append((float(t), total, 4e-16 * total))
        elif method == "quadrature":
            total, err = 0.0, 0.0
            for slot, k, c in outside:
                mono = Section.monomial(k, h.rank, slot)
                mono = mono.shifted(-o) if np.any(o) else mono
                est = integrate_sublevel(lambda p, s=mono: section_norm2_values(hn, s, p),
                                         lambda p: phi_values(h, p), float(t), region, tol,
                                         singular_points=[tuple(o)], jobs=jobs)
                total += abs(c) ** 2 * est.value
                err += abs(c) ** 2 * est.abs_error
            samples.append((float(t), total, err))
        else:
            raise ValueError(f"unknown method {method!r}")
    return GCurve(float(beta), tuple(samples), region)


@dataclass(frozen=True)
class SlackReport:
    slacks: tuple   # ((t, slack, allowance), ...)
    passed: bool
    min_positive_from: float

    def to_dict(self):
        return {"passed": self.passed,
                "slacks": [[t, s, a] for t, s, a in self.slacks]}


def lower_bound_check(curve: GCurve, g_rel_error: float = 1e-13) -> SlackReport:
    """Slack G(t) - G(0) (1 - exp(-g_beta(t))) per sample."""
    if len(curve.samples) < 10:
        raise ValueError("curve needs at least 10 samples")
    t0, G0, e0 = curve.samples[0]
    if t0 != 0 or not math.isfinite(G0):
        raise ValueError("curve must start at t = 0 with finite G(0)")
    rows = []
    ok = True
    for t, G, e in curve.samples:
        if t == 0:
            bound = G0
        else:
            bound = G0 * -math.expm1(-float(g_beta(curve.beta, t)))
        slack = G - bound
        allowance = e + e0 + g_rel_error * G0
        ok &= slack >= -allowance
        rows.append((t, slack, allowance))
    positive_from = math.inf
    for t, s, a in reversed(rows):
        if s > a:
            positive_from = t
        else:
            break
    return SlackReport(tuple(rows), bool(ok), positive_from)


def differential_inequality_check(curve: GCurve, G: float) -> float:
    """max(0, LHS - RHS) for the integral inequality on tail curves.

    LHS = int_{t_0}^{t_last} q(s) / (G - G_beta(s)) ds with q the forward
    difference quotient (trapezoid rule); RHS = log(G / (G - G_beta(t_0))).
    """
    t = curve.t
    v = curve.values
    e = curve.errors
    if np.any(G <= v):
        raise ValueError("G must exceed every sample of the curve")
    if np.any(np.diff(v) > 2 * (e[1:] + e[:-1])):
        raise ValueError("curve is not nonincreasing within its error bars")
    q = -np.diff(v) / np.diff(t)
    f = q / (G - v[:-1])
    s = t[:-1]
    lhs = float(np.sum(0.5 * (f[1:] + f[:-1]) * np.diff(s)))
    rhs = math.log(G / (G - v[0]))
    return max(0.0, lhs - rhs)


# ---------------------------------------------------------------------------
# effectiveness
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class EffectivenessReport:
    beta: float
    theta_beta: float
    energy: float
    capacity_plus: float
    ratio: float
    predicted_member: bool
    observed_member: bool
    exponent: ExponentBracket = None
    theta_error: float = 0.0

    @property
    def sound(self) -> bool:
        return (not self.predicted_member) or self.observed_member

    def to_dict(self):
        def fl(x):
            return x if math.isfinite(x) else ("inf" if x > 0 else "nan")
        return {
            "beta": self.beta, "theta_beta": fl(self.theta_beta), "theta_error": self.theta_error,
            "energy": fl(self.energy), "capacity_plus": fl(self.capacity_plus), "ratio": fl(self.ratio),
            "predicted_member": self.predicted_member, "observed_member": self.observed_member,
            "sound": self.sound,
            "exponent": self.exponent.to_dict() if self.exponent else None,
        }


def effectiveness_verdict(h: SingularMetric, F: Section, o, D: Polydisc, beta: float,
                          resolution: float = 1e-3, exponent_resolution: float = 0.02,
                          tol: float = 1e-9, theta_tol: float = 1e-8, seed: int = 0,
                          exponent: ExponentBracket | None = None) -> EffectivenessReport:
    """Compare theta(beta) with energy / capacity_plus and observe membership.

    capacity_plus is the capacity at ``c + resolution`` with ``c`` the upper
    end of the exponent bracket; on monomial models the submodule is
    constant between thresholds, so any level just past c realises the union
    over beta' > c.
    """
    o = np.atleast_1d(np.asarray(o, dtype=complex))
    pts = D.sample(np.random.default_rng(seed), 2000)
    with np.errstate(all="ignore"):
        if np.any(phi_values(h, pts) >= 0):
            raise ValueError("phi = -log det h must be negative on D")
    energy = integrate(lambda p: section_norm2_values(h, F, p), D, tol, singular_points=[tuple(o)])
    if not math.isfinite(energy.value) or energy.status is Status.DIVERGENCE:
        raise ValueError("energy int_D |F|^2_h is infinite")
    bracket = exponent or singularity_exponent(h, F, o, exponent_resolution)
    cap = capacity_C(h, F, bracket.hi + resolution, D, o)
    ratio = energy.value / cap.value if cap.value > 0 else math.inf
    if beta == 0:
        th, th_err = math.inf, 0.0
    else:
        tv = theta(beta, theta_tol)
        th, th_err = tv.value, tv.quad_error
    predicted = th > ratio
    observed = membership(h, F, o, beta).member
    return EffectivenessReport(float(beta), th, energy.value, cap.value, ratio, bool(predicted),
                               bool(observed), bracket, th_err)


def strong_openness_search(h: SingularMetric, F: Section, o, beta_grid: Sequence[float]):
    """Smallest grid beta (ascending) with a Converges verdict, or None."""
    if not membership(h, F, o, 0.0).member:
        raise ValueError("F is not in the multiplier submodule of h at o")
    o = np.atleast_1d(np.asarray(o, dtype=complex))
    for b in sorted(float(x) for x in beta_grid):
        if b <= 0:
            continue
        ht = twist(h, b)
        v = integrability_at(lambda p: section_norm2_values(ht, F, p), o, _default_rho0(h, o))
        if v.verdict is Verdict.CONVERGES:
            return b
    return None
