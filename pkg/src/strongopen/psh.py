"""Plurisubharmonic weights: Lelong numbers, cut-offs, smoothing, approximation.

Lelong numbers use the normalisation ``v(c log|z|, 0) = c`` so that
``e^{-phi}`` is integrable near a point whenever ``v(phi) < 2`` (Skoda).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from typing import Callable, Sequence

import numpy as np
from scipy.special import gammaln, logsumexp

from .expr import Expr, as_function, parse_expr
from .metric import Polydisc
from .quad import IntegralEstimate, integrate, integrate_vector


class Confidence(str, Enum):
    HIGH = "High"
    LOW = "Low"


class Guarantee(str, Enum):
    GUARANTEED = "Guaranteed"
    NOT_GUARANTEED = "NotGuaranteed"


LOW_CONFIDENCE_RESIDUAL = 0.05


@dataclass(frozen=True)
class LelongEstimate:
    value: float
    radii_used: tuple
    fit_residual: float
    confidence: Confidence

    def to_dict(self):
        return {"value": self.value, "radii_used": list(self.radii_used),
                "fit_residual": self.fit_residual, "confidence": self.confidence.value}


def _sphere_directions(n: int, count: int) -> np.ndarray:
    if n == 1:
        t = 2 * math.pi * np.arange(count) / count
        return np.exp(1j * t)[:, None]
    rng = np.random.default_rng(12345)
    g = rng.standard_normal((count, n)) + 1j * rng.standard_normal((count, n))
    g /= np.linalg.norm(g, axis=1, keepdims=True)
    axes = np.eye(n, dtype=complex)
    diag = np.ones((1, n), dtype=complex) / math.sqrt(n)
    return np.concatenate([axes, diag, g])


def lelong_number(phi, center, r_min: float, r_max: float, radii: int = 12,
                  directions: int = 64) -> LelongEstimate:
    """Slope of ``max_{|z - x| = r} phi`` against ``log r`` (least squares).

    For psh ``phi`` the maxima are convex in ``log r`` and their slope
    decreases to the Lelong number as ``r -> 0``, so the fit uses the lower
    half of the geometric ladder ``r_min .. r_max``; ``radii_used`` lists it.
    """
    f = as_function(phi)
    x = np.atleast_1d(np.asarray(center, dtype=complex))
    if not (0 < r_min < r_max):
        raise ValueError("need 0 < r_min < r_max")
    rs = np.geomspace(r_min, r_max, radii)
    U = _sphere_directions(x.shape[0], directions)
    maxima = np.empty(radii)
    for k, r in enumerate(rs):
        with np.errstate(all="ignore"):
            vals = np.asarray(f(x[None, :] + r * U), dtype=float)
        vals = vals[~np.isnan(vals)]
        if vals.size == 0 or np.all(vals == -np.inf):
            raise ValueError(f"phi is identically -inf on the sphere of radius {r:g}")
        maxima[k] = vals.max()
    if not np.all(np.isfinite(maxima)):
        raise ValueError("phi is not finite on the sampled spheres")
    half = max(3, radii // 2)
    rs, maxima = rs[:half], maxima[:half]
    lr = np.log(rs)
    slope, intercept = np.polyfit(lr, maxima, 1)
    resid = float(np.sqrt(np.mean((maxima - slope * lr - intercept) ** 2)))
    value = max(0.0, float(slope))
    conf = Confidence.LOW if resid > LOW_CONFIDENCE_RESIDUAL else Confidence.HIGH
    return LelongEstimate(value, tuple(float(r) for r in rs), resid, conf)


def skoda_guarantee(est: LelongEstimate) -> Guarantee:
    """Guaranteed iff value + 3 * residual < 2; refuses low-confidence estimates."""
    if est.confidence is not Confidence.HIGH:
        raise ValueError("Lelong estimate has low confidence; no guarantee can be given")
    if est.value + 3 * est.fit_residual < 2:
        return Guarantee.GUARANTEED
    return Guarantee.NOT_GUARANTEED


# ---------------------------------------------------------------------------
# cut-off functions
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class CutoffParams:
    t0: float
    B: float

    def __post_init__(self):
        if not self.t0 > 0:
            raise ValueError("t0 must be positive")
        if not (0 < self.B <= 1):
            raise ValueError("B must lie in (0, 1]")


def cutoff_b(t, p: CutoffParams):
    """Integral of (1/B) times the indicator of (-t0-B, -t0) up to t."""
    return np.clip((np.asarray(t, dtype=float) + p.t0 + p.B) / p.B, 0.0, 1.0)[()]


def _cutoff_primitive(t, p: CutoffParams):
    t = np.asarray(t, dtype=float)
    lo = -p.t0 - p.B
    mid = (t - lo) ** 2 / (2 * p.B)
    hi = p.B / 2 + t + p.t0
    return np.where(t <= lo, 0.0, np.where(t >= -p.t0, hi, mid))


def cutoff_chi(t, p: CutoffParams):
    """(1/(t0+B)) times the integral of b from 0 to t."""
    val = (_cutoff_primitive(t, p) - _cutoff_primitive(0.0, p)) / (p.t0 + p.B)
    return np.asarray(val)[()]


# ---------------------------------------------------------------------------
# mollification
# ---------------------------------------------------------------------------

def mollifier_constant(n: int) -> float:
    """c with c * (1 - |x|^2)^3 of unit mass on the unit ball of R^{2n}."""
    log_sphere = math.log(2.0) + n * math.log(math.pi) - gammaln(n)
    log_radial = gammaln(n) + gammaln(4) - math.log(2.0) - gammaln(n + 4)
    return math.exp(-(log_sphere + log_radial))


def mollifier(x, eps: float, n: int):
    """rho_eps at displacements x of shape (N, n)."""
    x = np.asarray(x, dtype=complex)
    s = np.sum(np.abs(x) ** 2, axis=-1) / eps ** 2
    return np.where(s < 1, mollifier_constant(n) * (1 - s) ** 3, 0.0) / eps ** (2 * n)


def mollify_vector(f: Callable, eps: float, p, n: int, tol: float = 1e-9,
                   singular_points: Sequence = ()) -> np.ndarray:
    """(f * rho_eps)(p) for a vector-valued f returning (N, m) arrays."""
    z = np.atleast_1d(np.asarray(p, dtype=complex))
    box = Polydisc(z, (eps,) * n)
    inside = [q for q in singular_points if box.contains(q)]

    def g(points):
        vals = np.asarray(f(points), dtype=float)
        if vals.ndim == 1:
            vals = vals[:, None]
        w = mollifier(points - z[None, :], eps, n)
        with np.errstate(all="ignore"):
            out = vals * w[:, None]
        return np.where(w[:, None] == 0, 0.0, out)

    est = integrate_vector(g, box, tol, singular_points=inside)
    return np.asarray(est.values)


def mollify(phi, eps: float, p, region: Polydisc | None = None, tol: float = 1e-9,
            singular_points: Sequence = ()) -> float:
    """(phi * rho_eps)(p) with rho(x) = c (1 - |x|^2)^3 on the unit ball."""
    f = as_function(phi)
    z = np.atleast_1d(np.asarray(p, dtype=complex))
    if region is not None and region.boundary_distance(z) <= eps:
        raise ValueError("point is within eps of the region boundary")
    return float(mollify_vector(f, eps, z, z.shape[0], tol, singular_points)[0])


# ---------------------------------------------------------------------------
# Bergman approximation of radial weights
# ---------------------------------------------------------------------------

def bergman_log(a: float, m: int, z: complex, L: int | None = None) -> float:
    """phi_m = (1/2m) log sum_l |sigma_l(z)|^2 for phi = 2a log|z| on the unit disc.

    The orthonormal basis of holomorphic functions for the weight
    ``|z|^{-4am}`` is ``z^l sqrt((2l + 2 - 4am) / (2 pi))`` with
    ``l > 2am - 1``.
    """
    if a <= 0 or m < 1:
        raise ValueError("need a > 0 and m >= 1")
    x = abs(complex(z)) ** 2
    if x >= 1:
        raise ValueError("z must lie in the open unit disc")
    l0 = max(0, math.floor(2 * a * m - 1) + 1)
    if L is None:
        L = max(400, 4 * l0 + 400)
    ls = np.arange(l0, L + 1, dtype=float)
    coef = 2 * ls + 2 - 4 * a * m
    ls, coef = ls[coef > 0], coef[coef > 0]
    if x == 0:
        if ls[0] == 0:
            return float(math.log(coef[0] / (2 * math.pi)) / (2 * m))
        return -math.inf
    logs = ls * math.log(x) + np.log(coef) - math.log(2 * math.pi)
    return float(logsumexp(logs) / (2 * m))


# ---------------------------------------------------------------------------
# submean-value check
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ViolationReport:
    trials: int
    violations: int
    max_violation: float
    witnesses: tuple

    @property
    def passed(self) -> bool:
        return self.violations == 0

    def to_dict(self):
        return {"trials": self.trials, "violations": self.violations,
                "max_violation": self.max_violation,
                "witnesses": [[[c.real, c.imag] for c in w] for w in self.witnesses]}


def submean_check(g, region: Polydisc, trials: int = 200, seed: int = 0, nodes: int = 32,
                  base_tol: float = 1e-6) -> ViolationReport:
    """Compare g(center) with circle means on random complex lines."""
    f = as_function(g)
    rng = np.random.default_rng(seed)
    n = region.dim
    centers = region.scaled(0.9).sample(rng, trials)
    dirs = rng.standard_normal((trials, n)) + 1j * rng.standard_normal((trials, n))
    dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
    th = 2 * math.pi * np.arange(nodes) / nodes
    violations = 0
    worst = 0.0
    witnesses = []
    for k in range(trials):
        c = centers[k]
        # largest radius keeping the circle in the region
        room = np.asarray(region.radii) - np.abs(c - np.asarray(region.center))
        lim = float(np.min(room / np.maximum(np.abs(dirs[k]), 1e-300)))
        r = lim * (0.1 + 0.8 * rng.random())
        pts = c[None, :] + r * np.exp(1j * th)[:, None] * dirs[k][None, :]
        with np.errstate(all="ignore"):
            center_val = float(np.asarray(f(c[None, :]), dtype=float)[0])
            vals = np.asarray(f(pts), dtype=float)
        if not np.all(np.isfinite(vals)) or math.isnan(center_val):
            continue
        mean32 = float(np.mean(vals))
        mean16 = float(np.mean(vals[::2]))
        excess = center_val - mean32
        allowed = base_tol * max(1.0, abs(mean32)) + abs(mean32 - mean16)
        if excess > allowed:
            violations += 1
            worst = max(worst, excess)
            if len(witnesses) < 10:
                witnesses.append(tuple(complex(v) for v in c))
    return ViolationReport(trials, violations, worst, tuple(witnesses))


# ---------------------------------------------------------------------------
# convergence diagnostics
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class MeasureEstimate:
    value: float
    std_error: float
    samples: int


def _indexed(phi_seq, j):
    if isinstance(phi_seq, str):
        phi_seq = parse_expr(phi_seq)
    if isinstance(phi_seq, Expr):
        return as_function(phi_seq, {"j": float(j)})
    if callable(phi_seq):
        try:
            out = phi_seq(j)
        except TypeError:
            out = None
        if isinstance(out, (str, Expr)) or callable(out):
            return as_function(out)
    raise TypeError("phi_seq must be an expression in parameter j or a callable j -> phi_j")


def convergence_in_measure(phi_seq, phi, region: Polydisc, delta: float, j: int,
                           samples: int = 200_000, seed: int = 0) -> MeasureEstimate:
    """Monte Carlo measure of {|phi_j - phi| > delta} within the region."""
    fj = _indexed(phi_seq, j)
    f = as_function(phi)
    pts = region.sample(np.random.default_rng(seed), samples)
    with np.errstate(all="ignore"):
        a = np.asarray(fj(pts), dtype=float)
        b = np.asarray(f(pts), dtype=float)
        diff = np.where(a == b, 0.0, np.abs(a - b))
    hit = np.nan_to_num(diff, nan=0.0) > delta
    frac = float(np.mean(hit))
    vol = region.volume()
    return MeasureEstimate(vol * frac, vol * math.sqrt(frac * (1 - frac) / samples), samples)


def exp_gap_lp(phi, phi_j, p: float, region: Polydisc, tol: float = 1e-8,
               singular_points: Sequence = (), check_samples: int = 4000, seed: int = 0) -> IntegralEstimate:
    """Integral of |e^{phi - phi_j} - 1|^p over the region (requires phi_j <= phi)."""
    if p <= 0:
        raise ValueError("p must be positive")
    f = as_function(phi)
    fj = as_function(phi_j)
    pts = region.sample(np.random.default_rng(seed), check_samples)
    with np.errstate(all="ignore"):
        a = np.asarray(f(pts), dtype=float)
        b = np.asarray(fj(pts), dtype=float)
    bad = np.nonzero(b > a + 1e-12 * np.maximum(1.0, np.abs(a)))[0]
    if bad.size:
        w = pts[bad[0]]
        raise ValueError(f"phi_j > phi at {[complex(c) for c in w]}")

    def gap(points):
        with np.errstate(all="ignore"):
            x = np.asarray(f(points), dtype=float)
            y = np.asarray(fj(points), dtype=float)
            d = np.where(x == y, 0.0, x - y)
            return np.abs(np.expm1(d)) ** p

    return integrate(gap, region, tol, singular_points)
