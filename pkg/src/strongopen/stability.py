"""Monotone metric sequences and L^p stability experiments.

A sequence ``h_j`` decreasing to ``h`` (``h_j >= h``) with ``-log det h_j``
converging in measure to ``-log det h`` has ``union_j E(h_j) = E(h)``, and
``|F_j|^2_{h_j}`` converges to ``|F|^2_h`` in L^p near ``o`` for every
``p < 1 + c`` where ``c`` is the singularity exponent of (h, F) at ``o``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .metric import (MetricError, Polydisc, Section, SingularMetric, check_order, phi_values,
                     section_norm2_values, twist)
from .openness import ExponentBracket, membership, singularity_exponent
from .psh import mollify
from .quad import Verdict, integrability_at, integrate

RULES = ("Scale", "Offset", "Mollify")


class HypothesisViolation(MetricError):
    """A generated metric breaks h_j >= h (or phi_j <= phi) at a sampled point."""

    def __init__(self, message, j, witness):
        super().__init__(message)
        self.j = j
        self.witness = witness


@dataclass(frozen=True)
class MetricSequenceSpec:
    """Rule for h_j.

    ``Scale``: phi_j = (1 + 1/j) phi, realised as h_j = h (det h)^{1/(j r)}.
    ``Offset``: h_j = h e^{1/j}.
    ``Mollify``: phi_j = phi * rho_{1/j}; for psh phi this gives phi_j >= phi,
    so h_j <= h and the sampled check rejects it.
    """

    base: SingularMetric
    rule: str = "Scale"
    j_range: tuple = (1, 32)
    samples: int = 64
    seed: int = 0

    def __post_init__(self):
        if self.rule not in RULES:
            raise ValueError(f"unknown rule {self.rule!r}; expected one of {RULES}")
        lo, hi = self.j_range
        if not (1 <= lo <= hi):
            raise ValueError("j_range must satisfy 1 <= lo <= hi")

    @property
    def indices(self):
        return list(range(self.j_range[0], self.j_range[1] + 1))


@dataclass(frozen=True)
class MetricSequence:
    spec: MetricSequenceSpec
    indices: tuple
    metrics: tuple

    def __iter__(self):
        return iter(zip(self.indices, self.metrics))

    def __len__(self):
        return len(self.metrics)

    def at(self, j: int) -> SingularMetric:
        return self.metrics[self.indices.index(j)]


def sequence_member(base: SingularMetric, rule: str, j: int) -> SingularMetric:
    if rule == "Scale":
        return twist(base, 1.0 / (j * base.rank))
    if rule == "Offset":
        return twist(base, 0.0, psi=f"{-1.0 / j!r}")
    raise MetricError(f"rule {rule!r} has no closed-form metric")


def _sample_points(spec: MetricSequenceSpec):
    pts = spec.base.domain.sample(np.random.default_rng(spec.seed), spec.samples)
    return pts


def build_sequence(spec: MetricSequenceSpec, indices: Sequence[int] | None = None) -> MetricSequence:
    """Generate h_j and verify phi_j <= phi and h_j >= h (with the normalized reversal) at samples."""
    base = spec.base
    pts = _sample_points(spec)
    js = list(indices) if indices is not None else spec.indices
    with np.errstate(all="ignore"):
        phi = phi_values(base, pts)
    if spec.rule == "Scale" and np.any(phi[np.isfinite(phi)] >= 0):
        k = int(np.nonzero(np.isfinite(phi) & (phi >= 0))[0][0])
        raise HypothesisViolation("Scale rule needs phi < 0 on the domain", js[0], complex(pts[k][0]))
    if spec.rule == "Mollify":
        _reject_mollify(spec, js, pts, phi)
    metrics = []
    for j in js:
        hj = sequence_member(base, spec.rule, j)
        with np.errstate(all="ignore"):
            phij = phi_values(hj, pts)
        ok = np.isfinite(phi) & np.isfinite(phij)
        bad = np.nonzero(ok & (phij > phi + 1e-12 * np.maximum(1.0, np.abs(phi))))[0]
        if bad.size:
            raise HypothesisViolation(f"phi_j > phi for j={j}", j, tuple(complex(c) for c in pts[bad[0]]))
        rep = check_order(hj, base, pts)
        for k, (geq, rev) in enumerate(rep.per_sample):
            if not (geq and rev):
                raise HypothesisViolation(f"h_j >= h fails for j={j} at a sampled point", j, None)
        metrics.append(hj)
    return MetricSequence(spec, tuple(js), tuple(metrics))


def _reject_mollify(spec, js, pts, phi):
    base = spec.base
    for j in js:
        eps = 1.0 / j
        for k, p in enumerate(pts[: min(8, len(pts))]):
            if base.domain.boundary_distance(p) <= eps or not np.isfinite(phi[k]):
                continue
            pj = mollify(lambda q: phi_values(base, q), eps, p, tol=1e-8,
                         singular_points=base.singular_points)
            if pj > phi[k] + 1e-9:
                raise HypothesisViolation(
                    f"Mollify rule gives phi_j = {pj:.6g} > phi = {phi[k]:.6g} (so h_j < h) for j={j}",
                    j, tuple(complex(c) for c in p))
    raise HypothesisViolation("Mollify rule: no interior sample available to evaluate phi_j", js[0], None)


# ---------------------------------------------------------------------------
# sections
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SectionSequence:
    """F_j = F + (1/j) F' (F' = None gives the constant sequence)."""

    F: Section
    direction: Section | None = None

    def at(self, j: int) -> Section:
        if self.direction is None:
            return self.F
        return self.F.plus(self.direction, 1.0 / j)


def _as_section_sequence(F) -> SectionSequence:
    return F if isinstance(F, SectionSequence) else SectionSequence(F)


# ---------------------------------------------------------------------------
# L^p stability
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class StabilityReport:
    p: float
    per_j: tuple        # ((j, gap, error), ...)
    c_estimate: float
    verdict: str        # Decaying / NotDecaying
    target: float = 1e-3

    def to_csv(self) -> str:
        lines = ["j,gap,error"] + [f"{j},{g:.17g},{e:.17g}" for j, g, e in self.per_j]
        return "\n".join(lines) + "\n"

    def to_dict(self):
        return {"p": self.p, "c_estimate": self.c_estimate, "verdict": self.verdict,
                "target": self.target, "final_gap": self.per_j[-1][1] if self.per_j else None,
                "per_j": [[j, g, e] for j, g, e in self.per_j]}


def decay_verdict(gaps: Sequence[float], target: float = 1e-3) -> str:
    """Decaying iff the last three gaps are each <= half the first and the last is <= target."""
    g = list(gaps)
    if len(g) < 4:
        return "NotDecaying"
    first = g[0]
    ok = all(x <= 0.5 * first for x in g[-3:]) and g[-1] <= target
    if first == 0:
        ok = all(x == 0 for x in g)
    return "Decaying" if ok else "NotDecaying"


def stability_lp(base: SingularMetric, seq: MetricSequence, F, p: float, region: Polydisc, o,
                 tol: float = 1e-8, target: float = 1e-3, exponent: ExponentBracket | None = None,
                 jobs: int = 1) -> StabilityReport:
    """Per-j value of int_region | |F_j|^2_{h_j} - |F|^2_h |^p."""
    if p <= 0:
        raise ValueError("p must be positive")
    o = np.atleast_1d(np.asarray(o, dtype=complex))
    Fs = _as_section_sequence(F)
    bracket = exponent or singularity_exponent(base, Fs.F, o)
    if bracket.flag == "NotMember":
        raise MetricError("F is not in E(h) at o")
    c = bracket.lo
    if p >= 1 + c:
        raise ValueError(f"p = {p} is outside the stability range 0 < p < 1 + c (c >= {c:.4g}); "
                         "L^p convergence is only guaranteed below 1 + c")
    rows = []
    sing = [tuple(o)]
    for j, hj in seq:
        Fj = Fs.at(j)
        if not membership(base, Fj, o).member:
            raise MetricError(f"F_{j} is not in E(h) at o")

        def gap(points, hj=hj, Fj=Fj):
            a = section_norm2_values(hj, Fj, points)
            b = section_norm2_values(base, Fs.F, points)
            with np.errstate(all="ignore"):
                d = np.where(a == b, 0.0, a - b)
            return np.abs(d) ** p

        est = integrate(gap, region, tol, singular_points=sing, jobs=jobs)
        rows.append((int(j), float(est.value), float(est.abs_error)))
    verdict = decay_verdict([g for _, g, _ in rows], target)
    return StabilityReport(float(p), tuple(rows), float(c), verdict, target)


def union_sheaf_check(base: SingularMetric, seq: MetricSequence, F: Section, o):
    """Smallest j whose h_j gives a Converges verdict for |F|^2_{h_j} at o, or None."""
    o = np.atleast_1d(np.asarray(o, dtype=complex))
    if not membership(base, F, o).member:
        raise MetricError("F is not in E(h) at o")
    rho0 = 0.5 * base.domain.boundary_distance(o)
    for j, hj in seq:
        v = integrability_at(lambda pts, hj=hj: section_norm2_values(hj, F, pts), o, rho0)
        if v.verdict is Verdict.CONVERGES:
            return int(j)
    return None
