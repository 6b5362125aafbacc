"""Singular hermitian metrics on trivial bundles over polydiscs.

A metric of rank r in dimension n is an r x r hermitian matrix of
expressions ``H_ij = <e_i, e_j>_h`` in a fixed holomorphic frame.  Only the
upper triangle is stored; entry (j, i) is the conjugate of entry (i, j).
For a section ``F = sum F_i e_i`` the pointwise squared norm is
``sum_ij H_ij F_i conj(F_j)``.

Metrics built from diagonal monomial weights keep a *monomial model*
annotation (exponents of ``|z_i - o_i|``) through ``twist`` and
``normalize``; the capacity and exponent computations use it for closed
forms.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, replace
from typing import Mapping, Sequence

import numpy as np
import scipy.linalg

from .expr import (BinOp, EvalPoint, Expr, Func, Num, as_expr, coord, evaluate, func,
                   max_coord, parse_expr, to_text)

PSD_TOL = 1e-10


class MetricError(ValueError):
    pass


# ---------------------------------------------------------------------------
# domains and sections
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Polydisc:
    center: tuple
    radii: tuple

    def __post_init__(self):
        center = tuple(complex(c) for c in np.atleast_1d(self.center))
        radii = tuple(float(r) for r in np.atleast_1d(self.radii))
        if len(center) != len(radii):
            raise ValueError("center and radii must have the same length")
        if not radii or any(not (r > 0) for r in radii):
            raise ValueError("radii must be positive")
        object.__setattr__(self, "center", center)
        object.__setattr__(self, "radii", radii)

    @classmethod
    def unit(cls, n: int = 1, radius: float = 1.0):
        return cls((0j,) * n, (radius,) * n)

    @property
    def dim(self) -> int:
        return len(self.radii)

    def contains(self, p, strict: bool = True) -> bool:
        p = np.atleast_1d(np.asarray(p, dtype=complex))
        d = np.abs(p - np.asarray(self.center))
        return bool(np.all(d < np.asarray(self.radii)) if strict else np.all(d <= np.asarray(self.radii)))

    def boundary_distance(self, p) -> float:
        p = np.atleast_1d(np.asarray(p, dtype=complex))
        return float(np.min(np.asarray(self.radii) - np.abs(p - np.asarray(self.center))))

    def sample(self, rng: np.random.Generator, count: int) -> np.ndarray:
        """Uniform random points, shape (count, n)."""
        n = self.dim
        r = np.sqrt(rng.random((count, n))) * np.asarray(self.radii)
        t = 2 * math.pi * rng.random((count, n))
        return np.asarray(self.center)[None, :] + r * np.exp(1j * t)

    def volume(self) -> float:
        return float(np.prod([math.pi * r * r for r in self.radii]))

    def scaled(self, factor: float) -> "Polydisc":
        return Polydisc(self.center, tuple(r * factor for r in self.radii))

    def to_dict(self):
        return {"center": [[c.real, c.imag] for c in self.center], "radii": list(self.radii)}


Monomials = Mapping[tuple, complex]


@dataclass(frozen=True)
class Section:
    """Holomorphic section: r polynomials in sparse monomial form."""

    components: tuple  # tuple of dict{exponent tuple -> complex}
    dim: int

    def __post_init__(self):
        comps = []
        for c in self.components:
            clean = {}
            for k, v in dict(c).items():
                k = tuple(int(e) for e in k)
                if len(k) != self.dim or any(e < 0 for e in k):
                    raise ValueError(f"bad exponent {k} for dimension {self.dim}")
                v = complex(v)
                if v != 0:
                    clean[k] = clean.get(k, 0) + v
            comps.append(clean)
        object.__setattr__(self, "components", tuple(comps))

    @classmethod
    def from_strings(cls, texts: Sequence[str], dim: int) -> "Section":
        return cls(tuple(polynomial_from_expr(parse_expr(t, params=(), dim=dim), dim) for t in texts), dim)

    @classmethod
    def monomial(cls, k: Sequence[int], rank: int = 1, slot: int = 0, coeff: complex = 1.0) -> "Section":
        comps = [dict() for _ in range(rank)]
        comps[slot] = {tuple(k): coeff}
        return cls(tuple(comps), len(k))

    @classmethod
    def constant(cls, values: Sequence[complex], dim: int) -> "Section":
        return cls(tuple({(0,) * dim: v} for v in values), dim)

    @property
    def rank(self) -> int:
        return len(self.components)

    def is_zero(self) -> bool:
        return all(not c for c in self.components)

    def evaluate(self, points) -> np.ndarray:
        """Values at points of shape (N, n) -> (N, r) complex."""
        z = np.asarray(points, dtype=complex)
        if z.ndim == 1:
            z = z[None, :]
        out = np.zeros((z.shape[0], self.rank), dtype=complex)
        for i, comp in enumerate(self.components):
            for k, c in comp.items():
                term = np.full(z.shape[0], c, dtype=complex)
                for d, e in enumerate(k):
                    if e:
                        term = term * z[:, d] ** e
                out[:, i] += term
        return out

    def shifted(self, origin) -> "Section":
        """Coefficients in powers of (z - origin)."""
        o = np.atleast_1d(np.asarray(origin, dtype=complex))
        comps = []
        for comp in self.components:
            new: dict = {}
            for k, c in comp.items():
                # prod_d (w_d + o_d)^{k_d}
                ranges = [range(e + 1) for e in k]
                for j in itertools.product(*ranges):
                    coef = c
                    for d in range(self.dim):
                        coef *= math.comb(k[d], j[d]) * o[d] ** (k[d] - j[d])
                    if coef != 0:
                        new[j] = new.get(j, 0) + coef
            comps.append(new)
        return Section(tuple(comps), self.dim)

    def plus(self, other: "Section", scale: complex = 1.0) -> "Section":
        comps = []
        for a, b in zip(self.components, other.components):
            d = dict(a)
            for k, v in b.items():
                d[k] = d.get(k, 0) + scale * v
            comps.append(d)
        return Section(tuple(comps), self.dim)

    def to_exprs(self) -> tuple:
        exprs = []
        for comp in self.components:
            e: Expr | None = None
            for k, c in sorted(comp.items()):
                term: Expr = as_expr(c)
                for d, p in enumerate(k):
                    if p:
                        term = term * (coord(d + 1) ** p if p > 1 else coord(d + 1))
                e = term if e is None else e + term
            exprs.append(e if e is not None else Num(0j))
        return tuple(exprs)

    def to_strings(self) -> list:
        return [to_text(e) for e in self.to_exprs()]


def polynomial_from_expr(e: Expr, dim: int) -> dict:
    """Expand an expression built from +, -, *, integer powers, literals and z_i."""
    from .expr import Coord, Neg, Pow

    if isinstance(e, Num):
        return {(0,) * dim: e.value} if e.value != 0 else {}
    if isinstance(e, Coord):
        k = [0] * dim
        k[e.index] = 1
        return {tuple(k): 1.0 + 0j}
    if isinstance(e, Neg):
        return {k: -v for k, v in polynomial_from_expr(e.arg, dim).items()}
    if isinstance(e, BinOp) and e.op in "+-":
        a = polynomial_from_expr(e.left, dim)
        b = polynomial_from_expr(e.right, dim)
        s = 1 if e.op == "+" else -1
        out = dict(a)
        for k, v in b.items():
            out[k] = out.get(k, 0) + s * v
        return {k: v for k, v in out.items() if v != 0}
    if isinstance(e, BinOp) and e.op == "*":
        return _poly_mul(polynomial_from_expr(e.left, dim), polynomial_from_expr(e.right, dim))
    if isinstance(e, Pow) and float(e.exponent).is_integer() and e.exponent >= 0:
        base = polynomial_from_expr(e.base, dim)
        out = {(0,) * dim: 1.0 + 0j}
        for _ in range(int(e.exponent)):
            out = _poly_mul(out, base)
        return out
    raise MetricError(f"section component is not a polynomial: {to_text(e)}")


def _poly_mul(a, b):
    out: dict = {}
    for ka, va in a.items():
        for kb, vb in b.items():
            k = tuple(x + y for x, y in zip(ka, kb))
            out[k] = out.get(k, 0) + va * vb
    return {k: v for k, v in out.items() if v != 0}


# ---------------------------------------------------------------------------
# metrics
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class MonomialModel:
    """Diagonal weights ``coeff_l * prod_i |z_i - o_i|^{-2 a[l][i]}``."""

    origin: tuple
    exponents: tuple  # r tuples of n reals
    coeffs: tuple     # r positive reals

    def total(self) -> np.ndarray:
        return np.sum(np.asarray(self.exponents, dtype=float), axis=0)


@dataclass(frozen=True)
class SingularMetric:
    rank: int
    dim: int
    upper: tuple  # upper[i][j - i] = H_ij for j >= i
    domain: Polydisc
    singular_points: tuple = ()
    model: MonomialModel | None = None
    labels: tuple = ()

    def __post_init__(self):
        if self.rank < 1 or self.dim < 1:
            raise MetricError("rank and dimension must be positive")
        if len(self.upper) != self.rank or any(len(row) != self.rank - i for i, row in enumerate(self.upper)):
            raise MetricError("upper triangle has the wrong shape")
        if self.domain.dim != self.dim:
            raise MetricError("domain dimension does not match metric dimension")
        for row in self.upper:
            for e in row:
                if max_coord(e) > self.dim:
                    raise MetricError(f"entry {to_text(e)} uses a coordinate beyond z{self.dim}")
        pts = tuple(tuple(complex(c) for c in np.atleast_1d(p)) for p in self.singular_points)
        object.__setattr__(self, "singular_points", pts)

    # construction ---------------------------------------------------------
    @classmethod
    def from_strings(cls, entries, dim: int, domain: Polydisc | None = None, singular_points=()) -> "SingularMetric":
        """``entries`` is either the full r x r list (lower triangle ignored) or the upper rows."""
        rows = [list(r) for r in entries]
        r = len(rows)
        upper = []
        for i in range(r):
            row = rows[i]
            vals = row[i:] if len(row) == r else row
            if len(vals) != r - i:
                raise MetricError("metric rows must be full or upper-triangular")
            upper.append(tuple(parse_expr(t, params=(), dim=dim) if isinstance(t, str) else as_expr(t) for t in vals))
        return cls(r, dim, tuple(upper), domain or Polydisc.unit(dim), tuple(singular_points))

    @classmethod
    def diagonal(cls, entries: Sequence, dim: int, domain: Polydisc | None = None, singular_points=()) -> "SingularMetric":
        r = len(entries)
        upper = []
        for i, e in enumerate(entries):
            e = parse_expr(e, params=(), dim=dim) if isinstance(e, str) else as_expr(e)
            upper.append((e,) + tuple(Num(0j) for _ in range(r - i - 1)))
        return cls(r, dim, tuple(upper), domain or Polydisc.unit(dim), tuple(singular_points))

    @classmethod
    def identity(cls, rank: int, dim: int, domain: Polydisc | None = None) -> "SingularMetric":
        return cls.diagonal([Num(1 + 0j)] * rank, dim, domain)

    @classmethod
    def monomial(cls, exponents, origin=None, coeffs=None, domain: Polydisc | None = None) -> "SingularMetric":
        """Diagonal metric with entries ``coeff_l prod_i |z_i - o_i|^{-2 a[l][i]}``.

        ``exponents`` is a list (one row per diagonal entry) of n exponents
        ``a[l][i]``; a scalar or flat list for rank one is accepted.
        """
        a = np.atleast_2d(np.asarray(exponents, dtype=float))
        r, n = a.shape
        o = tuple(complex(c) for c in (origin if origin is not None else [0j] * n))
        c = tuple(float(x) for x in (coeffs if coeffs is not None else [1.0] * r))
        entries = [_monomial_weight_expr(a[l], o, c[l]) for l in range(r)]
        dom = domain or Polydisc(o, (1.0,) * n)
        m = cls.diagonal(entries, n, dom, singular_points=(o,))
        return replace(m, model=MonomialModel(o, tuple(tuple(row) for row in a.tolist()), c))

    # access ------------------------------------------------------------------
    def entry(self, i: int, j: int) -> Expr:
        if j >= i:
            return self.upper[i][j - i]
        return func("conj", self.upper[j][i - j])

    def entry_texts(self):
        return [[to_text(e) for e in row] for row in self.upper]

    def values(self, points) -> np.ndarray:
        """Matrices at points (N, n) -> (N, r, r) complex."""
        z = np.asarray(points, dtype=complex)
        if z.ndim == 1:
            z = z[None, :]
        N, r = z.shape[0], self.rank
        out = np.empty((N, r, r), dtype=complex)
        for i in range(r):
            for j in range(i, r):
                v = evaluate(self.upper[i][j - i], z)
                out[:, i, j] = v
                if j != i:
                    out[:, j, i] = np.conj(v)
        return out

    def det_expr(self) -> Expr:
        return _det_expr([[self.entry(i, j) for j in range(self.rank)] for i in range(self.rank)])

    def is_diagonal(self) -> bool:
        return all(isinstance(e, Num) and e.value == 0 for row in self.upper for e in row[1:])

    def to_dict(self):
        return {
            "rank": self.rank,
            "dim": self.dim,
            "entries": self.entry_texts(),
            "singular_points": [[[c.real, c.imag] for c in p] for p in self.singular_points],
            "domain": self.domain.to_dict(),
        }


def _monomial_weight_expr(a_row, origin, coeff) -> Expr:
    e: Expr | None = None
    for i, ai in enumerate(a_row):
        if ai == 0:
            continue
        base = coord(i + 1) if origin[i] == 0 else coord(i + 1) - as_expr(origin[i])
        term = func("abs2", base) ** (-float(ai))
        e = term if e is None else e * term
    if e is None:
        return as_expr(coeff)
    return e if coeff == 1.0 else as_expr(coeff) * e


def _det_expr(m) -> Expr:
    r = len(m)
    if r == 1:
        return m[0][0]
    if r == 2:
        return m[0][0] * m[1][1] - m[0][1] * m[1][0]
    total: Expr | None = None
    for j in range(r):
        minor = [row[:j] + row[j + 1:] for row in m[1:]]
        term = m[0][j] * _det_expr(minor)
        if total is None:
            total = term
        elif j % 2:
            total = total - term
        else:
            total = total + term
    return total


# ---------------------------------------------------------------------------
# pointwise values
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class PointMetric:
    values: np.ndarray
    det: float
    eigenvalues: tuple
    flags: tuple = ()

    @property
    def finite(self) -> bool:
        return "nonfinite" not in self.flags and "undefined" not in self.flags


def point_metric_from_matrix(M: np.ndarray) -> PointMetric:
    M = np.asarray(M, dtype=complex)
    r = M.shape[0]
    if np.any(np.isnan(M)):
        return PointMetric(M, math.nan, tuple([math.nan] * r), ("undefined",))
    inf_diag = np.isinf(M.real.diagonal())
    if np.all(np.isfinite(M)):
        ev = scipy.linalg.eigvalsh(0.5 * (M + M.conj().T))
        det = float(np.real(np.linalg.det(M)))
        return PointMetric(M, det, tuple(float(x) for x in np.sort(ev)))
    offdiag_inf = np.isinf(M) & ~np.eye(r, dtype=bool)
    if offdiag_inf.any() or np.any(M.real.diagonal()[inf_diag] < 0):
        return PointMetric(M, math.nan, tuple([math.nan] * r), ("nonfinite", "undefined"))
    # +inf on the diagonal: in the limit the remaining eigenvalues are those
    # of the finite principal block (Schur complement of a diverging block)
    keep = ~inf_diag
    sub = M[np.ix_(keep, keep)]
    sub_ev = scipy.linalg.eigvalsh(0.5 * (sub + sub.conj().T)) if sub.size else np.array([])
    ev = sorted(sub_ev.tolist()) + [math.inf] * int(inf_diag.sum())
    sub_det = float(np.real(np.linalg.det(sub))) if sub.size else 1.0
    det = math.inf if sub_det > 0 else (math.nan if sub_det == 0 else -math.inf)
    return PointMetric(M, det, tuple(ev), ("nonfinite",))


def _point_coords(p) -> np.ndarray:
    if isinstance(p, EvalPoint):
        return np.asarray(p.coords, dtype=complex)
    return np.atleast_1d(np.asarray(p, dtype=complex))


def metric_at(h: SingularMetric, p) -> PointMetric:
    z = _point_coords(p)
    if z.shape[0] != h.dim:
        raise MetricError(f"point has dimension {z.shape[0]}, metric has {h.dim}")
    return point_metric_from_matrix(h.values(z[None, :])[0])


def det_values(h: SingularMetric, points) -> np.ndarray:
    """det h at points (N, n) with +inf where a diagonal entry diverges."""
    M = h.values(points)
    out = np.empty(M.shape[0])
    finite = np.all(np.isfinite(M), axis=(1, 2))
    if finite.any():
        out[finite] = np.real(np.linalg.det(M[finite]))
    for k in np.nonzero(~finite)[0]:
        out[k] = point_metric_from_matrix(M[k]).det
    return out


def log_det(h: SingularMetric, p) -> float:
    """phi(p) = -log det h(p); -inf where det is +inf, nan where det < 0."""
    d = metric_at(h, p).det
    return _neg_log(d)


def _neg_log(d):
    if math.isnan(d) or d < 0:
        return math.nan
    if d == 0:
        return math.inf
    if math.isinf(d):
        return -math.inf
    return -math.log(d)


def phi_values(h: SingularMetric, points) -> np.ndarray:
    d = det_values(h, points)
    with np.errstate(all="ignore"):
        out = -np.log(np.where(d > 0, d, 1.0))
    out = np.where(d == 0, np.inf, out)
    out = np.where(np.isinf(d) & (d > 0), -np.inf, out)
    return np.where((d < 0) | np.isnan(d), np.nan, out)


def dual_at(h_or_point, p=None) -> PointMetric:
    """Inverse transpose of the metric matrix at p."""
    pm = h_or_point if isinstance(h_or_point, PointMetric) else metric_at(h_or_point, p)
    if not pm.finite:
        raise MetricError("dual requires a finite metric value")
    M = pm.values
    if pm.eigenvalues[0] <= PSD_TOL * max(1.0, abs(pm.eigenvalues[-1])):
        raise MetricError("metric is singular at this point; dual undefined")
    D = np.linalg.inv(M).T
    return point_metric_from_matrix(D)


# ---------------------------------------------------------------------------
# algebra
# ---------------------------------------------------------------------------

def normalize(h: SingularMetric) -> SingularMetric:
    """h / det h, entrywise as expression composition."""
    if h.rank == 1:
        one = SingularMetric.identity(1, h.dim, h.domain)
        model = None
        if h.model is not None:
            model = MonomialModel(h.model.origin, (tuple(0.0 for _ in range(h.dim)),), (1.0,))
        return replace(one, singular_points=h.singular_points, model=model, labels=h.labels + ("normalized",))
    det = h.det_expr()
    upper = tuple(tuple(BinOp("/", e, det) for e in row) for row in h.upper)
    model = None
    if h.model is not None:
        A = h.model.total()
        prod_c = float(np.prod(h.model.coeffs))
        model = MonomialModel(
            h.model.origin,
            tuple(tuple(float(x) for x in np.asarray(row) - A) for row in h.model.exponents),
            tuple(c / prod_c for c in h.model.coeffs),
        )
    return replace(h, upper=upper, model=model, labels=h.labels + ("normalized",))


def twist(h: SingularMetric, beta: float = 0.0, psi: Expr | str | None = None) -> SingularMetric:
    """h (det h)^beta e^{-psi}."""
    beta = float(beta)
    if beta < 0:
        raise MetricError("beta must be nonnegative")
    if isinstance(psi, str):
        psi = parse_expr(psi, params=(), dim=h.dim)
    if beta == 0 and psi is None:
        return h
    factor: Expr | None = None
    if beta != 0:
        factor = Func("max", (h.det_expr(), Num(0j))) ** beta if h.rank > 1 else h.upper[0][0] ** beta
    if psi is not None:
        w = func("exp", -psi)
        factor = w if factor is None else factor * w
    upper = tuple(tuple(e * factor for e in row) for row in h.upper)
    model = None
    if h.model is not None:
        A = h.model.total()
        prod_c = float(np.prod(h.model.coeffs))
        extra = 1.0
        ok = True
        if psi is not None:
            const = _constant_value(psi)
            ok = const is not None
            extra = math.exp(-const) if ok else 1.0
        if ok:
            model = MonomialModel(
                h.model.origin,
                tuple(tuple(float(x) for x in np.asarray(row) + beta * A) for row in h.model.exponents),
                tuple(c * prod_c ** beta * extra for c in h.model.coeffs),
            )
    return replace(h, upper=upper, model=model)


def _constant_value(e: Expr):
    if max_coord(e) == 0:
        from .expr import parameters

        if not parameters(e):
            v = evaluate(e, np.zeros((1, 0), dtype=complex))[0]
            if np.isfinite(v) and np.imag(v) == 0:
                return float(np.real(v))
    return None


@dataclass(frozen=True)
class FamilyMetric:
    raw: SingularMetric
    normalized: SingularMetric
    s: float


def from_family(family, s: float, dim: int | None = None, domain: Polydisc | None = None,
                singular_points=()) -> FamilyMetric:
    """Gram metric H_ij = sum_alpha F_{alpha,i} conj(F_{alpha,j}) and H / (det H)^s.

    The normalised metric is singular Nakano semi-positive when
    ``s >= min(n, r)``; smaller exponents are rejected.
    """
    if not family:
        raise MetricError("family must be nonempty")
    sections = []
    for F in family:
        if isinstance(F, Section):
            sections.append(F)
        else:
            if dim is None:
                raise MetricError("dim is required when the family is given as strings")
            sections.append(Section.from_strings([str(c) for c in F], dim))
    n = sections[0].dim
    r = sections[0].rank
    if any(F.rank != r or F.dim != n for F in sections):
        raise MetricError("all family members must have the same rank and dimension")
    if s < min(n, r):
        raise MetricError(f"normalization exponent s={s} violates the hypothesis s >= min(n, r) = {min(n, r)}")
    comps = [F.to_exprs() for F in sections]
    upper = []
    for i in range(r):
        row = []
        for j in range(i, r):
            e: Expr | None = None
            for c in comps:
                term = c[i] * func("conj", c[j]) if j != i else func("abs2", c[i])
                e = term if e is None else e + term
            row.append(e)
        upper.append(tuple(row))
    dom = domain or Polydisc.unit(n)
    raw = SingularMetric(r, n, tuple(upper), dom, tuple(singular_points), labels=("gram",))
    det = raw.det_expr()
    scale = Func("max", (det, Num(0j))) ** (-float(s)) if r > 1 else raw.upper[0][0] ** (-float(s))
    norm_upper = tuple(tuple(e * scale for e in row) for row in upper)
    normalized = SingularMetric(r, n, norm_upper, dom, tuple(singular_points),
                                labels=("gram", "singular Nakano semi-positive (s >= min(n, r))"))
    return FamilyMetric(raw, normalized, float(s))


# ---------------------------------------------------------------------------
# sections
# ---------------------------------------------------------------------------

def section_norm2_values(h: SingularMetric, F: Section, points) -> np.ndarray:
    """sum_ij H_ij F_i conj(F_j) at points (N, n); nan marks 0 * inf ambiguity."""
    z = np.asarray(points, dtype=complex)
    if z.ndim == 1:
        z = z[None, :]
    if F.rank != h.rank:
        raise MetricError("section rank does not match metric rank")
    Fv = F.evaluate(z)
    if F.is_zero():
        return np.zeros(z.shape[0])
    M = h.values(z)
    coef = Fv[:, :, None] * np.conj(Fv[:, None, :])
    with np.errstate(all="ignore"):
        terms = np.where(coef == 0, 0.0, M * coef)
        total = np.sum(terms, axis=(1, 2))
    out = np.real(total)
    out = np.where(np.isfinite(out), np.maximum(out, 0.0), out)
    return out


def section_norm2(h: SingularMetric, F: Section, p) -> float:
    z = _point_coords(p)
    return float(section_norm2_values(h, F, z[None, :])[0])


# ---------------------------------------------------------------------------
# regularization, order, curvature
# ---------------------------------------------------------------------------

def regularize(h: SingularMetric, eps: float, p, tol: float = 1e-9) -> PointMetric:
    """(h*_eps + eps Id)^* e^{-eps |z|^2} at p, with h* the dual mollified at scale eps."""
    from . import psh

    z = _point_coords(p)
    if eps <= 0:
        raise MetricError("eps must be positive")
    if h.domain.boundary_distance(z) <= eps:
        raise MetricError("point is within eps of the domain boundary")
    r = h.rank

    def dual_entries(points):
        M = h.values(points)
        out = np.zeros((M.shape[0], 2 * r * r))
        finite = np.all(np.isfinite(M), axis=(1, 2))
        with np.errstate(all="ignore"):
            if finite.any():
                D = np.linalg.inv(M[finite]).transpose(0, 2, 1)
                out[finite, : r * r] = D.real.reshape(-1, r * r)
                out[finite, r * r:] = D.imag.reshape(-1, r * r)
        # non-finite metric values (poles) have zero dual
        out[~np.isfinite(out)] = 0.0
        return out

    mollified = psh.mollify_vector(dual_entries, eps, z, h.dim, tol=tol, singular_points=h.singular_points)
    D = (mollified[: r * r] + 1j * mollified[r * r:]).reshape(r, r)
    D = D + eps * np.eye(r)
    H = np.linalg.inv(D).T * math.exp(-eps * float(np.sum(np.abs(z) ** 2)))
    return point_metric_from_matrix(H)


@dataclass(frozen=True)
class OrderReport:
    per_sample: tuple  # ((a_geq_b, reversal_psd), ...)
    skipped: int
    verdict: bool

    def to_dict(self):
        return {"verdict": self.verdict, "skipped": self.skipped,
                "per_sample": [list(x) for x in self.per_sample]}


def _psd(M, tol=PSD_TOL, scale=1.0):
    M = 0.5 * (M + M.conj().T)
    ev = np.linalg.eigvalsh(M)
    scale = max(scale, float(np.max(np.abs(ev))))
    return bool(ev[0] >= -tol * scale)


def check_order_matrices(A, B) -> tuple:
    """(A >= B, det(A) B - det(B) A >= 0), tolerances relative to the terms compared."""
    A = np.asarray(A, dtype=complex)
    B = np.asarray(B, dtype=complex)
    dA = float(np.real(np.linalg.det(A)))
    dB = float(np.real(np.linalg.det(B)))
    s1 = max(1.0, float(np.max(np.abs(A))), float(np.max(np.abs(B))))
    s2 = max(1.0, abs(dA) * float(np.max(np.abs(B))), abs(dB) * float(np.max(np.abs(A))))
    return _psd(A - B, scale=s1), _psd(dA * B - dB * A, scale=s2)


def check_order(hA: SingularMetric, hB: SingularMetric, samples) -> OrderReport:
    """Per sample: A >= B, and det(A) B - det(B) A >= 0 (the normalized reversal)."""
    rows = []
    skipped = 0
    for p in samples:
        z = _point_coords(p)
        A = hA.values(z[None, :])[0]
        B = hB.values(z[None, :])[0]
        if not (np.all(np.isfinite(A)) and np.all(np.isfinite(B))):
            skipped += 1
            continue
        rows.append(check_order_matrices(A, B))
    verdict = bool(rows) and all(a and b for a, b in rows)
    return OrderReport(tuple(rows), skipped, verdict)


def _gram_matrix(h: SingularMetric, points):
    # matrix G with |F|^2 = F^* G F, i.e. G = H^T
    return np.transpose(h.values(points), (0, 2, 1))


def _curvature(h: SingularMetric, z, step):
    """Theta[j, k] = -d/dzbar_k (G^{-1} dG/dz_j) by nested central differences."""
    n, r = h.dim, h.rank
    units = np.eye(n, dtype=complex)

    def conn(points):
        # A_j = G^{-1} dG/dz_j at each point, shape (N, n, r, r)
        N = points.shape[0]
        offs = []
        for j in range(n):
            for s in (step, -step):
                offs.append(points + s * units[j])
                offs.append(points + 1j * s * units[j])
        G = _gram_matrix(h, np.concatenate([points] + offs))
        if not np.all(np.isfinite(G)):
            raise MetricError("singular point within the finite-difference stencil")
        Ginv = np.linalg.inv(G[:N])
        A = np.empty((N, n, r, r), dtype=complex)
        for j in range(n):
            base = N * (1 + 4 * j)
            gxp, gyp, gxm, gym = (G[base + N * q: base + N * (q + 1)] for q in range(4))
            dz = 0.25 * ((gxp - gxm) - 1j * (gyp - gym)) / step
            A[:, j] = Ginv @ dz
        return A

    stencil = []
    for k in range(n):
        for s in (step, -step):
            stencil.append(z + s * units[k])
            stencil.append(z + 1j * s * units[k])
    A = conn(np.array(stencil))
    Theta = np.empty((n, n, r, r), dtype=complex)
    for k in range(n):
        axp, ayp, axm, aym = A[4 * k], A[4 * k + 1], A[4 * k + 2], A[4 * k + 3]
        dzbar = 0.25 * ((axp - axm) + 1j * (ayp - aym)) / step
        for j in range(n):
            Theta[j, k] = -dzbar[j]
    return Theta


def nakano_min_eigenvalue(h: SingularMetric, p, step: float | None = None) -> float:
    """Smallest eigenvalue of the Chern curvature as a form on C^n (x) C^r.

    The curvature ``Theta_{jk} = -d/dzbar_k (G^{-1} dG/dz_j)`` of the matrix
    ``G = H^T`` (so that ``|F|^2 = F^* G F``) is taken by nested central
    differences at ``step`` and ``2 step`` and Richardson-extrapolated.  The
    Nakano form ``sum <Theta_{jk} u_j, u_k>_G`` is then diagonalised against
    ``I (x) G`` so eigenvalues are measured in the metric itself.
    """
    z = _point_coords(p)
    n, r = h.dim, h.rank
    if step is None:
        step = 1e-3 * max(1e-3, h.domain.boundary_distance(z))
    Theta = (4 * _curvature(h, z, step) - _curvature(h, z, 2 * step)) / 3
    G = _gram_matrix(h, z[None, :])[0]
    M = np.zeros((n * r, n * r), dtype=complex)
    for k in range(n):
        for j in range(n):
            M[k * r:(k + 1) * r, j * r:(j + 1) * r] = G @ Theta[j, k]
    M = 0.5 * (M + M.conj().T)
    Bm = np.kron(np.eye(n), 0.5 * (G + G.conj().T))
    ev = scipy.linalg.eigh(M, Bm, eigvals_only=True)
    return float(ev[0])


def eigenvalue_chain_holds(pm: PointMetric, rtol: float = 1e-8) -> bool:
    """lambda_r <= det / lambda_1^{r-1} at a finite positive-definite value."""
    ev = pm.eigenvalues
    if not pm.finite or ev[0] <= 0:
        return True
    r = len(ev)
    return ev[-1] <= pm.det / ev[0] ** (r - 1) * (1 + rtol)
