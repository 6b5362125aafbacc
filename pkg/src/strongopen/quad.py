"""Adaptive integration over polydiscs with singular integrands.

Each factor disc is parametrised in polar form ``z_i = c_i + r_i e^{i theta_i}``
so a cell is a box in ``(r_1, theta_1, ..., r_n, theta_n)`` and the area
element contributes ``r_1 ... r_n``.  Cells carry a tensor Gauss-Legendre
rule; the error indicator for each direction is the difference to the same
rule with two fewer nodes along that direction, and the worst direction is
halved.

A declared singular point at the centre of the region is handled by dyadic
polydisc shells.  Shell integrals of a power-like singularity decay
geometrically; the tail past the last shell is extrapolated from the fitted
ratio, and a ratio that does not decay flags ``DivergenceSuspected``.

Reproducibility: cells are refined in fixed-size batches chosen by
(error, id), evaluated in fixed-size chunks (threads only change which
worker evaluates a chunk) and summed with compensated summation in id
order, so the result is bitwise independent of ``jobs``.
"""

from __future__ import annotations

import heapq
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, Sequence

import numpy as np

from . import _kernels
from .expr import as_function
from .metric import Polydisc

ORDERS = {1: 7, 2: 5, 3: 4}
DEFAULT_MAX_CELLS = 2_000_000
_BATCH = 32
_CHUNK = 8
_MIN_SHELLS = 4
_MAX_SHELLS = 400
_DIVERGENCE_SLOPE = -0.01


class Status(str, Enum):
    CONVERGED = "Converged"
    MAX_CELLS = "MaxCellsReached"
    DIVERGENCE = "DivergenceSuspected"


class Verdict(str, Enum):
    CONVERGES = "Converges"
    DIVERGES = "Diverges"
    INDETERMINATE = "Indeterminate"


@dataclass(frozen=True)
class IntegralEstimate:
    value: float
    abs_error: float
    cells_used: int
    status: Status

    @property
    def converged(self) -> bool:
        return self.status is Status.CONVERGED

    def to_dict(self):
        return {
            "value": _json_float(self.value),
            "abs_error": _json_float(self.abs_error),
            "cells_used": int(self.cells_used),
            "status": self.status.value,
        }


@dataclass(frozen=True)
class VectorEstimate:
    """Componentwise estimate for vector-valued integrands."""

    values: np.ndarray
    abs_errors: np.ndarray
    cells_used: int
    status: Status


@dataclass(frozen=True)
class IntegrabilityVerdict:
    verdict: Verdict
    annulus_integrals: tuple  # ((level, I_j), ...)
    decay_slope: float
    fit_residual: float = 0.0
    radii: tuple = ()

    def to_dict(self):
        return {
            "verdict": self.verdict.value,
            "decay_slope": _json_float(self.decay_slope),
            "fit_residual": _json_float(self.fit_residual),
            "annulus_integrals": [[j, _json_float(v)] for j, v in self.annulus_integrals],
        }

    def annulus_csv(self) -> str:
        lines = ["level,inner_radius,outer_radius,integral,running_sum"]
        running = 0.0
        for (j, value), (r_in, r_out) in zip(self.annulus_integrals, self.radii):
            running += value
            lines.append(f"{j},{r_in:.17g},{r_out:.17g},{value:.17g},{running:.17g}")
        return "\n".join(lines) + "\n"


def _json_float(x):
    x = float(x)
    if math.isfinite(x):
        return x
    return "inf" if x > 0 else ("-inf" if x < 0 else "nan")


# ---------------------------------------------------------------------------
# tensor rules
# ---------------------------------------------------------------------------

def _gl01(p):
    x, w = np.polynomial.legendre.leggauss(p)
    return 0.5 * (x + 1.0), 0.5 * w


@dataclass
class _Rule:
    dims: int
    p: int
    nodes: np.ndarray = field(init=False)     # (M_total, dims) unit-box nodes
    weights: np.ndarray = field(init=False)   # (M_total,)
    segments: list = field(init=False)        # [(start, stop)] main rule, then per-dim lower rules

    def __post_init__(self):
        xp, wp = _gl01(self.p)
        xq, wq = _gl01(self.p - 2)
        blocks, weights, segments = [], [], []
        start = 0
        for lower_dim in [None] + list(range(self.dims)):
            axes_x = [xq if d == lower_dim else xp for d in range(self.dims)]
            axes_w = [wq if d == lower_dim else wp for d in range(self.dims)]
            grid = np.stack(np.meshgrid(*axes_x, indexing="ij"), axis=-1).reshape(-1, self.dims)
            wgrid = np.ones(1)
            for w in axes_w:
                wgrid = np.multiply.outer(wgrid, w).ravel()
            blocks.append(grid)
            weights.append(wgrid)
            segments.append((start, start + grid.shape[0]))
            start += grid.shape[0]
        self.nodes = np.concatenate(blocks)
        self.weights = np.concatenate(weights)
        self.segments = segments


_RULES: dict[int, _Rule] = {}


def _rule(n: int) -> _Rule:
    if n not in ORDERS:
        raise ValueError(f"dimension n={n} not supported (1 <= n <= 3)")
    if n not in _RULES:
        _RULES[n] = _Rule(2 * n, ORDERS[n])
    return _RULES[n]


# ---------------------------------------------------------------------------
# adaptive core
# ---------------------------------------------------------------------------

class _Integrand:
    """Wraps ``f`` (and optionally an indicator) for cell evaluation."""

    def __init__(self, f, region: Polydisc, indicator=None, jobs: int = 1):
        self.f = f
        self.indicator = indicator
        self.center = np.asarray(region.center, dtype=complex)
        self.n = region.dim
        self.rule = _rule(self.n)
        self.jobs = max(1, int(jobs))
        self.m = None  # number of components, fixed on first call
        d = 2 * self.n
        # cell corners guard the strip between the outermost nodes and the cell edge
        self.corners = ((np.arange(2 ** d)[:, None] >> np.arange(d)[None, :]) & 1).astype(float)
        self.scale = np.empty(d)
        self.scale[0::2] = np.asarray(region.radii, dtype=float)
        self.scale[1::2] = 2 * math.pi

    def _eval_chunk(self, lo, hi):
        rule = self.rule
        n = self.n
        width = hi - lo
        x = lo[:, None, :] + width[:, None, :] * rule.nodes[None, :, :]
        r = x[..., 0::2]
        theta = x[..., 1::2]
        z = self.center[None, None, :] + r * np.exp(1j * theta)
        pts = z.reshape(-1, n)
        with np.errstate(all="ignore"):
            vals = np.asarray(self.f(pts), dtype=float)
        if vals.ndim == 1:
            vals = vals[:, None]
        vals = vals.reshape(lo.shape[0], rule.nodes.shape[0], -1)
        if self.indicator is not None:
            ind = np.asarray(self.indicator(pts), dtype=bool).reshape(lo.shape[0], rule.nodes.shape[0])
            xc = lo[:, None, :] + width[:, None, :] * self.corners[None, :, :]
            zc = self.center[None, None, :] + xc[..., 0::2] * np.exp(1j * xc[..., 1::2])
            with np.errstate(all="ignore"):
                cind = np.asarray(self.indicator(zc.reshape(-1, n)), dtype=bool).reshape(lo.shape[0], -1)
        else:
            ind = cind = None
        jac = np.prod(r, axis=-1) * np.prod(width, axis=-1)[:, None]
        return vals, (ind, cind), jac

    def evaluate(self, lo, hi):
        """Return (main value (B,m), per-dim errors (B,2n), ambiguity (B,), finite mask (B,))."""
        B = lo.shape[0]
        chunks = [(s, min(s + _CHUNK, B)) for s in range(0, B, _CHUNK)]
        if self.jobs > 1 and len(chunks) > 1:
            with ThreadPoolExecutor(max_workers=self.jobs) as pool:
                parts = list(pool.map(lambda c: self._eval_chunk(lo[c[0]:c[1]], hi[c[0]:c[1]]), chunks))
        else:
            parts = [self._eval_chunk(lo[a:b], hi[a:b]) for a, b in chunks]
        vals = np.concatenate([p[0] for p in parts])
        jac = np.concatenate([p[2] for p in parts])
        ind = None if self.indicator is None else np.concatenate([p[1][0] for p in parts])
        cind = None if self.indicator is None else np.concatenate([p[1][1] for p in parts])
        if self.m is None:
            self.m = vals.shape[2]
        finite = np.all(np.isfinite(vals), axis=(1, 2))
        vals = np.where(np.isfinite(vals), vals, 0.0)
        wj = self.rule.weights[None, :] * jac
        segs = self.rule.segments
        if ind is not None:
            inside = vals * ind[..., None]
        else:
            inside = vals
        a, b = segs[0]
        main = np.einsum("bm,bmk->bk", wj[:, a:b], inside[:, a:b])
        errs = np.empty((B, len(segs) - 1))
        for d, (a2, b2) in enumerate(segs[1:]):
            lower = np.einsum("bm,bmk->bk", wj[:, a2:b2], inside[:, a2:b2])
            errs[:, d] = np.max(np.abs(main - lower), axis=1)
        amb = np.zeros(B)
        amb_dim = np.full(B, -1)
        if ind is not None:
            main_ind = ind[:, a:b]
            mixed = main_ind.any(axis=1) & ~main_ind.all(axis=1)
            allc = np.concatenate([main_ind, cind], axis=1)
            guarded = ~mixed & allc.any(axis=1) & ~allc.all(axis=1)
            if mixed.any():
                outside = np.einsum("bm,bmk->bk", wj[:, a:b], vals[:, a:b] * (~ind[:, a:b])[..., None])
                amb = np.where(mixed, np.minimum(np.max(np.abs(main), axis=1), np.max(np.abs(outside), axis=1)), 0.0)
            if guarded.any():
                # nodes agree but a corner does not: the level set sits in the edge strip
                whole = np.einsum("bm,bmk->bk", wj[:, a:b], vals[:, a:b])
                amb = np.where(guarded, np.max(np.abs(whole), axis=1), amb)
            crosses = cind.any(axis=1) & ~cind.all(axis=1)
            if crosses.any():
                d = 2 * self.n
                rel = (hi - lo) / self.scale[None, :]
                score = np.full((B, d), -1.0)
                for k in range(d):
                    flip = np.arange(2 ** d) ^ (1 << k)
                    cut = np.any(cind != cind[:, flip], axis=1)
                    score[:, k] = np.where(cut, rel[:, k], -1.0)
                amb_dim = np.where(crosses & (amb > 0), np.argmax(score, axis=1), -1)
        return main, errs, (amb, amb_dim), finite


@dataclass
class _AdaptiveResult:
    value: np.ndarray
    error: float
    errors: np.ndarray
    cells: int
    converged: bool
    infinite: bool


def _adaptive(integrand: _Integrand, boxes_lo, boxes_hi, tol, max_cells) -> _AdaptiveResult:
    lo = np.asarray(boxes_lo, dtype=float).reshape(-1, 2 * integrand.n)
    hi = np.asarray(boxes_hi, dtype=float).reshape(-1, 2 * integrand.n)
    leaves: dict[int, tuple] = {}
    heap: list = []
    next_id = 0
    cells = 0
    infinite = False

    def add(lo_b, hi_b):
        nonlocal next_id, cells, infinite
        main, errs, (amb, amb_dim), finite = integrand.evaluate(lo_b, hi_b)
        cells += lo_b.shape[0]
        for k in range(lo_b.shape[0]):
            cid = next_id
            next_id += 1
            width = hi_b[k] - lo_b[k]
            if not finite[k]:
                small = np.all(width < 1e-12)
                if small:
                    infinite = True
                    leaves[cid] = (main[k], 0.0, np.zeros_like(main[k]))
                    continue
                err = math.inf
                dim = int(np.argmax(width))
            else:
                err = float(errs[k].sum() + amb[k])
                dim = int(np.argmax(errs[k])) if errs[k].max() > 0 else int(np.argmax(width))
                if amb[k] > errs[k].max() and amb_dim[k] >= 0:
                    # a level set crosses the cell; cut a side it crosses
                    dim = int(amb_dim[k])
            leaves[cid] = (main[k], err, np.full_like(main[k], err))
            if err > 0 and not np.all(width < 1e-14):
                heapq.heappush(heap, (-err, cid, lo_b[k].copy(), hi_b[k].copy(), dim))

    add(lo, hi)
    total_err = sum(v[1] for v in leaves.values())
    while heap and total_err > tol and cells < max_cells and not infinite:
        batch = []
        while heap and len(batch) < _BATCH:
            item = heapq.heappop(heap)
            batch.append(item)
        new_lo, new_hi = [], []
        for _, cid, blo, bhi, dim in batch:
            del leaves[cid]
            mid = 0.5 * (blo[dim] + bhi[dim])
            a_hi = bhi.copy()
            a_hi[dim] = mid
            b_lo = blo.copy()
            b_lo[dim] = mid
            new_lo += [blo, b_lo]
            new_hi += [a_hi, bhi]
        add(np.array(new_lo), np.array(new_hi))
        total_err = _kernels.neumaier_sum(np.array([v[1] for v in leaves.values()]))
    ids = sorted(leaves)
    values = np.array([leaves[i][0] for i in ids]).reshape(len(ids), -1)
    comp_errs = np.array([leaves[i][2] for i in ids]).reshape(len(ids), -1)
    errors = np.array([leaves[i][1] for i in ids])
    value = _kernels.neumaier_sum_columns(values)
    if infinite:
        value = np.full_like(value, math.inf)
    error = _kernels.neumaier_sum(errors) if np.all(np.isfinite(errors)) else math.inf
    comp = _kernels.neumaier_sum_columns(comp_errs) if np.all(np.isfinite(comp_errs)) else np.full(values.shape[1], math.inf)
    return _AdaptiveResult(value, float(error), comp, cells, error <= tol and not infinite, infinite)


# ---------------------------------------------------------------------------
# region decomposition
# ---------------------------------------------------------------------------

def _full_box(region: Polydisc):
    n = region.dim
    lo = np.zeros(2 * n)
    hi = np.empty(2 * n)
    hi[0::2] = region.radii
    hi[1::2] = 2 * math.pi
    return lo, hi


def _shell_boxes(region: Polydisc, k: int):
    """Boxes of P_k minus P_{k+1}, where P_k is the polydisc scaled by 2^-k."""
    n = region.dim
    R = np.asarray(region.radii, dtype=float)
    outer = R * 2.0 ** (-k)
    inner = R * 2.0 ** (-k - 1)
    los, his = [], []
    for mask in range(1, 2 ** n):
        lo = np.zeros(2 * n)
        hi = np.empty(2 * n)
        hi[1::2] = 2 * math.pi
        for i in range(n):
            if mask >> i & 1:
                lo[2 * i] = inner[i]
                hi[2 * i] = outer[i]
            else:
                lo[2 * i] = 0.0
                hi[2 * i] = inner[i]
        los.append(lo)
        his.append(hi)
    return np.array(los), np.array(his)


def _presplit(region: Polydisc, points):
    """Initial boxes with breakpoints clustering dyadically at off-centre points."""
    n = region.dim
    R = np.asarray(region.radii, dtype=float)
    center = np.asarray(region.center, dtype=complex)
    cuts_r = [{0.0, float(R[i])} for i in range(n)]
    cuts_t = [{0.0, 2 * math.pi} for _ in range(n)]
    for p in points:
        p = np.asarray(p, dtype=complex)
        for i in range(n):
            w = p[i] - center[i]
            r0 = abs(w)
            if r0 >= R[i]:
                continue
            cuts_r[i].add(r0)
            t0 = math.atan2(w.imag, w.real) % (2 * math.pi)
            cuts_t[i].add(t0)
            for level in range(1, 7):
                d = R[i] * 2.0 ** (-level - 1)
                for c in (r0 - d, r0 + d):
                    if 0 < c < R[i]:
                        cuts_r[i].add(c)
                if r0 > 0:
                    dt = min(math.pi / 2, d / r0)
                    for c in (t0 - dt, t0 + dt):
                        cuts_t[i].add(c % (2 * math.pi))
    axes = []
    for i in range(n):
        axes.append(sorted(cuts_r[i]))
        axes.append(sorted(cuts_t[i]))
    los, his = [], []
    for idx in np.ndindex(*[len(a) - 1 for a in axes]):
        los.append([axes[d][j] for d, j in enumerate(idx)])
        his.append([axes[d][j + 1] for d, j in enumerate(idx)])
    return np.array(los), np.array(his)


def _is_center(region: Polydisc, p) -> bool:
    p = np.asarray(p, dtype=complex)
    c = np.asarray(region.center, dtype=complex)
    return bool(np.all(np.abs(p - c) <= 1e-14 * np.asarray(region.radii)))


def _integrate_core(f, region: Polydisc, tol, singular_points, indicator, max_cells, jobs):
    integrand = _Integrand(f, region, indicator=indicator, jobs=jobs)
    singular_points = [tuple(np.atleast_1d(np.asarray(p, dtype=complex))) for p in (singular_points or ())]
    centered = any(_is_center(region, p) for p in singular_points)
    others = [p for p in singular_points if not _is_center(region, p)]

    if not centered:
        lo, hi = _presplit(region, others) if others else [a[None] for a in _full_box(region)]
        res = _adaptive(integrand, lo, hi, tol, max_cells)
        if res.infinite:
            return res.value, math.inf, res.errors, res.cells, Status.DIVERGENCE
        status = Status.CONVERGED if res.converged else Status.MAX_CELLS
        return res.value, res.error, res.errors, res.cells, status

    # dyadic shells towards the centre
    shell_values = []
    total = None
    total_err = 0.0
    comp_err = None
    cells = 0
    status = Status.MAX_CELLS
    tail = None
    first_mass = None
    for k in range(_MAX_SHELLS):
        tol_k = 0.5 * tol / ((k + 1) * (k + 2))
        lo, hi = _shell_boxes(region, k)
        res = _adaptive(integrand, lo, hi, tol_k, max(1, max_cells - cells))
        cells += res.cells
        if res.infinite:
            return np.full_like(res.value, math.inf), math.inf, res.errors, cells, Status.DIVERGENCE
        total = res.value.copy() if total is None else total + res.value
        comp_err = res.errors.copy() if comp_err is None else comp_err + res.errors
        total_err += res.error
        shell_values.append(res.value)
        if first_mass is None and (indicator is None or np.any(res.value != 0)):
            first_mass = k
        # shells inside an empty sublevel set carry no information about the tail
        used = 0 if first_mass is None else k + 1 - first_mass
        if used >= _MIN_SHELLS:
            ratio_slope = _tail_slope(shell_values[first_mass:])
            if used >= 12 and ratio_slope >= _DIVERGENCE_SLOPE:
                return np.full_like(total, math.inf), math.inf, comp_err, cells, Status.DIVERGENCE
            if ratio_slope < 0:
                q = 2.0 ** ratio_slope
                tail = np.abs(shell_values[-1]) * q / (1.0 - q)
                if np.max(tail) <= tol / 4:
                    status = Status.CONVERGED if total_err <= 0.5 * tol else Status.MAX_CELLS
                    break
        if cells >= max_cells:
            break
    if tail is None:
        tail = np.full_like(total, math.inf)
    signed_tail = np.sign(shell_values[-1]) * tail
    value = total + signed_tail
    err = total_err + float(np.max(tail))
    if status is Status.CONVERGED and err > tol:
        status = Status.MAX_CELLS
    return value, err, comp_err + tail, cells, status


def _tail_slope(shells) -> float:
    """Mean log2 ratio of the last few shell magnitudes."""
    mags = np.array([float(np.max(np.abs(s))) for s in shells[-4:]])
    if np.any(mags == 0):
        if mags[-1] == 0:
            return -math.inf
        return 0.0
    return float(np.mean(np.diff(np.log2(mags))))


# ---------------------------------------------------------------------------
# public operations
# ---------------------------------------------------------------------------

def integrate(f: Callable, region: Polydisc, tol: float = 1e-8, singular_points: Sequence = (),
              max_cells: int = DEFAULT_MAX_CELLS, jobs: int = 1) -> IntegralEstimate:
    """Integrate ``f(points) -> values`` over ``region`` (Lebesgue measure on C^n).

    Parameters
    ----------
    f : callable
        Vectorised integrand; receives complex points of shape (N, n).
    region : Polydisc
    tol : float
        Absolute error target.
    singular_points : sequence of points
        Declared poles.  A pole at the centre of ``region`` triggers the
        dyadic shell decomposition with tail extrapolation; other poles get
        breakpoints clustered around them.
    max_cells : int
        Cell budget; exhausting it returns the best estimate with status
        ``MaxCellsReached``.
    jobs : int
        Worker threads for cell evaluation.  Does not change the result.
    """
    value, err, _, cells, status = _integrate_core(f, region, tol, singular_points, None, max_cells, jobs)
    return IntegralEstimate(float(value[0]), float(err), int(cells), status)


def integrate_vector(f: Callable, region: Polydisc, tol: float = 1e-8, singular_points: Sequence = (),
                     max_cells: int = DEFAULT_MAX_CELLS, jobs: int = 1) -> VectorEstimate:
    """Like :func:`integrate` for integrands returning (N, m) arrays."""
    value, err, comp, cells, status = _integrate_core(f, region, tol, singular_points, None, max_cells, jobs)
    return VectorEstimate(np.asarray(value), np.asarray(comp), int(cells), status)


def integrate_sublevel(f: Callable, phi: Callable, t: float, region: Polydisc, tol: float = 1e-8,
                       singular_points: Sequence = (), max_cells: int = DEFAULT_MAX_CELLS,
                       jobs: int = 1) -> IntegralEstimate:
    """Integrate ``f`` over ``region`` intersected with ``{phi < -t}``.

    Cells whose nodes disagree on the indicator carry an ambiguity term
    (the smaller of the masses on either side) in their error, so they keep
    being refined until the level set is resolved.
    """
    phi_f = _as_callable(phi)

    def indicator(pts):
        return phi_f(pts) < -t

    value, err, _, cells, status = _integrate_core(f, region, tol, singular_points, indicator, max_cells, jobs)
    return IntegralEstimate(float(value[0]), float(err), int(cells), status)


def _as_callable(phi):
    return as_function(phi)


# ---------------------------------------------------------------------------
# integrability detector: Euclidean dyadic annuli
# ---------------------------------------------------------------------------

def _tanh_sinh(level=6):
    h = 2.0 ** (-level) * 4
    k = np.arange(-int(4.0 / h) * 1, int(4.0 / h) + 1)
    u = k * h
    s = 0.5 * math.pi * np.sinh(u)
    x = np.tanh(s)
    w = 0.5 * math.pi * h * np.cosh(u) / np.cosh(s) ** 2
    x01 = 0.5 * (x + 1.0)
    w01 = 0.5 * w
    keep = (x01 > 0) & (x01 < 1)
    return x01[keep], w01[keep]


def _sphere_rule(n: int, angles: int = 16):
    """Points u on S^{2n-1} in C^n and weights summing to 1 (uniform measure)."""
    th = 2 * math.pi * np.arange(angles) / angles
    if n == 1:
        return np.exp(1j * th)[:, None], np.full(angles, 1.0 / angles)
    xs, ws = _tanh_sinh(5)
    if n == 2:
        s = xs
        sw = ws  # |u_1|^2 = s uniform on [0, 1]
        S = np.stack([s, 1 - s], axis=1)
        SW = sw
    elif n == 3:
        # uniform on the 2-simplex: s1 = x, s2 = (1 - x) y, density 2
        X, Y = np.meshgrid(xs, xs, indexing="ij")
        WX, WY = np.meshgrid(ws, ws, indexing="ij")
        s1 = X.ravel()
        s2 = ((1 - X) * Y).ravel()
        S = np.stack([s1, s2, 1 - s1 - s2], axis=1)
        SW = (2 * (1 - X) * WX * WY).ravel()
    else:
        raise ValueError("integrability_at supports 1 <= n <= 3")
    ang = np.stack(np.meshgrid(*([th] * n), indexing="ij"), axis=-1).reshape(-1, n)
    AW = np.full(ang.shape[0], 1.0 / ang.shape[0])
    U = (np.sqrt(np.clip(S, 0, 1))[:, None, :] * np.exp(1j * ang)[None, :, :]).reshape(-1, n)
    W = (SW[:, None] * AW[None, :]).ravel()
    return U, W


def annulus_integral(f, center, r_in, r_out, n, radial_nodes=24, angles=16):
    """Integral of f over {r_in <= |z - center| <= r_out} in C^n."""
    U, W = _sphere_rule(n, angles)
    x, w = _gl01(radial_nodes)
    lr = math.log(r_in) + (math.log(r_out) - math.log(r_in)) * x
    rho = np.exp(lr)
    wr = w * (math.log(r_out) - math.log(r_in)) * rho ** (2 * n)  # d rho = rho d log rho
    center = np.asarray(center, dtype=complex)
    pts = center[None, None, :] + rho[:, None, None] * U[None, :, :]
    with np.errstate(all="ignore"):
        vals = np.asarray(f(pts.reshape(-1, n)), dtype=float).reshape(len(rho), len(W))
    if not np.all(np.isfinite(vals)):
        return math.inf
    sphere_area = 2 * math.pi ** n / math.factorial(n - 1)
    return float(sphere_area * _kernels.neumaier_sum((wr[:, None] * vals * W[None, :]).ravel()))


def integrability_at(f: Callable, center, rho0: float, levels: int = 20, margin: float = 0.05,
                     growth: float = 1e6) -> IntegrabilityVerdict:
    """Tri-state integrability of ``f`` near ``center`` from dyadic annuli.

    ``I_j`` integrates over ``2^{-j-1} rho0 <= |z - center| <= 2^{-j} rho0``.
    The least-squares slope of ``log2 I_j`` against ``j`` decides: below
    ``-margin`` converges, above ``+margin`` (or partial sums beyond
    ``growth * I_0``) diverges, otherwise indeterminate.
    """
    if levels < 8:
        raise ValueError("levels must be at least 8")
    center = np.atleast_1d(np.asarray(center, dtype=complex))
    n = center.shape[0]
    values, radii = [], []
    for j in range(levels):
        r_out = rho0 * 2.0 ** (-j)
        r_in = 0.5 * r_out
        values.append(annulus_integral(f, center, r_in, r_out, n))
        radii.append((r_in, r_out))
    vals = np.array(values)
    table = tuple((j, float(v)) for j, v in enumerate(vals))
    if not np.all(np.isfinite(vals)):
        return IntegrabilityVerdict(Verdict.DIVERGES, table, math.inf, 0.0, tuple(radii))
    if np.all(vals == 0):
        return IntegrabilityVerdict(Verdict.CONVERGES, table, -math.inf, 0.0, tuple(radii))
    if np.any(vals <= 0):
        # zero shells (integrand vanishing on them) cannot diverge
        pos = vals > 0
        if pos.sum() < 3:
            return IntegrabilityVerdict(Verdict.CONVERGES, table, -math.inf, 0.0, tuple(radii))
    js = np.arange(levels)[vals > 0]
    lv = np.log2(vals[vals > 0])
    slope, intercept = np.polyfit(js, lv, 1)
    resid = float(np.sqrt(np.mean((lv - (slope * js + intercept)) ** 2)))
    partial = np.cumsum(vals)
    if slope < -margin:
        verdict = Verdict.CONVERGES
    elif slope > margin or partial[-1] > growth * vals[0]:
        verdict = Verdict.DIVERGES
    else:
        verdict = Verdict.INDETERMINATE
    return IntegrabilityVerdict(verdict, table, float(slope), resid, tuple(radii))


# ---------------------------------------------------------------------------
# one-dimensional adaptive rule
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Quad1D:
    value: float
    abs_error: float
    panels: int
    converged: bool


def quad1d(f: Callable, a: float, b: float, tol: float, breakpoints: Sequence[float] = (),
           order: int = 20, max_panels: int = 20000) -> Quad1D:
    """Adaptive Gauss-Legendre on [a, b] for a vectorised real ``f``.

    Each panel compares orders ``order`` and ``order // 2``; the panel with
    the largest discrepancy is bisected.  Deterministic.
    """
    xh, wh = _gl01(order)
    xl, wl = _gl01(max(2, order // 2))
    pts = sorted({float(a), float(b), *[float(p) for p in breakpoints if a < p < b]})

    def panel(lo, hi):
        w = hi - lo
        vals = np.asarray(f(np.concatenate([lo + w * xh, lo + w * xl])), dtype=float)
        hv = w * _kernels.neumaier_sum(wh * vals[:order])
        lv = w * _kernels.neumaier_sum(wl * vals[order:])
        return hv, abs(hv - lv)

    heap = []
    leaves = {}
    nid = 0
    for lo, hi in zip(pts[:-1], pts[1:]):
        v, e = panel(lo, hi)
        leaves[nid] = (v, e)
        heapq.heappush(heap, (-e, nid, lo, hi))
        nid += 1
    total_err = sum(e for _, e in leaves.values())
    while total_err > tol and len(leaves) < max_panels and heap:
        _, cid, lo, hi = heapq.heappop(heap)
        if hi - lo <= 1e-15 * max(1.0, abs(lo)):
            continue
        del leaves[cid]
        mid = 0.5 * (lo + hi)
        for l2, h2 in ((lo, mid), (mid, hi)):
            v, e = panel(l2, h2)
            leaves[nid] = (v, e)
            heapq.heappush(heap, (-e, nid, l2, h2))
            nid += 1
        total_err = _kernels.neumaier_sum(np.array([e for _, e in leaves.values()]))
    ids = sorted(leaves)
    value = _kernels.neumaier_sum(np.array([leaves[i][0] for i in ids]))
    err = _kernels.neumaier_sum(np.array([leaves[i][1] for i in ids]))
    return Quad1D(float(value), float(err), len(leaves), err <= tol)


# ---------------------------------------------------------------------------
# Fubini tail identity
# ---------------------------------------------------------------------------

def fubini_tail_residual(f: Callable, phi, region: Polydisc, tol: float = 1e-6,
                         singular_points: Sequence = (), samples: int = 2000, seed: int = 0,
                         jobs: int = 1) -> float:
    """|int f e^{-phi} - (int f + int_0^inf S(t) e^t dt)| with S(t) = int_{phi<-t} f.

    Valid for ``phi < 0`` on the region (checked on random samples).  The
    t-integral is truncated where ``S(t) e^t`` falls below ``tol * e^-5``.
    """
    phi_f = _as_callable(phi)
    pts = region.sample(np.random.default_rng(seed), samples)
    with np.errstate(all="ignore"):
        pv = phi_f(pts)
    if np.any(pv >= 0):
        raise ValueError("phi must be negative on the region")
    inner_tol = tol / 8

    def weighted(pts):
        with np.errstate(all="ignore"):
            fv = np.asarray(f(pts), dtype=float)
            return np.where(fv == 0, 0.0, fv * np.exp(-phi_f(pts)))

    lhs = integrate(weighted, region, inner_tol, singular_points, jobs=jobs)
    base = integrate(f, region, inner_tol, singular_points, jobs=jobs)
    if not (lhs.converged and base.converged):
        raise ValueError("one side of the identity does not converge")
    if base.value == 0 and lhs.value == 0:
        return 0.0

    cache = {}

    def S(t):
        key = float(t)
        if key not in cache:
            # S(t) is weighted by e^t, so its absolute tolerance shrinks accordingly
            cache[key] = integrate_sublevel(f, phi_f, key, region, inner_tol / 4 * math.exp(-key),
                                            singular_points, jobs=jobs).value
        return cache[key]

    def g(ts):
        return np.array([S(t) * math.exp(t) for t in np.atleast_1d(ts)])

    # find the truncation point by doubling
    cutoff = tol * math.exp(-5)
    T = 1.0
    while T < 200 and g([T])[0] > cutoff:
        T *= 2
    breaks = [0.25 * k for k in range(1, int(4 * T)) if 0.25 * k < T] if T <= 8 else [float(2 ** k) for k in range(int(math.log2(T)))]
    tail = quad1d(g, 0.0, T, tol / 4, breakpoints=breaks, order=8)
    rhs = base.value + tail.value
    return abs(lhs.value - rhs)
