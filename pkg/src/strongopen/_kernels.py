"""Hot numeric kernels.

Every kernel exists twice: a numba ``@njit`` version and a pure-numpy
version with the same signature.  The numba path is used by default; set
``STRONGOPEN_PURE_NUMPY=1`` in the environment (before import) to force the
numpy path, e.g. on platforms without a working LLVM or when debugging.
``benchmarks/bench_kernels.py`` times both.
"""

import math
import os

import numpy as np

EULER_GAMMA = 0.57721566490153286061

_FORCE_NUMPY = os.environ.get("STRONGOPEN_PURE_NUMPY", "").strip().lower() in {"1", "true", "yes"}

try:  # pragma: no cover - exercised implicitly
    if _FORCE_NUMPY:
        raise ImportError
    from numba import njit

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover
    HAVE_NUMBA = False


# ---------------------------------------------------------------------------
# numba implementations
# ---------------------------------------------------------------------------

def _e1_scalar(x):
    # series below 1, Lentz continued fraction above
    if x <= 0.0:
        return math.inf
    if x <= 1.0:
        total = 0.0
        term = 1.0
        k = 1
        while k < 200:
            term *= -x / k
            contrib = term / k
            total += contrib
            if abs(contrib) < 1e-17 * abs(total) + 1e-300:
                break
            k += 1
        return -EULER_GAMMA - math.log(x) - total
    return math.exp(_log_cf(x))


def _log_cf(x):
    # log of exp(x) * E1(x) computed with the modified Lentz algorithm, minus x
    tiny = 1e-300
    b = x + 1.0
    c = 1.0 / tiny
    d = 1.0 / b
    h = d
    i = 1
    while i < 10000:
        an = -float(i * i)
        b += 2.0
        d = 1.0 / (an * d + b)
        c = b + an / c
        delta = c * d
        h *= delta
        if abs(delta - 1.0) < 1e-16:
            break
        i += 1
    return math.log(h) - x


def _log_e1_scalar(x):
    if x <= 0.0:
        return math.inf
    if x <= 1.0:
        return math.log(_e1_scalar(x))
    return _log_cf(x)


def _log_one_minus_exp_neg(log_g):
    # log(1 - exp(-g)) with g = exp(log_g), stable for tiny and huge g
    if log_g > 700.0:
        return 0.0
    g = math.exp(log_g)
    if g < 1e-8:
        return log_g - 0.5 * g
    return math.log(-math.expm1(-g))


def _theta_integrand_scalar(t, beta):
    if t <= 0.0:
        return 1.0
    lg = -1.0 + _log_e1_scalar((1.0 + beta) * t)
    return math.exp(t + _log_one_minus_exp_neg(lg))


def _theta_alt_integrand_scalar(tau, beta):
    if tau <= 0.0:
        return 1.0 / (1.0 + beta)
    lg = -1.0 + _log_e1_scalar(tau)
    return math.exp(tau / (1.0 + beta) + _log_one_minus_exp_neg(lg)) / (1.0 + beta)


def _e1_array(x):
    out = np.empty(x.shape[0])
    for i in range(x.shape[0]):
        out[i] = _e1_scalar(x[i])
    return out


def _log_e1_array(x):
    out = np.empty(x.shape[0])
    for i in range(x.shape[0]):
        out[i] = _log_e1_scalar(x[i])
    return out


def _theta_integrand_array(t, beta):
    out = np.empty(t.shape[0])
    for i in range(t.shape[0]):
        out[i] = _theta_integrand_scalar(t[i], beta)
    return out


def _theta_alt_integrand_array(tau, beta):
    out = np.empty(tau.shape[0])
    for i in range(tau.shape[0]):
        out[i] = _theta_alt_integrand_scalar(tau[i], beta)
    return out


def _neumaier_sum(values):
    s = 0.0
    c = 0.0
    for i in range(values.shape[0]):
        v = values[i]
        t = s + v
        if abs(s) >= abs(v):
            c += (s - t) + v
        else:
            c += (v - t) + s
        s = t
    return s + c


def _neumaier_sum_columns(values):
    # values: (N, m); column sums in row order
    m = values.shape[1]
    s = np.zeros(m)
    c = np.zeros(m)
    for i in range(values.shape[0]):
        for k in range(m):
            v = values[i, k]
            t = s[k] + v
            if abs(s[k]) >= abs(v):
                c[k] += (s[k] - t) + v
            else:
                c[k] += (v - t) + s[k]
            s[k] = t
    return s + c


# ---------------------------------------------------------------------------
# numpy fallbacks
# ---------------------------------------------------------------------------

def _np_e1(x):
    x = np.asarray(x, dtype=float)
    out = np.full(x.shape, np.inf)
    small = (x > 0) & (x <= 1.0)
    big = x > 1.0
    if small.any():
        xs = x[small]
        k = np.arange(1, 60, dtype=float)
        # (-x)^k / (k * k!) summed term by term
        terms = np.cumprod(-xs[:, None] / k[None, :], axis=1) / k[None, :]
        out[small] = -EULER_GAMMA - np.log(xs) - terms.sum(axis=1)
    if big.any():
        out[big] = np.exp(_np_log_cf(x[big]))
    return out


def _np_log_cf(x):
    tiny = 1e-300
    b = x + 1.0
    c = np.full(x.shape, 1.0 / tiny)
    d = 1.0 / b
    h = d.copy()
    active = np.ones(x.shape, dtype=bool)
    for i in range(1, 10000):
        an = -float(i * i)
        b = b + 2.0
        d_new = 1.0 / (an * d + b)
        c_new = b + an / c
        delta = c_new * d_new
        h = np.where(active, h * delta, h)
        d = np.where(active, d_new, d)
        c = np.where(active, c_new, c)
        active &= np.abs(delta - 1.0) >= 1e-16
        if not active.any():
            break
    return np.log(h) - x


def _np_log_e1(x):
    x = np.asarray(x, dtype=float)
    out = np.full(x.shape, np.inf)
    small = (x > 0) & (x <= 1.0)
    big = x > 1.0
    if small.any():
        out[small] = np.log(_np_e1(x[small]))
    if big.any():
        out[big] = _np_log_cf(x[big])
    return out


def _np_log_one_minus_exp_neg(log_g):
    log_g = np.asarray(log_g, dtype=float)
    out = np.zeros(log_g.shape)
    g = np.exp(np.minimum(log_g, 700.0))
    tiny = g < 1e-8
    out[tiny] = log_g[tiny] - 0.5 * g[tiny]
    mid = (~tiny) & (log_g <= 700.0)
    out[mid] = np.log(-np.expm1(-g[mid]))
    return out


def _np_theta_integrand(t, beta):
    t = np.asarray(t, dtype=float)
    out = np.ones(t.shape)
    pos = t > 0
    lg = -1.0 + _np_log_e1((1.0 + beta) * t[pos])
    out[pos] = np.exp(t[pos] + _np_log_one_minus_exp_neg(lg))
    return out


def _np_theta_alt_integrand(tau, beta):
    tau = np.asarray(tau, dtype=float)
    out = np.full(tau.shape, 1.0 / (1.0 + beta))
    pos = tau > 0
    lg = -1.0 + _np_log_e1(tau[pos])
    out[pos] = np.exp(tau[pos] / (1.0 + beta) + _np_log_one_minus_exp_neg(lg)) / (1.0 + beta)
    return out


def _np_neumaier_sum(values):
    s = 0.0
    c = 0.0
    for v in np.asarray(values, dtype=float).tolist():
        t = s + v
        if abs(s) >= abs(v):
            c += (s - t) + v
        else:
            c += (v - t) + s
        s = t
    return s + c


def _np_neumaier_sum_columns(values):
    values = np.asarray(values, dtype=float)
    s = np.zeros(values.shape[1])
    c = np.zeros(values.shape[1])
    for row in values:
        t = s + row
        big = np.abs(s) >= np.abs(row)
        c += np.where(big, (s - t) + row, (row - t) + s)
        s = t
    return s + c


NUMPY_KERNELS = {
    "e1": _np_e1,
    "log_e1": _np_log_e1,
    "theta_integrand": _np_theta_integrand,
    "theta_alt_integrand": _np_theta_alt_integrand,
    "neumaier_sum": _np_neumaier_sum,
    "neumaier_sum_columns": _np_neumaier_sum_columns,
}

if HAVE_NUMBA:
    # globals are resolved at first compile, so wrapping order does not matter
    _log_cf = njit(_log_cf)
    _e1_scalar = njit(_e1_scalar)
    _log_e1_scalar = njit(_log_e1_scalar)
    _log_one_minus_exp_neg = njit(_log_one_minus_exp_neg)
    _theta_integrand_scalar = njit(_theta_integrand_scalar)
    _theta_alt_integrand_scalar = njit(_theta_alt_integrand_scalar)
    NUMBA_KERNELS = {
        "e1": njit(_e1_array),
        "log_e1": njit(_log_e1_array),
        "theta_integrand": njit(_theta_integrand_array),
        "theta_alt_integrand": njit(_theta_alt_integrand_array),
        "neumaier_sum": njit(_neumaier_sum),
        "neumaier_sum_columns": njit(_neumaier_sum_columns),
    }
    ACTIVE = "numba"
    _table = NUMBA_KERNELS
else:  # pragma: no cover
    NUMBA_KERNELS = {}
    ACTIVE = "numpy"
    _table = NUMPY_KERNELS


def e1(x):
    """Exponential integral E1 on an array of nonnegative reals (E1(0) = inf)."""
    return _table["e1"](np.ascontiguousarray(np.atleast_1d(x), dtype=float))


def log_e1(x):
    """log E1(x), finite for arguments where E1 itself underflows."""
    return _table["log_e1"](np.ascontiguousarray(np.atleast_1d(x), dtype=float))


def theta_integrand(t, beta):
    return _table["theta_integrand"](np.ascontiguousarray(np.atleast_1d(t), dtype=float), float(beta))


def theta_alt_integrand(tau, beta):
    return _table["theta_alt_integrand"](np.ascontiguousarray(np.atleast_1d(tau), dtype=float), float(beta))


def neumaier_sum(values):
    """Compensated sum in the given (fixed) order."""
    arr = np.ascontiguousarray(np.atleast_1d(values), dtype=float)
    if arr.size == 0:
        return 0.0
    return float(_table["neumaier_sum"](arr))


def neumaier_sum_columns(values):
    arr = np.ascontiguousarray(values, dtype=float)
    if arr.ndim == 1:
        arr = arr[:, None]
    if arr.shape[0] == 0:
        return np.zeros(arr.shape[1])
    return _table["neumaier_sum_columns"](arr)
