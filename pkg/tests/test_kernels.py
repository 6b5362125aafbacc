import math
import os
import subprocess
import sys

import mpmath
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.special import exp1

from strongopen import _kernels

NUMPY = _kernels.NUMPY_KERNELS
NUMBA = _kernels.NUMBA_KERNELS
needs_numba = pytest.mark.skipif(not NUMBA, reason="numba unavailable")

X = np.concatenate([[0.0, 1e-300, 1e-12, 0.5, 1.0, 1.0 + 1e-12, 2.0], np.geomspace(1e-6, 700, 200)])


@pytest.mark.parametrize("table", ["numpy", "numba"])
def test_e1_against_scipy(table):
    kernels = NUMPY if table == "numpy" else NUMBA
    if not kernels:
        pytest.skip("numba unavailable")
    got = kernels["e1"](X)
    assert got[0] == math.inf
    np.testing.assert_allclose(got[1:], exp1(X[1:]), rtol=5e-14)


@pytest.mark.parametrize("x", [800.0, 1e4, 1e8])
def test_log_e1_beyond_underflow(x):
    ref = float(mpmath.log(mpmath.e1(x)))
    for kernels in (NUMPY, NUMBA):
        if kernels:
            assert kernels["log_e1"](np.array([x]))[0] == pytest.approx(ref, rel=1e-13)


@needs_numba
@pytest.mark.parametrize("name", ["e1", "log_e1"])
def test_numba_numpy_agree(name):
    x = np.geomspace(1e-8, 1e3, 2000)
    # log E1 crosses zero near x = 0.28, hence the absolute floor
    np.testing.assert_allclose(NUMBA[name](x), NUMPY[name](x), rtol=1e-14, atol=1e-15)


@needs_numba
@pytest.mark.parametrize("name", ["theta_integrand", "theta_alt_integrand"])
def test_theta_integrands_agree(name):
    t = np.concatenate([[0.0], np.geomspace(1e-6, 60, 500)])
    for beta in (0.25, 1.0, 4.0):
        np.testing.assert_allclose(NUMBA[name](t, beta), NUMPY[name](t, beta), rtol=1e-13, atol=1e-300)


@needs_numba
def test_neumaier_agree():
    rng = np.random.default_rng(1)
    vals = rng.standard_normal(10_000) * 10.0 ** rng.integers(-8, 8, 10_000)
    assert NUMBA["neumaier_sum"](vals) == NUMPY["neumaier_sum"](vals)
    cols = rng.standard_normal((500, 3))
    np.testing.assert_array_equal(NUMBA["neumaier_sum_columns"](cols), NUMPY["neumaier_sum_columns"](cols))


@settings(max_examples=50, deadline=None)
@given(st.lists(st.floats(-1e12, 1e12), min_size=1, max_size=60))
def test_neumaier_matches_fsum(values):
    assert _kernels.neumaier_sum(values) == pytest.approx(math.fsum(values), rel=1e-15, abs=1e-3)


def test_cancellation():
    assert _kernels.neumaier_sum([1.0, 1e100, 1.0, -1e100]) == 2.0


def test_empty_inputs():
    assert _kernels.neumaier_sum([]) == 0.0
    assert _kernels.neumaier_sum_columns(np.zeros((0, 3))).shape == (3,)


def test_env_flag_selects_numpy():
    code = "from strongopen import _kernels as k; print(k.ACTIVE, bool(k.NUMBA_KERNELS))"
    env = dict(os.environ, STRONGOPEN_PURE_NUMPY="1")
    out = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True, text=True, check=True)
    assert out.stdout.split() == ["numpy", "False"]


def test_pure_numpy_package_results():
    code = ("from strongopen.openness import theta; from strongopen.metric import Polydisc; "
            "print(repr(theta(1.0).value))")
    vals = []
    for flag in ("1", "0"):
        env = dict(os.environ, STRONGOPEN_PURE_NUMPY=flag)
        out = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True, text=True, check=True)
        vals.append(float(out.stdout))
    assert vals[0] == pytest.approx(vals[1], rel=1e-13)
