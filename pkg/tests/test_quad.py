import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import ball_power_integral_bidisc, offcentre_inverse_distance, radial_power_integral
from strongopen.expr import as_function
from strongopen.metric import Polydisc
from strongopen.quad import (Status, Verdict, annulus_integral, fubini_tail_residual, integrability_at, integrate,
                             integrate_sublevel, quad1d)

DISC = Polydisc.unit(1)
ORIGIN = [[0]]


def power(c, center=0.0):
    def f(z):
        return np.sum(np.abs(z - center) ** 2, axis=1) ** (-c / 2)
    return f


def one(z):
    return np.ones(z.shape[0])


class TestIntegrate:
    def test_area(self):
        est = integrate(one, DISC, 1e-10)
        assert est.status is Status.CONVERGED
        assert abs(est.value - math.pi) <= 1e-10

    def test_inverse_distance(self):
        est = integrate(power(1.0), DISC, 1e-9, ORIGIN)
        assert est.converged
        assert abs(est.value - 2 * math.pi) <= 1e-9

    def test_log_divergence(self):
        assert integrate(power(2.0), DISC, 1e-8, ORIGIN).status is Status.DIVERGENCE

    @pytest.mark.parametrize("c", [0.5, 1.0, 1.5, 1.9])
    def test_radial_powers(self, c):
        est = integrate(power(c), Polydisc.unit(1, 0.7), 1e-8, ORIGIN)
        assert est.value == pytest.approx(radial_power_integral(c, 0.7), abs=1e-7)

    def test_off_centre_pole(self):
        est = integrate(power(1.0, 0.3), DISC, 1e-8, [[0.3]])
        assert est.value == pytest.approx(offcentre_inverse_distance(0.3), abs=1e-7)

    def test_bidisc_ball_weight(self):
        est = integrate(power(3.0), Polydisc.unit(2), 1e-6, [[0, 0]])
        assert est.value == pytest.approx(ball_power_integral_bidisc(3.0), rel=1e-6)

    def test_bidisc_volume(self):
        assert integrate(one, Polydisc.unit(2, 0.5), 1e-10).value == pytest.approx((math.pi * 0.25) ** 2, rel=1e-12)

    def test_max_cells(self):
        est = integrate(power(1.0, 0.3), DISC, 1e-14, max_cells=50)
        assert est.status is Status.MAX_CELLS
        assert est.value == pytest.approx(offcentre_inverse_distance(0.3), rel=0.05)

    def test_deterministic_and_jobs_invariant(self):
        a = integrate(power(1.5), DISC, 1e-9, ORIGIN)
        b = integrate(power(1.5), DISC, 1e-9, ORIGIN)
        c = integrate(power(1.5), DISC, 1e-9, ORIGIN, jobs=4)
        assert a == b == c

    def test_tolerance_monotone(self):
        errs = [integrate(power(1.0, 0.3), DISC, tol, [[0.3]]).abs_error for tol in (1e-4, 5e-5, 2.5e-5, 1.25e-5)]
        assert all(b <= a for a, b in zip(errs, errs[1:]))


@settings(max_examples=25, deadline=None)
@given(st.floats(0.0, 1.8), st.floats(0.2, 2.0))
def test_positivity_and_closed_form(c, R):
    est = integrate(power(c), Polydisc.unit(1, R), 1e-8, ORIGIN)
    assert est.value >= 0
    assert est.value == pytest.approx(radial_power_integral(c, R), rel=1e-7, abs=1e-8)


class TestSublevel:
    PHI = "log(abs2(z1))/2"

    def test_covering_level(self):
        full = integrate(one, DISC, 1e-10)
        sub = integrate_sublevel(one, "-1", 0.5, DISC, 1e-10)
        assert sub.value == pytest.approx(full.value, abs=1e-10)

    def test_disc_of_radius_e_inverse(self):
        est = integrate_sublevel(one, self.PHI, 1.0, DISC, 1e-9)
        assert abs(est.value - math.pi * math.exp(-2)) <= 1e-9

    def test_vanishes_at_large_t(self):
        vals = [integrate_sublevel(one, self.PHI, t, DISC, 1e-10).value for t in (2.0, 5.0, 10.0)]
        assert vals[0] > vals[1] > vals[2]
        assert vals[2] == pytest.approx(math.pi * math.exp(-20), rel=1e-4)

    @settings(max_examples=15, deadline=None)
    @given(st.floats(0.0, 4.0))
    def test_radial_closed_form(self, t):
        est = integrate_sublevel(power(1.0), self.PHI, t, DISC, 1e-9, ORIGIN)
        # int over |z| < e^{-t} of |z|^{-1} = 2 pi e^{-t}
        assert est.value == pytest.approx(2 * math.pi * math.exp(-t), abs=2e-9)


class TestIntegrability:
    def test_converges(self):
        v = integrability_at(power(1.5), [0], 0.5)
        assert v.verdict is Verdict.CONVERGES
        assert v.decay_slope == pytest.approx(-0.5, abs=1e-6)

    def test_borderline(self):
        v = integrability_at(power(2.0), [0], 0.5)
        # constant annulus integrals: the slope test cannot decide a log divergence
        assert v.verdict is Verdict.INDETERMINATE
        assert v.decay_slope == pytest.approx(0.0, abs=1e-9)

    def test_diverges(self):
        assert integrability_at(power(2.5), [0], 0.5).verdict is Verdict.DIVERGES

    def test_c2(self):
        v = integrability_at(power(3.0), [0, 0], 0.5)
        assert v.verdict is Verdict.CONVERGES
        assert v.decay_slope == pytest.approx(-1.0, abs=1e-3)

    def test_levels_minimum(self):
        with pytest.raises(ValueError):
            integrability_at(power(1.0), [0], 0.5, levels=4)

    def test_annulus_closed_form(self):
        # int over 0.25 <= |z| <= 0.5 of |z|^{-1} = 2 pi (0.5 - 0.25)
        assert annulus_integral(power(1.0), [0], 0.25, 0.5, 1) == pytest.approx(2 * math.pi * 0.25, rel=1e-12)

    def test_annulus_consistency(self):
        rho0 = 0.5
        v = integrability_at(power(1.0), [0], rho0, levels=40)
        inner = sum(x for _, x in v.annulus_integrals)
        outer = integrate(power(1.0), DISC, 1e-10, ORIGIN).value - 2 * math.pi * rho0
        ball = integrate(power(1.0), DISC, 1e-10, ORIGIN).value
        assert inner + outer == pytest.approx(ball, abs=2e-9 + 2 * math.pi * rho0 * 2.0 ** -40)

    def test_csv(self):
        v = integrability_at(power(1.0), [0], 0.5, levels=8)
        lines = v.annulus_csv().strip().splitlines()
        assert lines[0] == "level,inner_radius,outer_radius,integral,running_sum"
        assert len(lines) == 9
        last = lines[-1].split(",")
        assert float(last[4]) == pytest.approx(2 * math.pi * (0.5 - 0.5 * 2.0 ** -8), rel=1e-12)


class TestFubini:
    def test_constant_phi(self):
        assert fubini_tail_residual(one, "-0.7", DISC, 1e-6) < 1e-6

    def test_model_weight(self):
        tol = 1e-6
        assert fubini_tail_residual(one, "log(abs2(z1))/2", DISC, tol, ORIGIN) < 5 * tol

    def test_zero(self):
        assert fubini_tail_residual(lambda z: np.zeros(z.shape[0]), "log(abs2(z1))/2", DISC) == 0.0

    def test_positive_phi_rejected(self):
        with pytest.raises(ValueError):
            fubini_tail_residual(one, "1 + abs2(z1)", DISC)


class TestQuad1D:
    def test_polynomial(self):
        q = quad1d(lambda x: x ** 5, 0, 2, 1e-12)
        assert q.value == pytest.approx(64 / 6, rel=1e-14)

    def test_breakpoint(self):
        q = quad1d(lambda x: np.abs(x - 0.3), 0, 1, 1e-12, breakpoints=[0.3])
        assert q.value == pytest.approx((0.3 ** 2 + 0.7 ** 2) / 2, rel=1e-13)


def test_expression_integrand():
    f = as_function("abs2(z1)")
    assert integrate(f, DISC, 1e-12).value == pytest.approx(math.pi / 2, rel=1e-12)
