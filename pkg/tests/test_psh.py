import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import bergman_closed_form_m1, exp_gap_family
from strongopen.metric import Polydisc, Section, from_family, normalize, section_norm2_values
from strongopen.psh import (Confidence, CutoffParams, Guarantee, LelongEstimate, bergman_log,
                            convergence_in_measure, cutoff_b, cutoff_chi, exp_gap_lp, lelong_number, mollify,
                            skoda_guarantee, submean_check)

LOG_ABS = "log(abs2(z1))/2"
DISC = Polydisc.unit(1)


class TestLelong:
    def test_four_log(self):
        est = lelong_number("4*" + LOG_ABS, [0], 1e-4, 0.5)
        assert est.value == pytest.approx(4.0, abs=0.01)
        assert est.confidence is Confidence.HIGH

    def test_smooth(self):
        assert lelong_number("abs2(z1)", [0], 1e-4, 0.5).value == pytest.approx(0.0, abs=0.01)

    def test_model_weight(self):
        assert lelong_number("1.5*" + LOG_ABS, [0], 1e-4, 0.5).value == pytest.approx(1.5, abs=0.01)

    def test_two_variables(self):
        est = lelong_number("log(abs2(z1) + abs2(z2))", [0, 0], 1e-4, 0.5)
        assert est.value == pytest.approx(2.0, abs=0.01)

    def test_off_centre_pole(self):
        est = lelong_number("log(abs2(z1 - 0.3))", [0.3], 1e-4, 0.2)
        assert est.value == pytest.approx(2.0, abs=0.01)

    def test_minus_infinity_circle(self):
        with pytest.raises(ValueError):
            lelong_number("log(0*z1)", [0], 1e-3, 0.5)

    @settings(max_examples=30, deadline=None)
    @given(st.floats(0.1, 10))
    def test_positive_homogeneity(self, c):
        base = lelong_number("log(abs2(z1)) + abs2(z1)", [0], 1e-3, 0.5)
        scaled = lelong_number(f"{c!r}*(log(abs2(z1)) + abs2(z1))", [0], 1e-3, 0.5)
        assert scaled.value == pytest.approx(c * base.value, rel=1e-10)


class TestSkoda:
    def est(self, v, resid=0.0, conf=Confidence.HIGH):
        return LelongEstimate(v, (), resid, conf)

    def test_below_two(self):
        assert skoda_guarantee(self.est(1.5)) is Guarantee.GUARANTEED

    def test_two_excluded(self):
        assert skoda_guarantee(self.est(2.0)) is Guarantee.NOT_GUARANTEED

    def test_one_sided_in_c2(self):
        # |z|^{-3} is integrable in C^2 although v = 3
        est = lelong_number("3*log(abs2(z1) + abs2(z2))/2", [0, 0], 1e-4, 0.5)
        assert est.value == pytest.approx(3.0, abs=0.01)
        assert skoda_guarantee(est) is Guarantee.NOT_GUARANTEED

    def test_safety_margin(self):
        assert skoda_guarantee(self.est(1.9, 0.04)) is Guarantee.NOT_GUARANTEED

    def test_low_confidence_refused(self):
        with pytest.raises(ValueError):
            skoda_guarantee(self.est(1.0, 0.1, Confidence.LOW))


class TestCutoff:
    P = CutoffParams(1.0, 1.0)

    def test_b_examples(self):
        assert cutoff_b(-1.0, self.P) == 1.0
        assert cutoff_b(-1.5, self.P) == 0.5
        assert cutoff_b(-3.0, self.P) == 0.0

    def test_chi_examples(self):
        assert cutoff_chi(0.0, self.P) == 0.0
        assert -1.0 <= cutoff_chi(-10.0, self.P) <= -0.5
        assert cutoff_chi(-1.0, self.P) == pytest.approx(-0.5)

    def test_chi_matches_numerical_primitive(self):
        from scipy.integrate import quad

        p = CutoffParams(0.7, 0.4)
        for t in (-3.0, -1.0, -0.9, -0.5, 0.0):
            ref = -quad(lambda s: float(cutoff_b(s, p)), t, 0, points=[-1.1, -0.7])[0] / (p.t0 + p.B)
            assert cutoff_chi(t, p) == pytest.approx(ref, abs=1e-12)

    def test_params_validated(self):
        with pytest.raises(ValueError):
            CutoffParams(0.0, 0.5)
        with pytest.raises(ValueError):
            CutoffParams(1.0, 1.5)

    def test_b_derivative_in_window(self):
        p = CutoffParams(0.5, 0.25)
        t = np.linspace(-0.74, -0.51, 30)
        h = 1e-6
        d = (cutoff_b(t + h, p) - cutoff_b(t - h, p)) / (2 * h)
        np.testing.assert_allclose(d, 1 / p.B, rtol=1e-6)

    def test_sandwich_many_triples(self):
        rng = np.random.default_rng(0)
        N = 10_000
        t = -rng.exponential(3.0, N)
        t0 = rng.uniform(1e-3, 5.0, N)
        B = rng.uniform(1e-3, 1.0, N)
        for k in range(N):
            p = CutoffParams(float(t0[k]), float(B[k]))
            c = float(cutoff_chi(t[k], p))
            s = p.t0 + p.B
            lo = max(t[k], -p.t0 - p.B) / s
            hi = max(t[k], -p.t0) / s
            assert lo - 1e-12 <= c <= hi + 1e-12
            assert hi <= 0 and c >= -1 - 1e-12


@settings(max_examples=100, deadline=None)
@given(st.floats(-20, 5), st.floats(-20, 5), st.floats(0.01, 5), st.floats(0.01, 1))
def test_cutoff_monotone_convex(t1, t2, t0, B):
    p = CutoffParams(t0, B)
    lo, hi = min(t1, t2), max(t1, t2)
    assert 0 <= cutoff_b(lo, p) <= cutoff_b(hi, p) <= 1
    assert cutoff_chi(lo, p) <= cutoff_chi(hi, p) + 1e-12
    mid = 0.5 * (lo + hi)
    assert cutoff_chi(mid, p) <= 0.5 * (cutoff_chi(lo, p) + cutoff_chi(hi, p)) + 1e-12


class TestMollify:
    def test_constant(self):
        assert mollify("3.25", 0.1, [0.2]) == pytest.approx(3.25, abs=1e-8)

    def test_log_decreases(self):
        vals = [mollify("2*" + LOG_ABS, eps, [0.5]) for eps in (0.2, 0.1, 0.05)]
        target = 2 * math.log(0.5)
        # log|z| is harmonic on these balls, so every value equals the target up to quadrature
        for v in vals:
            assert v == pytest.approx(target, abs=1e-8)
        assert vals[0] >= vals[1] - 1e-9 >= vals[2] - 2e-9

    def test_monotone_in_eps_random(self):
        rng = np.random.default_rng(4)
        pts = 0.6 * np.sqrt(rng.random(20)) * np.exp(2j * math.pi * rng.random(20))
        phi = "log(abs2(z1)) + abs2(z1)"
        for z in pts:
            a = mollify(phi, 0.05, [z], singular_points=[[0]])
            b = mollify(phi, 0.1, [z], singular_points=[[0]])
            assert a <= b + 1e-6

    def test_boundary(self):
        with pytest.raises(ValueError):
            mollify("abs2(z1)", 0.2, [0.9], region=DISC)

    def test_quadratic_exact(self):
        # ball average of |z|^2 with the (1 - s)^3 bump: |p|^2 + eps^2 E[s], E[s] = 1/5 for n = 1
        assert mollify("abs2(z1)", 0.3, [0.1]) == pytest.approx(0.01 + 0.09 / 5, abs=1e-10)

    def test_mollified_output_is_subharmonic(self):
        def smoothed(points):
            return np.array([mollify("log(abs2(z1)) + abs2(z1)", 0.1, p, singular_points=[[0]]) for p in points])

        rep = submean_check(smoothed, Polydisc.unit(1, 0.5), trials=8, nodes=16, base_tol=1e-6)
        assert rep.passed


class TestBergman:
    def test_closed_form(self):
        assert bergman_log(0.5, 1, 0.5) == pytest.approx(bergman_closed_form_m1(0.25), abs=1e-12)
        assert bergman_log(0.5, 1, 0.5) == pytest.approx(-0.978, abs=1e-3)

    def test_lower_sandwich_one_constant(self):
        grid = [0.1, 0.3, 0.5, 0.7, 0.9]
        per_m = []
        for m in (1, 2, 4, 8):
            per_m.append(max(m * (math.log(r) - bergman_log(0.5, m, r)) for r in grid))
        C1 = max(per_m)
        # one constant works for every m and it does not drift upward with m
        assert C1 < 1.0
        assert per_m[-1] <= per_m[0] + 1e-9

    def test_pointwise_convergence(self):
        phi = math.log(0.5)
        assert abs(bergman_log(0.5, 8, 0.5) - phi) < abs(bergman_log(0.5, 1, 0.5) - phi)

    def test_truncation_stability(self):
        for a, m in ((0.5, 1), (0.75, 4)):
            for r in (0.3, 0.9):
                assert abs(bergman_log(a, m, r, L=800) - bergman_log(a, m, r, L=1600)) < 1e-10

    def test_outside_disc(self):
        with pytest.raises(ValueError):
            bergman_log(0.5, 1, 1.0)


class TestSubmean:
    def test_subharmonic(self):
        assert submean_check("abs2(z1)", DISC).violations == 0

    def test_superharmonic(self):
        rep = submean_check("-abs2(z1)", DISC)
        assert rep.violations > 0 and rep.witnesses

    def test_family_norm_plurisubharmonic(self):
        fam = from_family([["1", "z1"], ["z2", "z1^2"]], s=2, dim=2)
        F = Section.from_strings(["1 + z2", "z1"], 2)
        h = normalize(fam.normalized)
        rep = submean_check(lambda pts: section_norm2_values(h, F, pts), Polydisc.unit(2),
                            trials=500)
        assert rep.violations == 0


class TestMeasure:
    def test_identical(self):
        assert convergence_in_measure(lambda j: LOG_ABS, LOG_ABS, DISC, 0.1, 3).value == 0.0

    def test_closed_form(self):
        est = convergence_in_measure(lambda j: f"(1 + 1/{j})*{LOG_ABS}", LOG_ABS, DISC, 0.1, 5)
        assert abs(est.value - math.pi * math.exp(-1)) < 3 * est.std_error

    def test_monotone_decay(self):
        vals = [convergence_in_measure(lambda j: f"(1 + 1/{j})*{LOG_ABS}", LOG_ABS, DISC, 0.1, j).value
                for j in (1, 2, 5, 10, 20)]
        assert all(a > b for a, b in zip(vals, vals[1:]))


class TestExpGap:
    def test_identical(self):
        assert exp_gap_lp(LOG_ABS, LOG_ABS, 0.5, DISC).value == 0.0

    def test_constant_shift(self):
        j, p = 4, 0.5
        est = exp_gap_lp(LOG_ABS, f"{LOG_ABS} - 1/{j}", p, DISC)
        assert est.value == pytest.approx(math.expm1(1 / j) ** p * math.pi, rel=1e-8)

    def test_family_decreasing(self):
        vals = []
        for j in (1, 2, 4, 8, 16, 32):
            est = exp_gap_lp(LOG_ABS, f"(1 + 1/{j})*{LOG_ABS}", 0.5, DISC, singular_points=[[0]])
            assert est.value == pytest.approx(exp_gap_family(j), rel=1e-6)
            vals.append(est.value)
        assert all(a > b for a, b in zip(vals, vals[1:]))

    def test_hypothesis_violation(self):
        with pytest.raises(ValueError, match="phi_j > phi"):
            exp_gap_lp(LOG_ABS, f"{LOG_ABS} + 0.1", 0.5, DISC)
