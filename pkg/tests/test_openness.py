import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import e1_reference, g_reference, theta_reference, theta_simpson
from strongopen.metric import MetricError, Polydisc, Section, SingularMetric
from strongopen.openness import (GCurve, ProjectionOracleConfig, capacity_C, differential_inequality_check,
                                 effectiveness_verdict, g_beta, g_beta_quadrature, g_beta_upper, g_curve,
                                 lower_bound_check, membership, model_exponent, singularity_exponent,
                                 strong_openness_search, submodule_contains, theta, theta_identity_residual)

ONE = Section.from_strings(["1"], 1)
Z = Section.from_strings(["z1"], 1)
DISC = Polydisc.unit(1)


def model(a, radius=1.0):
    return SingularMetric.monomial([[a]], domain=Polydisc.unit(1, radius))


class TestG:
    def test_reference_value(self):
        # e^{-1} E1(1) with E1(1) = 0.2193839...
        assert g_beta(0.0, 1.0) == pytest.approx(g_reference(0.0, 1.0), rel=1e-13)
        assert g_beta(0.0, 1.0) == pytest.approx(0.21938393439552 / math.e, rel=1e-12)

    def test_e1_oracles_agree(self):
        for x in (0.1, 1.9, 2.1, 10.0):
            assert e1_reference(x) == pytest.approx(float(__import__("mpmath").e1(x)), rel=1e-14)

    @pytest.mark.parametrize("beta,t", [(0.0, 1e-6), (0.0, 0.3), (1.0, 1.0), (3.5, 7.0), (0.2, 40.0), (50, 2.0)])
    def test_against_oracle(self, beta, t):
        assert g_beta(beta, t) == pytest.approx(g_reference(beta, t), rel=1e-13)

    @pytest.mark.parametrize("beta,t", [(0.0, 0.5), (1.0, 2.0), (4.0, 0.05)])
    def test_against_direct_quadrature(self, beta, t):
        assert g_beta_quadrature(beta, t) == pytest.approx(g_beta(beta, t), rel=1e-10)

    def test_upper_bound_random(self):
        rng = np.random.default_rng(0)
        b = rng.uniform(0, 10, 100)
        t = rng.exponential(2.0, 100) + 1e-3
        assert np.all(g_beta(b, t) <= g_beta_upper(b, t))

    def test_monotone_grid(self):
        B, T = np.meshgrid(np.linspace(0, 5, 21), np.linspace(0.01, 5, 25), indexing="ij")
        G = g_beta(B, T)
        assert np.all(np.diff(G, axis=0) < 0)
        assert np.all(np.diff(G, axis=1) < 0)

    def test_t_nonpositive(self):
        with pytest.raises(ValueError):
            g_beta(0.0, 0.0)


@settings(max_examples=100, deadline=None)
@given(st.floats(0, 20), st.floats(1e-4, 30))
def test_g_bounds_property(beta, t):
    g = float(g_beta(beta, t))
    assert 0 < g <= float(g_beta_upper(beta, t)) * (1 + 1e-12)


class TestTheta:
    @pytest.mark.parametrize("beta", [0.1, 0.5, 1.0, 4.0])
    def test_two_oracles(self, beta):
        v = theta(beta, 1e-10)
        ref = theta_reference(beta)
        assert theta_simpson(beta) == pytest.approx(ref, abs=1e-6)
        assert v.value == pytest.approx(ref, abs=1e-8)
        assert v.quad_error <= 1e-10

    def test_small_beta_oracle(self):
        assert theta(0.001, 1e-8).value == pytest.approx(theta_reference(0.001), rel=1e-8)

    def test_theta_one_bracket(self):
        assert 1.1 <= theta(1.0).value <= 1.6

    def test_theta_large(self):
        assert 1 < theta(100.0).value < 1.02

    def test_ordering(self):
        assert theta(0.1).value > theta(1.0).value > theta(10.0).value

    def test_blows_up_at_zero(self):
        vals = [theta(10.0 ** -k).value for k in range(1, 5)]
        assert all(b > a for a, b in zip(vals, vals[1:]))

    def test_nonpositive_beta(self):
        with pytest.raises(ValueError):
            theta(0.0)

    @pytest.mark.parametrize("beta", [0.25, 1.0, 10.0])
    def test_identity_residual(self, beta):
        assert theta_identity_residual(beta, 1e-6) < 3e-6


@settings(max_examples=20, deadline=None)
@given(st.floats(0.05, 50), st.floats(1.01, 3))
def test_theta_monotone_property(beta, factor):
    a, b = theta(beta).value, theta(beta * factor).value
    assert a > b >= 1


BRACKET_CASES = [(a, k) for a in (0.5, 1.0, 2.0) for k in range(4) if (k + 1) / a - 1 >= 0]


class TestExponent:
    @pytest.mark.parametrize("a,k", BRACKET_CASES)
    def test_monomial_family(self, a, k):
        c = (k + 1) / a - 1
        F = Section.monomial([k])
        br = singularity_exponent(model(a), F, [0], resolution=0.02)
        assert br.contains(c)
        assert br.width <= 0.02
        # at c = 0 the section is not a member even at beta = 0, so the closed form reports -inf
        assert model_exponent(model(a), F, [0]) == (pytest.approx(c) if c > 0 else -math.inf)

    def test_not_member(self):
        br = singularity_exponent(model(2.0), ONE, [0])
        assert (br.lo, br.hi, br.flag) == (0.0, 0.0, "NotMember")

    def test_unbounded(self):
        h = SingularMetric.from_strings([["1 + abs2(z1)"]], 1, singular_points=[[0]])
        br = singularity_exponent(h, ONE, [0], beta_max=8)
        assert br.flag == "Unbounded" and br.hi == 8

    def test_zero_section(self):
        with pytest.raises(ValueError):
            singularity_exponent(model(0.5), Section.from_strings(["0"], 1), [0])

    def test_two_variable_model(self):
        h = SingularMetric.monomial([[0.5, 0.4]])
        # per coordinate (k_i + 1) / a_i - 1: (1 + 1) / 0.5 - 1 = 3 and (0 + 1) / 0.4 - 1 = 1.5
        assert model_exponent(h, Section.monomial([1, 0]), [0, 0]) == pytest.approx(1.5)


class TestSubmodule:
    def test_thresholds(self):
        h = model(0.5)
        # (slot, k) is in the submodule at beta iff k + 1 > a (1 + beta)
        assert submodule_contains(h, 0.9, 0, [0])
        assert not submodule_contains(h, 1.0, 0, [0])
        assert submodule_contains(h, 2.9, 0, [1])
        assert not submodule_contains(h, 3.0, 0, [1])

    @settings(max_examples=60, deadline=None)
    @given(st.sampled_from([0.25, 0.5, 1.0, 2.0]), st.integers(0, 5), st.floats(0, 10))
    def test_capacity_zero_iff_in_module(self, a, k, beta):
        h = model(a)
        F = Section.monomial([k])
        cap = capacity_C(h, F, beta, DISC, [0])
        assert (cap.value == 0) == submodule_contains(h, beta, 0, [k])


class TestCapacity:
    def test_constant_section(self):
        cap = capacity_C(model(0.5), ONE, 2.0, DISC, [0])
        assert cap.value == pytest.approx(math.pi, rel=1e-14)
        assert cap.kind == "Exact"

    def test_beta_interval(self):
        h = model(0.5)
        for beta in (1.0, 1.5, 2.99):
            assert capacity_C(h, ONE, beta, DISC, [0]).value == pytest.approx(math.pi)
        assert capacity_C(h, ONE, 0.5, DISC, [0]).value == 0.0

    def test_member_is_zero(self):
        assert capacity_C(model(0.5), Z, 2.0, DISC, [0]).value == 0.0

    @pytest.mark.parametrize("k", [0, 1, 2])
    @pytest.mark.parametrize("r", [0.5, 1.0, 1.3])
    def test_monomial_norm(self, k, r):
        h = model(0.5, r)
        cap = capacity_C(h, Section.monomial([k]), 6.9, Polydisc.unit(1, r), [0])
        assert cap.value == pytest.approx(math.pi * r ** (2 * k + 2) / (k + 1), rel=1e-12)

    def test_quadrature_oracle(self):
        F = Section.from_strings(["1 + 2*z1 + z1^2"], 1)
        h = model(0.5)
        exact = capacity_C(h, F, 4.5, DISC, [0])
        quad = capacity_C(h, F, 4.5, DISC, [0], ProjectionOracleConfig(method="quadrature"))
        # out-of-module part is 1 + 2 z: pi + 4 pi / 2
        assert exact.value == pytest.approx(3 * math.pi, rel=1e-12)
        assert quad.value == pytest.approx(exact.value, abs=1e-8)

    def test_rank2_model(self):
        h = SingularMetric.monomial([[0.5], [0.25]])
        F = Section.from_strings(["1", "1"], 1)
        # h/det h has weights |z|^{2(A - a_l)} with A = 0.75: |z|^{0.5} and |z|^{1}
        # at beta = 0.1 both constants lie in the module (1 > a_l + 0.1 A), so the capacity vanishes
        assert capacity_C(h, F, 0.1, DISC, [0]).value == 0.0
        cap = capacity_C(h, F, 2.0, DISC, [0])
        expected = 2 * math.pi / 2.5 + 2 * math.pi / 3.0
        assert cap.value == pytest.approx(expected, rel=1e-12)

    def test_non_model_rejected(self):
        h = SingularMetric.from_strings([["abs2(z1)^-0.5"]], 1)
        with pytest.raises(MetricError, match="upper bound"):
            capacity_C(h, ONE, 2.0, DISC, [0])

    def test_non_model_upper_bound(self):
        h = SingularMetric.from_strings([["abs2(z1)^-0.5"]], 1, singular_points=[[0]])
        cap = capacity_C(h, ONE, 2.0, DISC, [0], ProjectionOracleConfig(allow_upper_bound=True))
        assert cap.kind == "UpperBoundOnly"
        assert cap.value == pytest.approx(math.pi, rel=1e-8)


class TestGCurve:
    def test_closed_form(self):
        t = np.linspace(0, 5, 50)
        curve = g_curve(model(0.5), ONE, 2.0, [0], DISC, t)
        np.testing.assert_allclose(curve.values, math.pi * np.exp(-2 * t), rtol=1e-13)

    def test_quadrature_path(self):
        t = np.linspace(0, 3, 7)
        curve = g_curve(model(0.5), ONE, 2.0, [0], DISC, t, method="quadrature", tol=1e-9)
        assert np.all(np.abs(curve.values - math.pi * np.exp(-2 * t)) <= np.maximum(curve.errors, 1e-9) + 1e-12)

    def test_g0_is_capacity(self):
        curve = g_curve(model(0.5), ONE, 2.0, [0], DISC, [0.0, 1.0])
        assert curve.values[0] == capacity_C(model(0.5), ONE, 2.0, DISC, [0]).value

    def test_nonincreasing(self):
        t = np.linspace(0, 4, 30)
        F = Section.from_strings(["1 + z1"], 1)
        curve = g_curve(model(0.5), F, 4.5, [0], DISC, t)
        assert np.all(np.diff(curve.values) <= 2 * (curve.errors[1:] + curve.errors[:-1]))

    def test_csv(self):
        curve = g_curve(model(0.5), ONE, 2.0, [0], DISC, [0.0, 0.5])
        lines = curve.to_csv().strip().splitlines()
        assert lines[0].split(",")[:2] == ["t", "G"]
        assert len(lines) == 3


def closed_curve(beta, t, scale=2.0):
    t = np.asarray(t, dtype=float)
    return GCurve(beta, tuple((float(x), math.pi * math.exp(-scale * x), 1e-15) for x in t), DISC)


class TestLowerBound:
    def test_model(self):
        t = np.concatenate([[0.0], np.linspace(0.05, 10, 60)])
        rep = lower_bound_check(g_curve(model(0.5), ONE, 2.0, [0], DISC, t))
        assert rep.passed
        assert rep.min_positive_from <= 0.05

    def test_slack_vanishes_at_zero(self):
        rep = lower_bound_check(closed_curve(2.0, np.linspace(0, 1, 11)))
        assert rep.slacks[0][1] == 0.0

    def test_halved_exponent(self):
        h = model(0.25)
        t = np.concatenate([[0.0], np.linspace(0.05, 10, 40)])
        curve = g_curve(h, ONE, 4.0, [0], DISC, t)
        np.testing.assert_allclose(curve.values, math.pi * np.exp(-4 * t), rtol=1e-13)
        assert lower_bound_check(curve).passed

    def test_needs_ten_samples(self):
        with pytest.raises(ValueError):
            lower_bound_check(closed_curve(2.0, np.linspace(0, 1, 5)))


class TestDifferential:
    def test_model_curve(self):
        assert differential_inequality_check(closed_curve(2.0, np.linspace(0, 10, 200)), 2 * math.pi) < 1e-3

    def test_constant_curve(self):
        curve = GCurve(1.0, tuple((float(t), 1.0, 0.0) for t in np.linspace(0, 1, 20)), DISC)
        assert differential_inequality_check(curve, 2.0) == 0.0

    def test_refinement(self):
        coarse = differential_inequality_check(closed_curve(2.0, np.linspace(0, 10, 200)), 2 * math.pi)
        fine = differential_inequality_check(closed_curve(2.0, np.linspace(0, 10, 400)), 2 * math.pi)
        assert fine <= coarse + 1e-12

    def test_G_too_small(self):
        with pytest.raises(ValueError):
            differential_inequality_check(closed_curve(2.0, np.linspace(0, 1, 20)), 3.0)

    def test_non_monotone_rejected(self):
        curve = GCurve(1.0, tuple((float(t), 1.0 + (t > 0.5), 1e-12) for t in np.linspace(0, 1, 20)), DISC)
        with pytest.raises(ValueError):
            differential_inequality_check(curve, 5.0)


class TestEffectiveness:
    def test_model_report(self):
        rep = effectiveness_verdict(model(0.5), ONE, [0], DISC, 0.5)
        assert rep.energy == pytest.approx(2 * math.pi, rel=1e-9)
        assert rep.capacity_plus == pytest.approx(math.pi)
        assert rep.ratio == pytest.approx(2.0, rel=1e-9)
        assert rep.predicted_member == (rep.theta_beta > rep.ratio)
        assert rep.sound

    def test_consistency_at_exponent(self):
        assert theta(1.0).value <= 2.0

    def test_beta_zero(self):
        rep = effectiveness_verdict(model(0.5), ONE, [0], DISC, 0.0)
        assert rep.predicted_member and rep.observed_member

    @pytest.mark.parametrize("a,k", [(0.5, 0), (0.5, 1), (1.0, 1), (2.0, 3)])
    def test_sweep_sound(self, a, k):
        h, F = model(a), Section.monomial([k])
        br = singularity_exponent(h, F, [0])
        for beta in (0.0, 0.001, 0.01, 0.1, 0.5, 0.9):
            assert effectiveness_verdict(h, F, [0], DISC, beta, exponent=br).sound

    def test_infinite_energy(self):
        with pytest.raises(ValueError, match="infinite"):
            effectiveness_verdict(model(1.0), ONE, [0], DISC, 0.5)

    def test_phi_must_be_negative(self):
        h = SingularMetric.monomial([[0.5]], coeffs=[0.1])
        with pytest.raises(ValueError, match="negative"):
            effectiveness_verdict(h, ONE, [0], DISC, 0.5)


class TestSearch:
    GRID = [0.1 * k for k in range(1, 10)]

    def test_model(self):
        assert strong_openness_search(model(0.5), ONE, [0], self.GRID) == pytest.approx(0.1)

    def test_linear_section(self):
        assert strong_openness_search(model(0.5), Z, [0], self.GRID) == pytest.approx(0.1)

    def test_not_member(self):
        with pytest.raises(ValueError):
            strong_openness_search(model(1.5), ONE, [0], self.GRID)


def test_membership_resolves_borderline():
    m = membership(model(1.0), ONE, [0], 0.0)
    assert not m.member and m.resolved_indeterminate
