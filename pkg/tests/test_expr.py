import cmath
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from strongopen.expr import (BinOp, Coord, EvalPoint, ExprError, ExprSyntaxError, Func, Num, Pow, eval_expr,
                             evaluate, parse_expr, to_text)


def ev(text, *coords, **params):
    return eval_expr(parse_expr(text), EvalPoint.of(*coords, **params))


class TestParse:
    def test_coordinate_leaf(self):
        assert parse_expr("z1") == Coord(0)

    def test_power_node(self):
        e = parse_expr("abs2(z1)^-0.5")
        assert isinstance(e, Pow)
        assert e.exponent == -0.5
        assert e.base == Func("abs2", (Coord(0),))

    @pytest.mark.parametrize("text", ["abs2(z1)", "z1^3 * conj(z2)", "log(abs2(z1)+abs2(z2))",
                                      "min(0, re(z1))", "exp(-t*abs2(z1))", "2.5e-3 + 1i*z2"])
    def test_legal_examples_round_trip(self, text):
        e = parse_expr(text, params=("t",))
        assert parse_expr(to_text(e), params=("t",)) == e

    def test_syntax_error_has_position(self):
        with pytest.raises(ExprSyntaxError) as info:
            parse_expr("z1 + * 2")
        assert info.value.position == 5

    def test_unknown_identifier(self):
        with pytest.raises(ExprError, match="unknown identifier 'foo'"):
            parse_expr("foo(z1)")

    def test_non_constant_exponent(self):
        with pytest.raises(ExprError, match="non-constant exponent"):
            parse_expr("z1^z2")

    def test_dimension_check(self):
        with pytest.raises(ExprError):
            parse_expr("z3", dim=2)


class TestEvaluate:
    def test_log_abs2_at_e(self):
        assert ev("log(abs2(z1))", math.e) == pytest.approx(2.0, abs=1e-15)

    def test_abs2_by_product(self):
        assert ev("z1*conj(z1)", 3 + 4j) == pytest.approx(25.0)

    def test_log_zero_is_minus_inf(self):
        assert ev("log(abs2(z1))", 0) == -math.inf

    def test_min(self):
        assert ev("min(0, re(z1))", -2) == -2.0

    def test_pole_is_plus_inf(self):
        assert ev("abs2(z1)^-0.5", 0) == math.inf

    def test_log_negative_is_undefined(self):
        assert math.isnan(ev("log(-1)"))

    def test_parameters(self):
        assert ev("t*z1", 2.0, t=3.0) == pytest.approx(6.0)

    def test_unbound_parameter(self):
        with pytest.raises(ExprError):
            evaluate(parse_expr("t*z1", params=("t",)), np.zeros((1, 1), dtype=complex))

    def test_complex_valued(self):
        assert ev("z1^2", 1j) == pytest.approx(-1.0)
        assert ev("im(z1*z2)", 1j, 2.0) == pytest.approx(2.0)

    def test_vectorised_matches_pointwise(self):
        e = parse_expr("log(abs2(z1) + abs2(z2)) + re(z1*conj(z2))")
        rng = np.random.default_rng(1)
        pts = rng.standard_normal((50, 2)) + 1j * rng.standard_normal((50, 2))
        vec = evaluate(e, pts)
        for k in range(5):
            assert vec[k] == eval_expr(e, EvalPoint.of(*pts[k]))


_leaf = st.one_of(
    st.builds(Coord, st.integers(0, 1)),
    st.builds(lambda x: Num(complex(x)), st.floats(-3, 3, allow_nan=False).map(lambda x: round(x, 3))),
)


def _extend(children):
    return st.one_of(
        st.builds(lambda a, b, op: BinOp(op, a, b), children, children, st.sampled_from("+-*")),
        st.builds(lambda a: Func("conj", (a,)), children),
        st.builds(lambda a: Func("abs2", (a,)), children),
        st.builds(lambda a, k: Pow(a, float(k)), children, st.integers(0, 3)),
    )


exprs = st.recursive(_leaf, _extend, max_leaves=8)
points = st.tuples(*[st.complex_numbers(max_magnitude=2, allow_nan=False, allow_infinity=False)] * 2)


@settings(max_examples=150, deadline=None)
@given(exprs)
def test_print_parse_round_trip(e):
    assert parse_expr(to_text(e)) == e


@settings(max_examples=150, deadline=None)
@given(exprs, points)
def test_conjugation_symmetry(e, p):
    a = eval_expr(Func("conj", (e,)), EvalPoint.of(*p))
    b = eval_expr(e, EvalPoint.of(*p))
    if cmath.isfinite(b):
        assert a == pytest.approx(b.conjugate(), rel=1e-12, abs=1e-12)


@settings(max_examples=150, deadline=None)
@given(exprs, points)
def test_abs2_nonnegative_and_deterministic(e, p):
    pt = EvalPoint.of(*p)
    v = eval_expr(Func("abs2", (e,)), pt)
    if math.isfinite(abs(v)):
        assert v.real >= 0 and v.imag == 0
    w = eval_expr(e, pt)
    again = eval_expr(e, pt)
    assert (w == again) or (cmath.isnan(w) and cmath.isnan(again))
