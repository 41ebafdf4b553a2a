import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from pbcert.polynomial import (
    DimensionError,
    ParseError,
    Polynomial,
    PolyVectorField,
    VariableSet,
    monomials_up_to,
    parse,
    parse_field,
    random_polynomial,
)
from pbcert.verify import simulate

X12 = VariableSet(("x1", "x2"))
X123 = VariableSet(("x1", "x2", "x3"))


# -- parse ------------------------------------------------------------------


def test_parse_and_evaluate_simple():
    assert parse("x1^2 + x1*x2", X12).evaluate([1, 2]) == 3.0


def test_parse_cubic_dynamics_terms():
    p = parse("-x1 - x2 - x1^3", X12)
    assert p.terms == {(1, 0): -1.0, (0, 1): -1.0, (3, 0): -1.0}


def test_parse_three_state_component():
    p = parse("x2 - x3^2", X123)
    assert p.terms == {(0, 1, 0): 1.0, (0, 0, 2): -1.0}


def test_parse_parentheses_powers_and_decimals():
    p = parse("2*(x1 - 1)^2 - 3.5e-1*x2", X12)
    assert p.terms == {(0, 0): 2.0, (1, 0): -4.0, (0, 1): -0.35, (2, 0): 2.0}


def test_parse_whitespace_is_insignificant():
    assert parse("x1*x2+1", X12) == parse("  x1 * x2 +   1 ", X12)


def test_parse_unknown_variable_reports_position():
    with pytest.raises(ParseError) as err:
        parse("x1 + y", X12)
    assert err.value.position == 5
    assert "unknown variable" in str(err.value)


@pytest.mark.parametrize("text", ["x1 + * 2", "(x1 + x2", "x1 ^", "x1^-1", "x1^1.5", "", "3 x1"])
def test_parse_syntax_errors(text):
    with pytest.raises(ParseError):
        parse(text, X12)


def test_variable_set_rejects_duplicates():
    with pytest.raises(ValueError):
        VariableSet(("x", "x"))


def test_non_finite_coefficients_rejected():
    with pytest.raises(ValueError):
        Polynomial({(1, 0): float("nan")}, X12)


# -- evaluation ----------------------------------------------------------------


def test_evaluate_lyapunov_at_origin_is_zero():
    assert parse("x1^2 + x1*x2 + x2^2", X12).evaluate([0, 0]) == 0.0


def test_evaluate_ball_boundary():
    assert parse("x1^2 + x2^2 + x3^2", X123).evaluate([2, 2, 0]) == 8.0


def test_evaluate_quartic():
    assert parse("x1^2 + x1*x2 + x2^2 + x1^4 + x2^4", X12).evaluate([1, 0]) == 2.0


def test_evaluate_batch_matches_pointwise(rng):
    p = random_polynomial(X123, 4, rng)
    X = rng.normal(size=(20, 3))
    batch = p.evaluate(X)
    assert batch.shape == (20,)
    np.testing.assert_allclose(batch, [p.evaluate(x) for x in X], rtol=1e-13)


def test_evaluate_dimension_mismatch():
    with pytest.raises(DimensionError):
        parse("x1", X12).evaluate([1.0, 2.0, 3.0])


# -- calculus ------------------------------------------------------------------


def test_lie_derivative_rotation_is_zero():
    p = parse("x1^2 + x2^2", X12)
    assert p.lie_derivative(parse_field(["x2", "-x1"], X12)).is_zero()


def test_lie_derivative_one_dimensional():
    v = VariableSet(("x1",))
    assert parse("x1^2", v).lie_derivative(parse_field(["x1"], v)) == parse("2*x1^2", v)


def test_lie_derivative_three_state_example(rng):
    V = parse("x1^2 + x2^2 + x3^2", X123)
    f = parse_field(["-x1 + x2*x3^2", "-x2", "-x3"], X123)
    expected = parse("2*x1*(-x1 + x2*x3^2) - 2*x2^2 - 2*x3^2", X123)
    got = V.lie_derivative(f)
    assert got.allclose(expected)
    # finite-difference cross-check
    h = 1e-6
    for x in rng.normal(size=(100, 3)):
        fd = 0.0
        fx = f.evaluate(x)
        for i in range(3):
            e = np.zeros(3)
            e[i] = h
            fd += (V.evaluate(x + e) - V.evaluate(x - e)) / (2 * h) * fx[i]
        assert abs(fd - got.evaluate(x)) <= 1e-6 * (1 + abs(fd))


@pytest.mark.parametrize("text,idx,expected", [
    ("x1^3", 0, "3*x1^2"),
    ("5", 1, "0"),
    ("x1^2*x2^2", 1, "2*x1^2*x2"),
])
def test_differentiate(text, idx, expected):
    assert parse(text, X12).differentiate(idx) == parse(expected, X12)


def test_differentiate_index_out_of_range():
    with pytest.raises(IndexError):
        parse("x1", X12).differentiate(2)


def test_lie_derivative_matches_trajectory_rate(rng):
    # d/dt p(x(t)) by central differences over short RK4 solves
    for _ in range(20):
        n = int(rng.integers(1, 4))
        v = VariableSet.standard(n)
        f = PolyVectorField(tuple(random_polynomial(v, 2, rng, scale=0.3) for _ in range(n)))
        p = random_polynomial(v, 3, rng)
        x0 = rng.uniform(-1, 1, n)
        dt = 1e-4
        fwd = simulate(f, x0, dt=dt, T=dt).states[-1]
        back = simulate(PolyVectorField(tuple(-c for c in f.f)), x0, dt=dt, T=dt).states[-1]
        fd = (p.evaluate(fwd) - p.evaluate(back)) / (2 * dt)
        analytic = p.lie_derivative(f).evaluate(x0)
        assert abs(analytic - fd) <= 1e-6 * (1 + abs(analytic))


# -- algebra ---------------------------------------------------------------------


def test_monomials_are_graded_lex():
    assert monomials_up_to(2, 2) == [(0, 0), (1, 0), (0, 1), (2, 0), (1, 1), (0, 2)]


def test_rounding_dust_is_dropped():
    p = parse("x1", X12)
    q = (p * 0.1 + p * 0.2) - p * 0.3
    assert q.is_zero()


def test_degree_of_product():
    p = parse("x1^2 + x2", X12)
    q = parse("x1*x2^3 - 1", X12)
    assert (p * q).degree() == p.degree() + q.degree()


def test_mismatched_variable_sets_do_not_mix():
    with pytest.raises(ValueError):
        parse("x1", X12) + parse("x1", X123)


def test_closed_loop_substitutes_controller():
    f = parse_field(["x2", "-x1"], X12, [["0"], ["1"]])
    loop = f.closed_loop([parse("-x2", X12)])
    assert loop.f[1] == parse("-x1 - x2", X12)
    assert loop.g is None


coef = st.floats(min_value=-10, max_value=10, allow_nan=False, allow_infinity=False)


@st.composite
def polys(draw, vars=X12, degree=3):
    monos = monomials_up_to(vars.n, degree)
    cs = draw(st.lists(coef, min_size=len(monos), max_size=len(monos)))
    return Polynomial.from_monomials(monos, cs, vars)


point = st.lists(st.floats(min_value=-3, max_value=3, allow_nan=False), min_size=2, max_size=2)


@settings(max_examples=100, deadline=None)
@given(polys(), polys(), point)
def test_sum_and_product_evaluate_pointwise(p, q, z):
    ps, qs = p.evaluate(z), q.evaluate(z)
    scale = 1 + abs(ps) + abs(qs)
    assert abs((p + q).evaluate(z) - (ps + qs)) <= 1e-10 * scale
    assert abs((p * q).evaluate(z) - ps * qs) <= 1e-10 * scale ** 2


@settings(max_examples=100, deadline=None)
@given(polys())
def test_print_parse_round_trip(p):
    assert parse(p.to_string(), X12) == p
