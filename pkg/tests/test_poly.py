import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from intpolymin.poly import (
    MINUS_INFINITY, ParseError, Polynomial, evaluate, fix_prefix, format_poly,
    homogeneous_components, leading_form, one_norm, parse, shifted_monomial, sum_polys,
    translate,
)


def test_parse_basic():
    assert parse("2*x1^2*x2 - 1", 2).terms == {(2, 1): 2.0, (0, 0): -1.0}
    assert parse("x1 + x1", 2).terms == {(1, 0): 2.0}
    assert parse("0*x1", 2).terms == {}
    assert parse("  -x2^3 +  0.5 ", 2).terms == {(0, 3): -1.0, (0, 0): 0.5}


@pytest.mark.parametrize("text", ["x1 +", "2**x1", "x3", "x1^", "1e", "x1 x2 @"])
def test_parse_errors(text):
    with pytest.raises(ParseError):
        parse(text, 2)


def test_parse_error_position():
    with pytest.raises(ParseError) as exc:
        parse("x1 + x5", 2)
    assert exc.value.position >= 5


def test_exponent_overflow():
    with pytest.raises(ParseError):
        parse("x1^99999999", 1)


def test_zero_polynomial_degree():
    z = Polynomial.zero(3)
    assert z.degree is MINUS_INFINITY
    assert z.degree < 0
    assert z.is_zero()


def test_evaluate_examples(univariate, diophantine):
    assert abs(evaluate(univariate, [0.0]) - 2.8396458) < 1e-9
    expected = 0.2 * 0.3 ** 6 - 5 * 0.3 ** 4 + 32 * 0.3 ** 2
    assert abs(evaluate(univariate, [0.0]) - expected) < 1e-9
    assert evaluate(diophantine, [-1, 1]) == 0.0
    f = parse("3*x1*x2 + 7", 2)
    assert evaluate(f, [0, 0]) == 7.0
    with pytest.raises(ValueError):
        evaluate(f, [1.0])


def test_homogeneous_components(variety):
    f = parse("x1^2 + 3*x1 + 1", 1)
    comps = homogeneous_components(f)
    assert [c.terms for c in comps] == [{(0,): 1.0}, {(1,): 3.0}, {(2,): 1.0}]
    assert homogeneous_components(variety)[1].is_zero()
    g = parse("x1^3 - x1*x2^2", 2)
    comps = homogeneous_components(g)
    assert all(c.is_zero() for c in comps[:3]) and comps[3] == g


def test_leading_form(univariate):
    assert leading_form(parse("x1^4 + x1*x2", 2)) == parse("x1^4", 2)
    assert leading_form(parse("x1^2*x2^2 + x2^4 - x1", 2)) == parse("x1^2*x2^2 + x2^4", 2)
    assert leading_form(univariate).terms == {(6,): 0.2}
    with pytest.raises(ValueError):
        leading_form(Polynomial.zero(2))


def test_one_norm():
    assert one_norm(parse("x1*x2 - 2*x1^2", 2)) == 3.0
    assert one_norm(Polynomial.zero(2)) == 0.0
    assert one_norm(parse("0.5*x1 + 0.5*x2", 2)) == 1.0


def test_fix_prefix():
    f = parse("x1^2 + x2^2", 2)
    assert fix_prefix(f, [3]).terms == {(0,): 9.0, (2,): 1.0}
    full = fix_prefix(f, [1, 2])
    assert full.n == 0 and full.terms == {(): 5.0}
    assert fix_prefix(parse("x1*x2", 2), [0]).is_zero()
    assert fix_prefix(f, []) == f


def test_shifted_monomial():
    assert shifted_monomial([0.0], (1,)).terms == {(2,): 1.0}
    assert shifted_monomial([1.0], (1,)).terms == {(2,): 1.0, (1,): -2.0, (0,): 1.0}
    assert abs(shifted_monomial([0.3], (1,))([0.0]) - 0.09) < 1e-15
    s = shifted_monomial([0.5, -1.0], (2, 1))
    assert s.degree == 6


def test_translate_matches_composition(rng):
    f = parse("x1^4 - 2*x1^2*x2 + x2^2 - 3*x1 + 1", 2)
    h = np.array([0.7, -1.3])
    t = translate(f, h)
    for _ in range(20):
        y = rng.normal(size=2)
        assert math.isclose(t(y), f(y + h), rel_tol=1e-10, abs_tol=1e-10)


# ---------------------------------------------------------------------------
# properties

coef = st.floats(-1e3, 1e3, allow_nan=False).filter(lambda c: c != 0)


@st.composite
def polynomials(draw, n=3, max_deg=5):
    terms = draw(st.dictionaries(
        st.tuples(*[st.integers(0, max_deg) for _ in range(n)]).filter(lambda a: sum(a) <= max_deg),
        coef, max_size=10))
    return Polynomial(n, terms)


@settings(max_examples=200, deadline=None)
@given(polynomials())
def test_roundtrip(f):
    assert parse(format_poly(f), f.n).terms == f.terms


@settings(max_examples=100, deadline=None)
@given(polynomials(), st.integers(0, 2**32 - 1))
def test_homogeneity(f, seed):
    rng = np.random.default_rng(seed)
    for j, fj in enumerate(homogeneous_components(f)):
        for _ in range(100):
            x = rng.uniform(-2, 2, f.n)
            lam = rng.uniform(-3, 3)
            ref = lam ** j * fj(x)
            assert abs(fj(lam * x) - ref) <= 1e-8 * (1 + abs(ref))


@settings(max_examples=200, deadline=None)
@given(polynomials())
def test_decomposition_exact(f):
    comps = homogeneous_components(f)
    merged = {}
    for c in comps:
        merged.update(c.terms)
    assert merged == f.terms
    assert sum_polys(comps, f.n).terms == f.terms


@settings(max_examples=100, deadline=None)
@given(polynomials(), st.lists(st.integers(-5, 5), min_size=0, max_size=3), st.integers(0, 2**32 - 1))
def test_fix_prefix_consistency(f, r, seed):
    rng = np.random.default_rng(seed)
    g = fix_prefix(f, r)
    for _ in range(5):
        y = rng.uniform(-2, 2, f.n - len(r))
        full = f(np.concatenate([np.asarray(r, float), y]))
        scale = sum(abs(c) * np.prod(np.abs(np.concatenate([np.asarray(r, float), y])) ** np.asarray(a))
                    for a, c in f.terms.items())
        assert abs(g(y) - full) <= 1e-9 * (1 + scale)


@settings(max_examples=100, deadline=None)
@given(st.lists(st.floats(-5, 5), min_size=2, max_size=2), st.tuples(st.integers(0, 3), st.integers(0, 3)))
def test_shifted_monomial_at_h(h, alpha):
    v = shifted_monomial(h, alpha)(np.asarray(h))
    scale = np.prod((1 + np.abs(h)) ** (2 * np.asarray(alpha)))
    if sum(alpha) == 0:
        assert v == 1.0
    else:
        assert abs(v) <= 1e-12 * scale
