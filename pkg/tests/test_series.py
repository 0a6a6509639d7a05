from fractions import Fraction

import mpmath
import pytest
from hypothesis import given, settings, strategies as st

from bnflab.scalars import Backend
from bnflab.series import (Monomial, PoissonSeries, SeriesError, evaluate,
                           from_terms, lie_transform, monomial,
                           poisson_bracket, s_add, s_multiply, s_scale,
                           series_combine, series_from_dict, series_to_dict,
                           term_series, zero_series)

EX = Backend("exact")


def h_omega(omega, d, order):
    return from_terms(d, order, EX, (
        (tuple(1 if i == j else 0 for i in range(d)),) * 2 + (omega[j],)
        for j in range(d)))


# -- spec examples -------------------------------------------------------------


def test_add_cancels():
    a = from_terms(2, 4, EX, [((1, 0), (0, 1), Fraction(2, 3))])
    assert series_combine("add", a, s_scale(a, -1, 4), 4).is_zero()


def test_multiply_actions():
    i1 = term_series(2, 4, EX, (1, 0), (1, 0), 1)
    i2 = term_series(2, 4, EX, (0, 1), (0, 1), 1)
    prod = series_combine("multiply", i1, i2, 4)
    assert prod.terms == {monomial((1, 1), (1, 1)): prod.coeff(monomial((1, 1), (1, 1)))}
    assert prod.coeff(monomial((1, 1), (1, 1))) == 1


def test_multiply_truncates_to_zero():
    xi1sq = term_series(2, 3, EX, (2, 0), (0, 0), 1)
    assert series_combine("multiply", xi1sq, xi1sq, 3).is_zero()


def test_actions_commute():
    i1 = term_series(2, 4, EX, (1, 0), (1, 0), 1)
    i2 = term_series(2, 4, EX, (0, 1), (0, 1), 1)
    assert poisson_bracket(i1, i2, 4).is_zero()


def test_bracket_homega_with_xi1():
    # engine convention: {H_omega, xi_1} = i w1 xi_1  (= sigma*(-i) w1 with sigma = -1)
    hw = h_omega((Fraction(3), Fraction(-5)), 2, 4)
    xi1 = term_series(2, 4, EX, (1, 0), (0, 0), 1)
    out = poisson_bracket(hw, xi1, 4)
    assert out.coeff(monomial((1, 0), (0, 0))) == EX.scalar(0, 3)


def test_bracket_fn_en_action_part():
    # action part of {F_n, E_n} = +2i a^2 (k^2 I1^(k-1) I2^l + l^2 I1^k I2^(l-1))
    # in the engine convention (the printed form carries -2i).
    k, l, a = 2, 1, Fraction(3, 4)
    f = from_terms(2, 8, EX, [((k, l), (0, 0), a), ((0, 0), (k, l), a)])
    e = from_terms(2, 8, EX, [((k, l), (0, 0), a), ((0, 0), (k, l), -a)])
    br = poisson_bracket(f, e, 8)
    act = br.filter(lambda m, c: m.is_action)
    two_i_a2 = EX.scalar(0, 2) * EX.scalar(a * a)
    assert act.coeff(monomial((k - 1, l), (k - 1, l))) == two_i_a2 * (k * k)
    assert act.coeff(monomial((k, l - 1), (k, l - 1))) == two_i_a2 * (l * l)


def test_lie_transform_zero_generator():
    h = from_terms(2, 5, EX, [((1, 0), (1, 0), 1), ((2, 1), (0, 0), 2),
                              ((0, 0), (2, 1), 2)])
    assert lie_transform(h, zero_series(2, 5, EX), 5) == h


def test_lie_transform_rejects_low_degree_generator():
    h = term_series(2, 4, EX, (1, 0), (1, 0), 1)
    chi = term_series(2, 4, EX, (1, 0), (0, 1), 1)
    with pytest.raises(SeriesError):
        lie_transform(h, chi, 4)


def test_lie_transform_eliminates_monomial():
    omega = (Fraction(1), Fraction(-21, 10))
    u, v = (2, 1), (0, 0)
    c = Fraction(5, 7)
    d_pair = 2 * omega[0] + omega[1]
    h = s_add(h_omega(omega, 2, 6),
              from_terms(2, 6, EX, [(u, v, c), (v, u, c)]), 6)
    chi = from_terms(2, 6, EX, [(u, v, EX.scalar(0, c / d_pair)),
                                (v, u, EX.scalar(0, -c / -d_pair) * -1)])
    out = lie_transform(h, chi, 6)
    assert EX.is_zero(out.coeff(monomial(u, v)))
    assert EX.is_zero(out.coeff(monomial(v, u)))
    extra = out - h_omega(omega, 2, 6)
    assert extra.is_zero() or extra.min_degree() > 3


def test_lie_transform_matches_numeric_time_one_flow():
    from bnflab.flows import compile_field, flow_map
    bf = Backend("float", 256)
    omega = (1.0, -2.1)
    u, v = (2, 1), (0, 0)
    c = 0.7
    d_pair = 2 * omega[0] + omega[1]
    hw = from_terms(2, 8, bf, (
        (tuple(1 if i == j else 0 for i in range(2)),) * 2 + (omega[j],)
        for j in range(2)))
    h = s_add(hw, from_terms(2, 8, bf, [(u, v, c), (v, u, c)]), 8)
    gamma = bf.scalar(0, c / d_pair)
    chi = from_terms(2, 8, bf, [(u, v, gamma), (v, u, bf.conj(gamma))])
    assert chi.real
    n_ord = 5
    transformed = lie_transform(h, chi, n_ord)
    _, ham, _ = compile_field(h)
    errs = []
    for scale in (0.04, 0.02):
        z = [scale * x for x in (0.9, -0.3, 0.5, 0.7)]
        val, _ = evaluate(transformed, z, coords="xy")
        z_flowed = flow_map(chi, z, 1.0)
        errs.append(abs(float(bf.real(val)) - ham(z_flowed)))
    # halving |z| must shrink the defect by ~2^(n_ord+1); the absolute size
    # carries the 1/D small-divisor amplification, so only the scaling is tight
    assert errs[1] <= errs[0] / 2 ** (n_ord + 1) * 4.0
    assert errs[0] < 1e-3


def test_evaluate_homega_real_value_and_rotation_field():
    bf = Backend("float", 256)
    hw = from_terms(2, 4, bf, [((1, 0), (1, 0), 2.0), ((0, 1), (0, 1), -1.0)])
    z = [0.3, -0.4, 0.2, 0.5]
    val, (xid, _) = evaluate(hw, z, coords="xy", with_derivatives=True)
    with bf.context():
        xi, eta = __import__("bnflab.series", fromlist=["xy_to_xieta"]).xy_to_xieta(z, bf)
        expected = 2.0 * abs(complex(xi[0])) ** 2 - 1.0 * abs(complex(xi[1])) ** 2
    assert float(bf.imag(val)) == pytest.approx(0.0, abs=1e-40)
    assert float(bf.real(val)) == pytest.approx(expected, rel=1e-12)
    # xi_dot_j = -i w_j xi_j: pure rotation
    assert complex(xid[0]) == pytest.approx(complex(0, -2.0) * complex(xi[0]), rel=1e-12)
    assert complex(xid[1]) == pytest.approx(complex(0, 1.0) * complex(xi[1]), rel=1e-12)


def test_evaluate_conjugate_symmetry_of_field():
    bf = Backend("float", 256)
    f = from_terms(2, 4, bf, [((2, 1), (0, 0), 1.0), ((0, 0), (2, 1), 1.0)])
    z = [0.4, 0.1, -0.3, 0.2]
    _, (xid, etad) = evaluate(f, z, coords="xy", with_derivatives=True)
    for a, b in zip(xid, etad):
        assert complex(b) == pytest.approx(complex(a).conjugate(), rel=1e-12)


def test_evaluate_dimension_mismatch():
    h = term_series(2, 4, EX, (1, 0), (1, 0), 1)
    with pytest.raises(SeriesError):
        evaluate(h, ((EX.one(),), (EX.one(),)), coords="xieta")


def test_backend_mismatch_rejected():
    a = term_series(2, 4, Backend("exact"), (1, 0), (1, 0), 1)
    b = term_series(2, 4, Backend("float", 256), (1, 0), (1, 0), 1)
    with pytest.raises(Exception):
        s_add(a, b, 4)


def test_serialization_roundtrip_and_order():
    s = from_terms(2, 4, EX, [((0, 1), (0, 1), Fraction(1, 3)),
                              ((2, 0), (0, 0), Fraction(-2)),
                              ((0, 0), (2, 0), Fraction(-2)),
                              ((1, 0), (1, 0), 7)])
    data = series_to_dict(s)
    degs = [sum(t["u"]) + sum(t["v"]) for t in data["terms"]]
    assert degs == sorted(degs)
    assert series_from_dict(data) == s
    assert data["backend"] == "exact"


# -- property suite (exact backend, bit-exact) ---------------------------------


def scalars_st():
    return st.builds(Fraction,
                     st.integers(min_value=-9, max_value=9),
                     st.integers(min_value=1, max_value=5))


def exponents_st(d, lo, hi):
    return st.lists(st.integers(min_value=0, max_value=3),
                    min_size=d, max_size=d).map(tuple).filter(
                        lambda u: lo <= sum(u) <= hi)


def real_series_st(d, min_deg=0, max_deg=4, order=12):
    def build(entries):
        acc = zero_series(d, order, EX)
        for (u, v, re, im) in entries:
            if sum(u) + sum(v) < min_deg or sum(u) + sum(v) > max_deg:
                continue
            c = EX.scalar(re, im)
            t = from_terms(d, order, EX, [(u, v, c), (v, u, EX.conj(c))])
            acc = s_add(acc, t, order)
        return acc

    pair = st.tuples(exponents_st(d, 0, max_deg), exponents_st(d, 0, max_deg),
                     scalars_st(), scalars_st())
    return st.lists(pair, min_size=1, max_size=4).map(build)


@settings(max_examples=40, deadline=None)
@given(st.integers(min_value=2, max_value=3), st.data())
def test_bracket_antisymmetry(d, data):
    a = data.draw(real_series_st(d))
    b = data.draw(real_series_st(d))
    lhs = poisson_bracket(a, b, 12)
    rhs = poisson_bracket(b, a, 12)
    assert s_add(lhs, rhs, 12).is_zero()


@settings(max_examples=30, deadline=None)
@given(st.integers(min_value=2, max_value=3), st.data())
def test_bracket_leibniz(d, data):
    # degrees bounded so nothing truncates below the working order
    a = data.draw(real_series_st(d, min_deg=2, max_deg=4, order=16))
    b = data.draw(real_series_st(d, max_deg=4, order=16))
    c = data.draw(real_series_st(d, max_deg=4, order=16))
    w = 16
    lhs = poisson_bracket(a, s_multiply(b, c, w), w)
    rhs = s_add(s_multiply(poisson_bracket(a, b, w), c, w),
                s_multiply(b, poisson_bracket(a, c, w), w), w)
    assert lhs == rhs


@settings(max_examples=20, deadline=None)
@given(st.integers(min_value=2, max_value=3), st.data())
def test_bracket_jacobi(d, data):
    a = data.draw(real_series_st(d, min_deg=2, max_deg=4, order=20))
    b = data.draw(real_series_st(d, min_deg=2, max_deg=4, order=20))
    c = data.draw(real_series_st(d, min_deg=2, max_deg=4, order=20))
    w = 20
    total = s_add(
        poisson_bracket(a, poisson_bracket(b, c, w), w),
        s_add(poisson_bracket(b, poisson_bracket(c, a, w), w),
              poisson_bracket(c, poisson_bracket(a, b, w), w), w), w)
    assert total.is_zero()


@settings(max_examples=40, deadline=None)
@given(st.integers(min_value=2, max_value=3), st.data())
def test_reality_closure(d, data):
    a = data.draw(real_series_st(d))
    b = data.draw(real_series_st(d))
    assert a.real and b.real
    assert s_multiply(a, b, 12)._check_real()
    assert poisson_bracket(a, b, 12)._check_real()


@settings(max_examples=40, deadline=None)
@given(st.data())
def test_homega_bracket_pairing_formula(data):
    d = data.draw(st.integers(min_value=2, max_value=3))
    omega = tuple(data.draw(scalars_st()) for _ in range(d))
    u = data.draw(exponents_st(d, 0, 4))
    v = data.draw(exponents_st(d, 0, 4))
    hw = h_omega(omega, d, 12)
    g = term_series(d, 12, EX, u, v, Fraction(3, 2))
    out = poisson_bracket(hw, g, 12)
    pairing = sum(w * (a - b) for w, a, b in zip(omega, u, v))
    expected = s_scale(g, EX.scalar(0, pairing), 12)
    assert out == expected


@settings(max_examples=25, deadline=None)
@given(st.data())
def test_lie_transform_formal_invertibility(data):
    d = data.draw(st.integers(min_value=2, max_value=3))
    h = data.draw(real_series_st(d, max_deg=4, order=8))
    chi = data.draw(real_series_st(d, min_deg=3, max_deg=4, order=8))
    n_ord = 8
    fwd = lie_transform(h, chi, n_ord)
    back = lie_transform(fwd, s_scale(chi, -1, 8), n_ord)
    assert back == h.with_order(n_ord)
