import random
from fractions import Fraction

import pytest

from bnflab.scalars import Backend
from bnflab.series import (PoissonSeries, action_series, from_terms,
                           lie_transform, monomial, s_add, term_series,
                           zero_series)
from bnflab.frequencies import FrequencyVector, frequency_pairing, split_resonant
from bnflab.normalform import (NormalFormError, NormalFormResult,
                               bnf_coefficient, divergence_probe,
                               normalize_to_order, russmann_rank)

from oracle import oracle_bnf

EX = Backend("exact")


def saddle_model(omega, k, l, a, order):
    d = len(omega)
    h = from_terms(d, order, EX, (
        (tuple(1 if i == j else 0 for i in range(d)),) * 2 + (omega[j],)
        for j in range(d)))
    f = from_terms(d, order, EX, [((k, l) + (0,) * (d - 2), (0,) * d, a),
                                  ((0,) * d, (k, l) + (0,) * (d - 2), a)])
    return s_add(h, f, order)


def test_action_polynomial_is_its_own_normal_form(omega_21):
    h = from_terms(2, 6, EX, [((1, 0), (1, 0), Fraction(1)),
                              ((0, 1), (0, 1), Fraction(-21, 10)),
                              ((1, 1), (1, 1), Fraction(5)),
                              ((2, 0), (2, 0), Fraction(-1, 2))])
    r = normalize_to_order(h, omega_21, 3)
    assert not r.generators
    assert r.bnf == {(1, 0): EX.scalar(1), (0, 1): EX.scalar(Fraction(-21, 10)),
                     (1, 1): EX.scalar(5), (2, 0): EX.scalar(Fraction(-1, 2))}
    assert r.remainder.is_zero()


def test_order4_coefficients_match_closed_form(omega_21):
    h = saddle_model((Fraction(1), Fraction(-21, 10)), 2, 1, Fraction(1), 4)
    r = normalize_to_order(h, omega_21, 2)
    # closed-form pattern -a^2 (k^2 I1^(k-1) I2^l + l^2 I1^k I2^(l-1)) / (k w1 + l w2)
    gap = Fraction(2) * 1 + Fraction(-21, 10)
    assert bnf_coefficient(r, (1, 1)) == EX.scalar(-4 / gap)
    assert bnf_coefficient(r, (2, 0)) == EX.scalar(-1 / gap)
    assert EX.magnitude(bnf_coefficient(r, (1, 1))) == pytest.approx(40.0)
    assert EX.magnitude(bnf_coefficient(r, (2, 0))) == pytest.approx(10.0)


def test_brute_force_oracle_agrees_bit_exactly(omega_21):
    h = saddle_model((Fraction(1), Fraction(-21, 10)), 2, 1, Fraction(1), 4)
    r = normalize_to_order(h, omega_21, 2)
    h_dict = {(2, 1, 0, 0): (Fraction(1), Fraction(0)),
              (0, 0, 2, 1): (Fraction(1), Fraction(0)),
              (1, 0, 1, 0): (Fraction(1), Fraction(0)),
              (0, 1, 0, 1): (Fraction(-21, 10), Fraction(0))}
    expected = oracle_bnf(h_dict, (Fraction(1), Fraction(-21, 10)), 2)
    got = {idx: (EX.real(c), EX.imag(c)) for idx, c in r.bnf.items()}
    assert got == expected


def test_no_spurious_terms_random_instances_vs_oracle():
    rng = random.Random(20240817)
    omega = (Fraction(1), Fraction(-21, 10))
    om = FrequencyVector(omega, EX)
    for trial in range(6):
        n_actions = rng.choice([2, 3])
        order = 2 * n_actions
        terms = {(1, 0, 1, 0): (omega[0], Fraction(0)),
                 (0, 1, 0, 1): (omega[1], Fraction(0))}
        for _ in range(rng.randint(1, 3)):
            while True:
                u = (rng.randint(0, 2), rng.randint(0, 2))
                v = (rng.randint(0, 2), rng.randint(0, 2))
                deg = sum(u) + sum(v)
                if 3 <= deg <= order and u != v:
                    break
            c = Fraction(rng.randint(-5, 5), rng.randint(1, 4))
            if c == 0:
                c = Fraction(1)
            key = u + v
            ckey = v + u
            terms[key] = (terms.get(key, (Fraction(0), Fraction(0)))[0] + c, Fraction(0))
            terms[ckey] = (terms.get(ckey, (Fraction(0), Fraction(0)))[0] + c, Fraction(0))
        h = from_terms(2, order, EX,
                       [(k[:2], k[2:], EX.scalar(vr, vi)) for k, (vr, vi) in terms.items()])
        r = normalize_to_order(h, om, n_actions)
        expected = oracle_bnf(terms, omega, n_actions)
        got = {idx: (EX.real(c), EX.imag(c)) for idx, c in r.bnf.items()}
        assert got == expected, f"trial {trial} diverged from the oracle"


def test_elimination_order_invariance(omega_21):
    # batched per-degree generators vs single-monomial generators in
    # random order must give the identical bnf map
    h = saddle_model((Fraction(1), Fraction(-21, 10)), 2, 1, Fraction(1), 6)
    h = s_add(h, from_terms(2, 6, EX, [((1, 2), (0, 0), Fraction(1, 3)),
                                       ((0, 0), (1, 2), Fraction(1, 3))]), 6)
    n_actions = 3
    r = normalize_to_order(h, omega_21, n_actions)

    rng = random.Random(7)
    order = 2 * n_actions
    cur = h.with_order(order)
    for g in range(3, order + 1):
        while True:
            part = cur.degree_part(g)
            nonres = [(m, c) for m, c in part.items_sorted() if not m.is_action]
            if not nonres:
                break
            m, c = rng.choice(nonres)
            pairing, _ = frequency_pairing(m, omega_21)
            chi = PoissonSeries(2, order, EX, {m: EX.i() * EX.div(c, pairing)})
            cur = lie_transform(cur, chi, order)
    got = {m.action_index: c for m, c in cur.terms.items() if m.is_action}
    assert got == r.bnf


def test_consistency_generators_reproduce_normal_form(omega_21):
    h = saddle_model((Fraction(1), Fraction(-21, 10)), 2, 1, Fraction(1), 4)
    r = normalize_to_order(h, omega_21, 2)
    cur = h.with_order(4)
    for g, chi in r.generators:
        cur = lie_transform(cur, chi, 4)
    rebuilt = s_add(r.bnf_series(4), r.remainder, 4)
    assert cur == rebuilt


def test_generators_are_nonresonant_and_graded(omega_21):
    h = saddle_model((Fraction(1), Fraction(-21, 10)), 2, 1, Fraction(1), 6)
    r = normalize_to_order(h, omega_21, 3)
    for g, chi in r.generators:
        for m in chi.terms:
            assert m.degree == g
            _, cls = frequency_pairing(m, omega_21)
            assert cls == "nonresonant"
    assert [e.degree for e in r.log] == [g for g, _ in r.generators]
    assert all(e.min_divisor and e.min_divisor > 0 for e in r.log)


def test_input_validation():
    om = FrequencyVector((Fraction(1), Fraction(-2)), EX)
    linear = from_terms(2, 4, EX, [((1, 0), (0, 0), 1), ((0, 0), (1, 0), 1),
                                   ((1, 0), (1, 0), 1), ((0, 1), (0, 1), -2)])
    with pytest.raises(NormalFormError):
        normalize_to_order(linear, om, 2)
    offdiag = from_terms(2, 4, EX, [((1, 0), (0, 1), 1), ((0, 1), (1, 0), 1),
                                    ((1, 0), (1, 0), 1), ((0, 1), (0, 1), -2)])
    with pytest.raises(NormalFormError):
        normalize_to_order(offdiag, om, 2)
    degenerate = FrequencyVector((Fraction(1), Fraction(0)), EX)
    h0 = from_terms(2, 4, EX, [((1, 0), (1, 0), 1)])
    with pytest.raises(NormalFormError):
        normalize_to_order(h0, degenerate, 2)


def test_resonant_monomial_aborts_without_flag(omega_res):
    h = saddle_model((Fraction(2), Fraction(-1)), 1, 2, Fraction(1), 4)
    om = FrequencyVector((Fraction(2), Fraction(-1)), EX, lattice=((1, 2),))
    with pytest.raises(NormalFormError, match="resonant"):
        normalize_to_order(h, om, 2)
    r = normalize_to_order(h, om, 2, allow_resonant=True)
    assert r.resonant_kept
    kept = {m for m in r.remainder.terms}
    assert monomial((1, 2), (0, 0)) in kept


def test_zero_divisor_without_lattice_is_an_error():
    # (2, -1) with empty lattice: xi1 xi2^2 pairs to zero but is
    # classified nonresonant, which must fail loudly
    om = FrequencyVector((Fraction(2), Fraction(-1)), EX)
    h = saddle_model((Fraction(2), Fraction(-1)), 1, 2, Fraction(1), 4)
    with pytest.raises(NormalFormError, match="zero divisor"):
        normalize_to_order(h, om, 2)


def test_bnf_coefficient_bounds(omega_21):
    h = saddle_model((Fraction(1), Fraction(-21, 10)), 2, 1, Fraction(1), 4)
    r = normalize_to_order(h, omega_21, 2)
    assert bnf_coefficient(r, (1, 0)) == EX.scalar(1)
    assert EX.is_zero(bnf_coefficient(r, (0, 2)))
    with pytest.raises(NormalFormError):
        bnf_coefficient(r, (3, 0))


# -- Ruessmann ------------------------------------------------------------------


def test_russmann_tilde_family_nondegenerate_at_order_4():
    om = FrequencyVector((Fraction(1), Fraction(-3, 2), Fraction(7, 5)), EX)
    h = action_series(3, 10, EX, {
        (1, 0, 0): Fraction(1), (0, 1, 0): Fraction(-3, 2), (0, 0, 1): Fraction(7, 5),
        (1, 0, 3): Fraction(1), (0, 1, 4): Fraction(1)})
    r = normalize_to_order(h, om, 5)
    verdict, witness = russmann_rank(r, 4)
    assert verdict == "nondegenerate" and witness is None
    # at order 2 only the omega row exists: certificate must stay inconclusive
    verdict2, witness2 = russmann_rank(r, 2)
    assert verdict2 == "degenerate-at-order"
    assert witness2 is not None


def test_russmann_single_action_degenerate_with_witness():
    om = FrequencyVector((Fraction(1), Fraction(0)), EX)
    r = NormalFormResult(omega=om, n=1, bnf={(1, 0): EX.scalar(1)},
                         generators=[], remainder=zero_series(2, 2, EX), log=[])
    verdict, witness = russmann_rank(r, 1)
    assert verdict == "degenerate-at-order"
    assert witness == (Fraction(0), Fraction(1))


def test_russmann_identity_hessian_nondegenerate():
    om = FrequencyVector((Fraction(1), Fraction(-3)), EX)
    h = action_series(2, 4, EX, {(1, 0): Fraction(1), (0, 1): Fraction(-3),
                                 (2, 0): Fraction(1, 2), (0, 2): Fraction(1, 2)})
    r = normalize_to_order(h, om, 2)
    verdict, _ = russmann_rank(r, 2)
    assert verdict == "nondegenerate"


def test_russmann_float_backend():
    bf = Backend("float", 256)
    om = FrequencyVector((1.0, -1.5, 1.4), bf)
    h = from_terms(3, 10, bf, (
        ((e, e, c) for e, c in [((1, 0, 0), 1.0), ((0, 1, 0), -1.5), ((0, 0, 1), 1.4),
                                ((1, 0, 3), 1.0), ((0, 1, 4), 1.0)])))
    r = normalize_to_order(h, om, 5)
    verdict, _ = russmann_rank(r, 4)
    assert verdict == "nondegenerate"


# -- divergence probe ------------------------------------------------------------


def test_probe_geometric_stream_radius_half():
    stream = [((k, 0), EX.scalar(2 ** k)) for k in range(1, 7)]
    rep = divergence_probe(stream, backend=EX)
    assert rep.radius_estimate == pytest.approx(0.5)
    assert rep.monotonicity in ("nondecreasing",)
    assert not rep.radius_zero and not rep.radius_infinite


def test_probe_all_zero_stream():
    stream = [((k, 0), EX.scalar(0)) for k in range(1, 5)]
    rep = divergence_probe(stream, backend=EX)
    assert rep.radius_infinite
    assert rep.monotonicity == "all-zero"


def test_probe_growing_roots_flag():
    stream = [((k, 0), EX.scalar(Fraction(10) ** (k * k))) for k in range(1, 5)]
    rep = divergence_probe(stream, backend=EX)
    assert rep.monotonicity == "strictly-increasing"
    assert rep.radius_zero


def test_probe_rejects_empty_and_constant():
    with pytest.raises(NormalFormError):
        divergence_probe([])
    with pytest.raises(NormalFormError):
        divergence_probe([((0, 0), EX.scalar(1))], backend=EX)
