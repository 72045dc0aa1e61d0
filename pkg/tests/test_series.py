import random
from fractions import Fraction

import pytest
import sympy as sp
from hypothesis import given, settings, strategies as st

from funceq import series
from funceq.families import SolutionSpec, laurent_coefficients
from funceq.series import (
    CutoffExceeded,
    DivisionError,
    MultiPoly,
    TruncatedLaurent,
    expand_pde,
    expand_symbolic,
    solve_recurrence,
    substitute_constraints,
    taylor_branch,
)

Z = ("z1", "z2", "z3")


def z(name):
    return MultiPoly.generator(Z, name)


@pytest.fixture(scope="module")
def n3():
    return solve_recurrence(3, 9)


@pytest.fixture(scope="module")
def n2():
    return solve_recurrence(2, 10)


# --- polynomial arithmetic -----------------------------------------------------

def test_difference_of_squares():
    assert (z("z1") + z("z2")) * (z("z1") - z("z2")) == z("z1") ** 2 - z("z2") ** 2


def test_content():
    p = z("z1") ** 2 * 6 + z("z2") * 9
    assert p.content() == 3
    assert MultiPoly(Z, {(1, 0, 0): Fraction(1, 2), (0, 1, 0): Fraction(3, 4)}).content() \
        == Fraction(1, 4)


def test_no_zero_terms_and_canonical_order():
    p = z("z1") - z("z1") + z("z2") * 2 + z("z3") ** 2
    assert all(c != 0 for c in p.terms.values())
    exps = list(p.terms)
    assert exps == sorted(exps, reverse=True)
    assert (z("z1") - z("z1")).is_zero()


polys = st.dictionaries(
    st.tuples(*[st.integers(0, 3)] * 3),
    st.fractions(min_value=-5, max_value=5, max_denominator=4).filter(lambda c: c != 0),
    min_size=1, max_size=5,
).map(lambda d: MultiPoly(Z, d))


@settings(max_examples=60, deadline=None)
@given(polys, polys)
def test_exact_divide_round_trip(a, b):
    assert (a * b).exact_divide(b) == a


@settings(max_examples=60, deadline=None)
@given(polys, polys, polys)
def test_ring_axioms(a, b, c):
    assert a * (b + c) == a * b + a * c
    assert (a * b) * c == a * (b * c)
    assert a + b == b + a


def test_division_remainder_reported():
    with pytest.raises(DivisionError) as info:
        (z("z1") ** 2 + 1).exact_divide(z("z1"))
    assert info.value.remainder == MultiPoly.constant(Z, 1)


def test_truncated_product_drops_high_powers():
    one = MultiPoly.constant(Z, 1)
    s = TruncatedLaurent(-2, [one, None, one, None, one], 2)
    sq = s * s
    assert sq.min_power == -4 and sq.cutoff == 0
    assert sq.power(-4) == one and sq.power(-2) == one * 2 and sq.power(0) == one * 3
    with pytest.raises(CutoffExceeded):
        sq.power(2)


# --- the expansion -------------------------------------------------------------

def test_sampled_levels_match_symbolic_expansion():
    J = 6
    sym = expand_symbolic(2, J)
    levels = expand_pde(2, J)
    rng = random.Random(4)
    for _ in range(3):
        zs = [Fraction(rng.randint(-9, 9)) for _ in range(2)]
        a = [Fraction(rng.randint(-9, 9), rng.randint(1, 5)) for _ in range(J + 1)]
        for lv in levels:
            rhs = sum(f.evaluate(zs) * c.evaluate(a)
                      for f, c in zip(lv.zeta_factors or [], lv.constraints))
            assert sym[lv.level].evaluate(zs + a) == rhs


def test_n2_first_constraint_fixes_a4():
    levels = expand_pde(2, 6)
    first = next(lv for lv in levels if lv.rank)
    assert first.level == 4 and first.rank == 1
    poly = sp.Poly(first.constraints[0].to_sympy(sp.symbols("a0:7")), sp.Symbol("a4"))
    assert poly.degree() == 1


def test_inverse_square_satisfies_everything():
    levels = expand_pde(2, 8)
    coeffs = laurent_coefficients(SolutionSpec("inverse_square", {"b0": 3}), 8).coeffs
    assert all(v == 0 for _, v in substitute_constraints(levels, coeffs))


@pytest.mark.parametrize("n", [2, 3])
def test_weierstrass_laurent_data_is_exact_solution(n):
    levels = expand_pde(n, 9)
    spec = SolutionSpec("weierstrass", {"g2": 12, "g3": -4, "a": Fraction(1, 3), "b": 2})
    coeffs = laurent_coefficients(spec, 9).coeffs
    assert all(v == 0 for _, v in substitute_constraints(levels, coeffs))


def test_h1_data_fails_n2_but_solves_n3():
    spec = SolutionSpec("h1", {"k": Fraction(3, 5)})
    coeffs = laurent_coefficients(spec, 9).coeffs
    assert all(v == 0 for _, v in substitute_constraints(expand_pde(3, 9), coeffs))
    assert any(v != 0 for _, v in substitute_constraints(expand_pde(2, 9), coeffs))


def test_cost_guard():
    with pytest.raises(CutoffExceeded):
        expand_pde(2, 13)
    with pytest.raises(CutoffExceeded):
        expand_pde(4, 4)
    with pytest.raises(ValueError):
        expand_pde(5, 4)


def test_n4_expensive_path():
    levels = expand_pde(4, 5, allow_expensive=True, zeta_factors=False)
    assert [lv.level for lv in levels] == list(range(6))
    assert all(lv.rank == 0 for lv in levels[:4])


# --- the recurrence ------------------------------------------------------------

def test_n2_single_weierstrass_branch(n2):
    assert len(n2.branches) == 1
    a0, a1, a2, a3 = sp.symbols("a0:4")
    assert n2.state.free == (a0, a1, a2, a3)
    assert sp.simplify(n2.state.known[4] - 60 * a2 ** 2 / a0) == 0
    assert n2.checks["weierstrass_match"] == {"agrees": True, "checked_through": 10}


def test_recurrence_is_reproducible(n2):
    again = solve_recurrence(2, 10)
    assert again.to_json() == n2.to_json()


def test_n3_splits_into_two_branches(n3):
    a0, a1, a2, a3, a4 = sp.symbols("a0:5")
    assert len(n3.branches) == 2
    split = n3.checks["split"]
    assert split["level"] == 7
    cond = sp.sympify(split["condition"])
    expected = (a0 * a4 - 60 * a2 ** 2) * (7 * a0 ** 2 * a3 + 60 * a0 * a1 * a2 - 120 * a1 ** 3)
    assert sp.simplify(cond / expected).is_number


def test_n3_generic_branch_is_weierstrass(n3):
    info = n3.checks["branch[a4]"]
    assert info["weierstrass_match"]["agrees"]
    assert info["weierstrass_match"]["checked_through"] == 9


def test_n3_special_branch(n3):
    a0, a1, a2 = sp.symbols("a0:3")
    info = n3.checks["branch[a3]"]
    value = sp.sympify(info["value"])
    assert sp.simplify(value - 60 * a1 * (2 * a1 ** 2 - a0 * a2) / (7 * a0 ** 2)) == 0
    forced = sp.sympify(info["forced_a4"])
    # a4 departs from the generic 60 a2^2/a0 unless 5 a0 a2 = 6 a1^2
    assert info["elliptic_condition"] == ["5*a0*a2 - 6*a1**2 = 0"]
    assert sp.simplify((forced - 60 * a2 ** 2 / a0).subs(a2, sp.Rational(6, 5) * a1 ** 2 / a0)) == 0
    assert info["p1288_match"]["agrees"]
    assert info["hyperbolic_match"]["agrees"]


def test_hyperbolic_family_on_special_branch(n3):
    # beta cosh/sinh^2 with beta = 6 b1, alpha^2 = 6 b1 / b0 reproduces the branch
    b1 = Fraction(3)  # with b0 = 2
    spec = SolutionSpec("hyperbolic", {"beta": 6 * b1, "alpha": 3})  # alpha^2 = 9 = 6 b1/b0
    hit, per_branch = series.family_match(n3, spec)
    assert hit and per_branch == [False, True]


def test_ode_pair_reproduces_the_split():
    out = series.ode_pair_series(9)
    a0, a1, a2 = sp.symbols("a0:3")
    forced = {str(sp.factor(b["known"][4])) for b in out}
    assert str(sp.factor(60 * a2 ** 2 / a0)) in forced
    assert len(out) == 2


# --- the Taylor branch ----------------------------------------------------------

@pytest.fixture(scope="module")
def taylor():
    return taylor_branch(10)


def test_taylor_condition_text(taylor):
    assert taylor.condition == "a3*a5 - a4**2 = 0"


def test_taylor_cross_checks(taylor):
    assert taylor.checks["third_period"]["p_identity"] < 1e-9
    assert taylor.checks["third_period"]["taylor"] < 1e-9
    assert taylor.checks["third_period_exact"] == "0"
    assert taylor.checks["exponential_identity"] == "0"


def test_taylor_bounds():
    with pytest.raises(CutoffExceeded):
        taylor_branch(4)


def test_third_period_fails_elsewhere():
    other = series.third_period_check(12.0, -4.0, Fraction(1, 4))
    assert other["p_identity"] > 1e-3


def test_two_body_equation():
    wp = SolutionSpec("weierstrass", {"g2": 12.0, "g3": -4.0, "a": 0.2})
    assert series.verify_method2_eq(wp, 0.7) < 1e-9
    const = SolutionSpec("linear", {"a": 1.0, "b": 0.0})
    assert series.verify_method2_eq(const, 0.7, a=[1.0, 0.0]) == 0.0
    assert series.verify_method2_eq(SolutionSpec("h1", {"k": 0.9}), 1.2) > 1e-6
