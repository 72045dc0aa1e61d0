import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, strategies as st

from funceq.families import (
    FAMILIES,
    SolutionSpec,
    UnsupportedFamily,
    derivatives,
    evaluate,
    h_representations,
    laurent_coefficients,
    quadratic_in_p_form,
    quadratic_lattice,
    real_window,
    representation_chain_check,
    weierstrass_laurent,
)
from funceq.special_functions import EllipticParams, PoleError, jacobi_sn_cn_dn, weierstrass_p

# one representative per family, with points away from the poles
SAMPLES = [
    (SolutionSpec("linear", {"a": 1.0, "b": 2.0}), (-3.0, 3.0)),
    (SolutionSpec("exponential", {"a": 0.5, "b": -1.5, "c": 0.7}), (-3.0, 3.0)),
    (SolutionSpec("weierstrass", {"g2": 12.0, "g3": -4.0, "a": 0.3, "b": 1.2}), (0.2, 1.2)),
    (SolutionSpec("h1", {"k": 0.6}), (0.2, 2.5)),
    (SolutionSpec("h2", {"k": 0.6}), (0.2, 1.5)),
    (SolutionSpec("h3", {"k": 0.6}), (0.2, 1.5)),
    (SolutionSpec("hyperbolic", {"beta": 1.3, "alpha": 0.8}), (0.2, 3.0)),
    (SolutionSpec("trigonometric", {"b0": 1.0, "b1": 0.5}), (0.2, 1.8)),
    (SolutionSpec("inverse_square", {"b0": 2.0}), (0.3, 3.0)),
]


def test_linear_value():
    assert evaluate(SolutionSpec("linear", {"a": 1.0, "b": 2.0}), 3.0) == 7.0


def test_hyperbolic_value():
    assert evaluate(SolutionSpec("hyperbolic", {}), 1.0) == pytest.approx(
        math.cosh(1.0) / math.sinh(1.0) ** 2, rel=1e-14)


def test_sinh_shift_value():
    z = 0.4
    expected = 1 / np.sinh(z - 1j * math.pi / 3) ** 2
    assert complex(evaluate(SolutionSpec("sinh_shift", {}), z)) == pytest.approx(expected, rel=1e-13)


def test_h_families_use_the_jacobi_quotient():
    spec = SolutionSpec("h3", {"k": 0.6, "scale": 2.0})
    z = 0.37
    b = spec.lattice.e1 - spec.lattice.e3
    sn, cn, dn = jacobi_sn_cn_dn(math.sqrt(b) * z, 0.6)
    assert evaluate(spec, z) == pytest.approx(b * cn * dn / sn ** 2, rel=1e-13)


@pytest.mark.parametrize("j", [4, 6, 8])
def test_h1_approaches_hyperbolic(j):
    h1 = SolutionSpec("h1", {"k": 1 - 10.0 ** -j})
    hyp = SolutionSpec("hyperbolic", {"beta": 1.0, "alpha": 1.0})
    for z in (0.3, 0.9, 1.7):
        assert abs(evaluate(h1, z) - evaluate(hyp, z)) < 10.0 ** (2 - j)
    if j == 8:
        assert abs(evaluate(h1, 0.9) - evaluate(hyp, 0.9)) < 1e-8


def test_pole_proximity_reports_location():
    with pytest.raises(PoleError) as info:
        evaluate(SolutionSpec("inverse_square", {}), 1e-12)
    assert info.value.location == 0.0
    h1 = SolutionSpec("h1", {"k": 0.6})
    with pytest.raises(PoleError) as info:
        evaluate(h1, 4 * h1.lattice.omega + 1e-12)
    assert info.value.location == pytest.approx(4 * h1.lattice.omega)


def test_spec_validation():
    with pytest.raises(UnsupportedFamily):
        SolutionSpec("cubic", {})
    with pytest.raises(ValueError):
        SolutionSpec("linear", {"q": 1.0})
    with pytest.raises(ValueError):
        SolutionSpec("weierstrass", {"g2": 1.0})
    with pytest.raises(ValueError):
        SolutionSpec("h1", {})


@pytest.mark.parametrize("spec", [s for s, _ in SAMPLES], ids=lambda s: s.family)
def test_json_round_trip(spec):
    again = SolutionSpec.from_json(spec.to_json())
    assert again == spec


# --- derivatives ---------------------------------------------------------------

def _central(spec, z, order, h=1e-3):
    # Richardson-improved central differences of the analytic first derivative
    def d(h):
        if order == 1:
            return (evaluate(spec, z + h) - evaluate(spec, z - h)) / (2 * h)
        lo = derivatives(spec, z - h, order - 1)[order - 1]
        hi = derivatives(spec, z + h, order - 1)[order - 1]
        return (hi - lo) / (2 * h)
    return (4 * d(h / 2) - d(h)) / 3


@pytest.mark.parametrize("spec,box", SAMPLES, ids=[s.family for s, _ in SAMPLES])
def test_derivatives_match_differences(spec, box):
    rng = np.random.default_rng(7)
    for z in rng.uniform(*box, 5):
        d = derivatives(spec, z, 5)
        scale = max(1.0, float(np.max(np.abs(d))))
        for order in range(1, 6):
            fd = _central(spec, z, order)
            assert abs(d[order] - fd) < 1e-6 * scale


def test_linear_second_derivative_is_zero():
    d = derivatives(SolutionSpec("linear", {"a": 1.0, "b": 2.0}), 0.7, 5)
    assert list(d[2:]) == [0.0, 0.0, 0.0, 0.0]


@given(st.floats(0.1, 1.4))
def test_weierstrass_second_derivative(z):
    spec = SolutionSpec("weierstrass", {"g2": 12.0, "g3": -4.0, "b": 1.7})
    p, _ = weierstrass_p(z, spec.lattice)
    f2 = derivatives(spec, z, 2)[2]
    assert f2 == pytest.approx(1.7 * (6 * p ** 2 - 6.0), rel=1e-10, abs=1e-10)


def test_inverse_square_fifth_derivative():
    z = 0.8
    got = derivatives(SolutionSpec("inverse_square", {"b0": 2.0}), z, 5)[5]
    assert got == pytest.approx(-720 * 2.0 * z ** -7, rel=1e-13)


def test_array_input_shape():
    spec = SolutionSpec("h2", {"k": 0.6})
    zs = np.linspace(0.2, 1.2, 7)
    d = derivatives(spec, zs, 3)
    assert d.shape == (4, 7)
    np.testing.assert_allclose(d[0], [evaluate(spec, z) for z in zs], rtol=1e-13)


# --- symmetry and poles --------------------------------------------------------

@pytest.mark.parametrize("spec", [s for s, _ in SAMPLES if s.is_even], ids=lambda s: s.family)
def test_even_families_are_even(spec):
    per = spec.real_period or 6.0
    zs = np.random.default_rng(3).uniform(0.05, 0.95, 1000) * per
    fwd = np.array([derivatives(spec, z, 0)[0] for z in zs])
    back = np.array([derivatives(spec, -z, 0)[0] for z in zs])
    assert np.all(np.abs(fwd - back) <= 1e-12 * np.maximum(1.0, np.abs(fwd)))


def test_evenness_flag():
    assert not SolutionSpec("weierstrass", {"g2": 12.0, "g3": -4.0, "d": 0.3}).is_even
    assert not SolutionSpec("exponential", {}).is_even
    assert SolutionSpec("h2", {"k": 0.3}).is_even


@pytest.mark.parametrize("family", ["h1", "h2", "h3"])
def test_h_double_pole_strength(family):
    # b q(u)/sn(u)^2 with u = sqrt(b) z: z^2 h -> b * (1/b) = 1 for every scale
    spec = SolutionSpec(family, {"k": 0.6, "scale": 1.5})
    limits = [z * z * evaluate(spec, z) for z in (1e-2, 1e-3, 1e-4)]
    assert abs(limits[-1] - 1.0) < 1e-7
    assert abs(limits[0] - 1) > abs(limits[-1] - 1)


def test_periods():
    h1 = SolutionSpec("h1", {"k": 0.6})
    h2 = SolutionSpec("h2", {"k": 0.6})
    w = h1.lattice.omega
    assert h1.real_period == pytest.approx(2 * w)
    assert h2.real_period == pytest.approx(4 * w)
    z = 0.41
    assert evaluate(h1, z + 2 * w) == pytest.approx(evaluate(h1, z), rel=1e-10)
    assert evaluate(h2, z + 2 * w) == pytest.approx(-evaluate(h2, z), rel=1e-10)
    assert evaluate(h2, z + 4 * w) == pytest.approx(evaluate(h2, z), rel=1e-10)


def test_real_window_covers_period_for_h1():
    spec = SolutionSpec("h1", {"k": 0.6})
    windows = real_window(spec, count=201)
    assert len(windows) == 1
    lo, hi = windows[0]
    assert lo < 0.05 * spec.real_period and hi > 0.95 * spec.real_period


# --- Laurent coefficients ------------------------------------------------------

def test_inverse_square_laurent():
    c = laurent_coefficients(SolutionSpec("inverse_square", {"b0": 3.0}), 6)
    assert c.coeffs[0] == 3 and all(x == 0 for x in c.coeffs[1:])


def test_weierstrass_laurent_recurrence():
    p = weierstrass_laurent(12, 8, 4)
    assert p[1] == Fraction(12, 20)
    assert p[2] == Fraction(8, 28)
    assert p[3] == Fraction(144, 1200)


def test_weierstrass_laurent_degenerate_case():
    # b1 P(sqrt(b1/b0) z; 12, 8) + b1 with b0 = b1 = 1: z^2 coefficient is 3/5
    c = laurent_coefficients(SolutionSpec("weierstrass", {"g2": 12, "g3": 8, "a": 1, "b": 1}), 4)
    assert c.coeffs[0] == 1
    assert c.power_coefficient(1) == 1
    assert c.power_coefficient(2) == Fraction(3, 5)
    assert c.start_power == -2


@pytest.mark.parametrize("spec", [
    SolutionSpec("hyperbolic", {"beta": 1.0, "alpha": 1.0}),
    SolutionSpec("trigonometric", {"b0": 1.0, "b1": 0.5}),
    SolutionSpec("weierstrass", {"g2": 12.0, "g3": -4.0, "a": 0.5}),
    SolutionSpec("h1", {"k": 0.5}),
    SolutionSpec("h3", {"k": 0.5}),
], ids=lambda s: s.family)
def test_laurent_series_reproduces_values(spec):
    c = laurent_coefficients(spec, 12)
    z = 0.25
    total = sum(float(c.power_coefficient(j)) * z ** (2 * j - 2) for j in range(len(c.coeffs)))
    assert total == pytest.approx(evaluate(spec, z), rel=1e-10)


def test_laurent_limits():
    with pytest.raises(ValueError):
        laurent_coefficients(SolutionSpec("inverse_square", {}), 21)
    with pytest.raises(UnsupportedFamily):
        laurent_coefficients(SolutionSpec("exponential", {}), 4)


# --- representations ----------------------------------------------------------

@pytest.mark.parametrize("h", [1, 2, 3])
@pytest.mark.parametrize("k", [0.3, 0.5, 0.9])
def test_representations_agree(h, k):
    params = EllipticParams.from_modulus(k, 1.0)
    z = np.random.default_rng(h).uniform(0.05, 2 * params.omega - 0.05, 100)
    assert representation_chain_check(h, z, params) < 1e-9


def test_midpoint_agreement():
    params = EllipticParams.from_modulus(0.5, 1.0)
    forms = h_representations(2, params.omega, params)
    vals = [float(np.real(v)) for v in forms.values()]
    assert max(vals) - min(vals) < 1e-12
    assert abs(vals[0]) < 1e-12  # cn vanishes at the quarter period


def test_h1_small_modulus_limit():
    # k -> 0: dn -> 1, so h1 -> b/sin^2(sqrt(b) z), the trigonometric form with b1 = b0 b/3
    spec = SolutionSpec("h1", {"k": 1e-6})
    b = spec.lattice.e1 - spec.lattice.e3
    trig = SolutionSpec("trigonometric", {"b0": 1.0, "b1": b / 3})
    for z in (0.3, 0.9, 1.4):
        assert evaluate(spec, z) == pytest.approx(evaluate(trig, z), rel=1e-10)


# --- quadratic form ------------------------------------------------------------

def test_quadratic_double_root_case():
    b0, b1 = 1.0, 0.8
    b2 = 6 * b1 ** 2 / (5 * b0)
    lat = EllipticParams.from_invariants(12.0, 8.0)
    for z in (0.2, 0.6, 1.0):
        p, _ = weierstrass_p(math.sqrt(b1 / b0) * z, lat)
        assert quadratic_in_p_form(b0, b1, b2, z) == pytest.approx(b1 * p + b1, rel=1e-9)


def test_quadratic_small_b1_limit():
    for z in (0.01, 0.02):
        assert quadratic_in_p_form(2.0, 1e-9, -0.01, z) == pytest.approx(2.0 / z ** 2, rel=1e-8)


@pytest.mark.parametrize("b,numerator", [((2.0, 0.3, -1.0), "cn"), ((1.0, 0.3, 0.1), "dn")])
def test_quadratic_matches_jacobi_quotient(b, numerator):
    # the quadratic shares two cubic roots with the lattice of W, so it is
    # A q(Bz)/sn(Bz)^2 with A = b0 (e1 - e3), B = sqrt(e1 - e3) and k from W
    lat, shared = quadratic_lattice(*b)
    e = (lat.e1, lat.e2, lat.e3)
    assert all(min(abs(r - x) for x in e) < 1e-10 for r in shared)
    B2 = lat.e1 - lat.e3
    for z in (0.3, 0.7, 1.1):
        sn, cn, dn = jacobi_sn_cn_dn(math.sqrt(B2) * z, lat.k)
        q = cn if numerator == "cn" else dn
        assert quadratic_in_p_form(*b, z) == pytest.approx(abs(b[0] * B2 * q / sn ** 2), rel=1e-8)


def test_quadratic_negative_radicand():
    # on Re z = omega, W lies in [e3, e2], where (W - e1)(W - e3) < 0
    lat, _ = quadratic_lattice(2.0, 0.3, -1.0)
    with pytest.raises(ValueError):
        quadratic_in_p_form(2.0, 0.3, -1.0, complex(lat.omega, 0.3))


def test_family_table_defaults():
    assert set(FAMILIES) >= {"linear", "exponential", "weierstrass", "h1", "h2", "h3",
                             "hyperbolic", "trigonometric", "inverse_square", "sinh_shift"}
