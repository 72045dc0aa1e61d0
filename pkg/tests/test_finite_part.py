import json
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from funceq.finite_part import (
    EPSILONS,
    Exponential,
    FinitePartDivergence,
    TestFunction,
    distribution_identity_check,
    epsilon_profile,
    finite_part_1d,
    finite_part_double,
    kernel,
    richardson,
    test_function as named,
)

PI2 = math.pi ** 2


@pytest.fixture(scope="module")
def checks():
    """One double finite part per named function, shared by the tests below."""
    return {name: distribution_identity_check(named(name))
            for name in ("x2y_gauss", "xy2_gauss", "sym_gauss", "mixed_shifted")}


# --- one dimension ------------------------------------------------------------

@pytest.mark.parametrize("k", [0.5, 1.0, 3.0, -2.0])
def test_fourier_of_inverse_square(k):
    assert finite_part_1d(Exponential(k), 2) == pytest.approx(-math.pi * abs(k), abs=1e-6)


def test_even_function_at_cube_vanishes():
    assert abs(finite_part_1d(lambda x: np.exp(-x * x) * (1 + x * x), 3)) < 1e-8


def test_odd_over_cube_reduces_to_square():
    phi = lambda x: x * np.exp(-x * x)
    assert finite_part_1d(phi, 3, derivative=1.0) == pytest.approx(-2 * math.sqrt(math.pi),
                                                                   abs=1e-6)
    # the differenced slope gives the same answer
    assert finite_part_1d(phi, 3) == pytest.approx(-2 * math.sqrt(math.pi), abs=1e-6)


def test_counterterm_coefficient():
    phi = lambda x: 1.5 * np.exp(-x * x)
    eps = np.array(EPSILONS)
    raw = np.real(epsilon_profile(phi, 2))
    # raw = c/eps + d + e eps + f eps^2 ...
    A = np.stack([1 / eps, np.ones_like(eps), eps, eps ** 2, eps ** 3], axis=1)
    c = np.linalg.solve(A, raw)[0]
    assert c == pytest.approx(2 * phi(0.0), rel=1e-4)


def test_bad_power():
    with pytest.raises(ValueError):
        finite_part_1d(lambda x: np.exp(-x * x), 4)


def test_divergence_is_reported():
    # an unsubtracted log singularity keeps the extrapolation from settling
    phi = lambda x: np.exp(-x * x) * (1 + np.abs(x) ** 0.5)
    with pytest.raises(FinitePartDivergence) as info:
        finite_part_1d(phi, 2, tol=1e-10)
    assert info.value.tail > 0


def test_richardson_removes_power_terms():
    eps = np.array(EPSILONS)
    vals = 3.0 + 2 * eps - 5 * eps ** 2 + eps ** 3
    est, err = richardson(vals, eps)
    assert est == pytest.approx(3.0, abs=1e-12) and err < 1e-10


# --- test functions ---------------------------------------------------------------

def test_hermite_derivatives_are_exact():
    phi = named("mixed_shifted")
    for nx, ny in ((1, 0), (0, 1), (2, 1), (1, 2)):
        h = 1e-3
        d = phi.partial(nx, ny)
        # low-order check against differences of the next-lower derivative
        lower = phi.partial(nx - 1, ny) if nx else phi.partial(nx, ny - 1)
        axis = 0 if nx else 1
        step = (h, 0.0) if axis == 0 else (0.0, h)
        x, y = 0.2, -0.4
        diff = (lower(x + step[0], y + step[1]) - lower(x - step[0], y - step[1])) / (2 * h)
        assert d(x, y) == pytest.approx(diff, rel=1e-5, abs=1e-8)


def test_third_derivatives_of_named_functions():
    assert named("x2y_gauss").third_derivative_sum() == pytest.approx(2.0)
    assert named("xy2_gauss").third_derivative_sum() == pytest.approx(2.0)
    assert named("sym_gauss").third_derivative_sum() == pytest.approx(4.0)
    assert named("gauss").third_derivative_sum() == 0.0


def test_unknown_name():
    with pytest.raises(KeyError):
        named("nope")


def test_kernel_vanishes_off_the_lines():
    rng = np.random.default_rng(0)
    x, y = rng.uniform(-3, 3, (2, 200))
    keep = (np.abs(x) > 0.1) & (np.abs(y) > 0.1) & (np.abs(x - y) > 0.1)
    scale = 1 / np.minimum.reduce([np.abs(x), np.abs(y), np.abs(x - y)]) ** 5
    assert np.all(np.abs(kernel(x[keep], y[keep])) < 1e-10 * scale[keep])


# --- the double finite part ------------------------------------------------------------

@pytest.mark.parametrize("name,target", [("x2y_gauss", 2 * PI2), ("xy2_gauss", 2 * PI2),
                                         ("sym_gauss", 4 * PI2)])
def test_distribution_identity(checks, name, target):
    c = checks[name]
    assert c["rhs"] == pytest.approx(target, rel=1e-14)
    assert c["rel_err"] < 1e-6


def test_shifted_mixed_function(checks):
    assert checks["mixed_shifted"]["rel_err"] < 1e-5


def test_intermediate_constant(checks):
    for c in checks.values():
        assert c["intermediate"] == pytest.approx(c["intermediate_target"], rel=1e-5)
        # the two routes to pi^2 agree
        assert abs(c["intermediate"] + (c["rhs"] / PI2) * 4 - c["lhs"]) < 1e-3 * PI2


def test_swap_symmetry(checks):
    assert checks["x2y_gauss"]["lhs"] == pytest.approx(checks["xy2_gauss"]["lhs"], rel=1e-6)
    swapped = distribution_identity_check(named("mixed_shifted").swapped())
    assert swapped["lhs"] == pytest.approx(checks["mixed_shifted"]["lhs"], rel=1e-5)


def test_even_function_gives_zero():
    for name in ("gauss", "x2_gauss"):
        if name == "x2_gauss":
            phi = TestFunction.monomials({(2, 0): 1.0, (0, 2): -0.5, (1, 1): 2.0})
        else:
            phi = named(name)
        c = distribution_identity_check(phi)
        assert abs(c["lhs"]) < 1e-3 * PI2 and c["rhs"] == 0.0


def test_gaussian_expansion_feeds_the_target():
    # x e^{-r^2} = x - x y^2 - x^3 + ..., so phi_yyx(0, 0) = -2 from the Gaussian alone
    c = distribution_identity_check(named("x_gauss"))
    assert c["rhs"] == pytest.approx(-2 * PI2, rel=1e-14)
    assert c["rel_err"] < 1e-6


def test_linearity(checks):
    a = named("x2y_gauss") * 2.0 + named("xy2_gauss") * -0.5
    c = distribution_identity_check(a)
    expected = 2.0 * checks["x2y_gauss"]["lhs"] - 0.5 * checks["xy2_gauss"]["lhs"]
    assert c["lhs"] == pytest.approx(expected, rel=1e-6)


def test_corner_combination_tends_to_zero():
    res = finite_part_double(named("x2y_gauss"))
    # the raw combination is about 8 eps; the limit is zero up to extrapolation noise
    assert abs(res.boundary_limit) < 1e-4
    assert res.extrapolation_error < 1e-5 * abs(res.value)
    assert len(res.regions) == len(EPSILONS)


def test_report_serialises(checks):
    text = json.dumps(checks["x2y_gauss"], sort_keys=True)
    back = json.loads(text)
    assert {"lhs", "rhs", "rel_err", "epsilons"} <= set(back)
    assert back["epsilons"] == list(EPSILONS)


def test_region_sum_needs_a_test_function():
    with pytest.raises(TypeError):
        finite_part_double(lambda x, y: x)


@settings(max_examples=5, deadline=None)
@given(st.floats(0.5, 2.0))
def test_rescaled_gaussian(s):
    # phi = x^2 y e^{-s r^2}: third derivatives at 0 are still 2 and 0
    phi = TestFunction.monomials({(2, 1): 1.0}, scale=s)
    c = distribution_identity_check(phi, tol=1e-8)
    assert c["rel_err"] < 1e-4
