"""Hadamard finite parts and the three-body distribution check.

With x3 = 0 the interaction kernel splits as g = g1 + g2 + g3,

    g1 = -2/((x-y)^2 x^3) - 2/((x-y)^3 x^2)
    g2 = -2/(y^3 (x-y)^2) + 2/(y^2 (x-y)^3)
    g3 =  2/(x^3 y^2) + 2/(x^2 y^3),

and g vanishes away from the lines x = 0, y = 0, x = y.  Each g_j is
regular on the strip around one of those lines, so pairing g_j with that
strip gives finite integrals for every cut-off eps.  Their sum tends to
(pi^2 - 4)(phi_xxy + phi_yyx)(0, 0); adding the point term
4(phi_xxy + phi_yyx)(0, 0) gives the distribution
pi^2 (delta'' delta' + delta' delta'').
"""

import math
from dataclasses import dataclass, field

import numpy as np
from numpy.polynomial import polynomial as P
from scipy.integrate import quad

EPSILONS = (0.2, 0.1, 0.05, 0.025, 0.0125)
QUAD_TOL = 1e-9


class FinitePartDivergence(ArithmeticError):
    """Richardson extrapolation did not settle; carries the last tail estimate."""

    def __init__(self, message, tail):
        super().__init__(message)
        self.tail = tail


class RefinementFailure(ArithmeticError):
    """A region quadrature did not reach its tolerance."""


def richardson(values, epsilons):
    """Neville extrapolation to eps = 0 of values with an expansion in powers of eps.

    Returns (estimate, error) where the error is the gap between the last two
    diagonal entries.
    """
    h = np.asarray(epsilons, dtype=float)
    T = [list(map(float, values))]
    for j in range(1, len(values)):
        prev = T[-1]
        row = []
        for i in range(j, len(values)):
            r = h[i - j] / h[i]
            row.append(prev[i - j + 1] + (prev[i - j + 1] - prev[i - j]) / (r - 1.0))
        T.append(row)
    diag = [t[-1] for t in T]
    err = abs(diag[-1] - diag[-2]) if len(diag) > 1 else math.inf
    return diag[-1], err


# --- one dimension ---------------------------------------------------------------


@dataclass(frozen=True)
class Exponential:
    """phi(x) = exp(-i k x), integrated with an oscillatory-weight rule."""

    k: float

    def __call__(self, x):
        return np.exp(-1j * self.k * x)


def _symmetric_part(phi, power):
    # the part of phi that survives integration against 1/x^power on |x| >= eps
    if power == 2:
        return lambda x: phi(x) + phi(-x)
    return lambda x: phi(x) - phi(-x)


def _outer_integral(phi, power, eps):
    """int_{|x| >= eps} phi(x) / x^power dx."""
    if isinstance(phi, Exponential):
        k = abs(float(phi.k))
        if k == 0.0:
            return 2.0 / eps if power == 2 else 0.0
        if power == 2:
            val, _ = quad(lambda x: 1.0 / x ** 2, eps, math.inf, weight="cos", wvar=k)
            return 2.0 * val
        s = math.copysign(1.0, float(phi.k))
        val, _ = quad(lambda x: 1.0 / x ** 3, eps, math.inf, weight="sin", wvar=k)
        return -2j * s * val
    sym = _symmetric_part(phi, power)
    f = lambda x: sym(x) / x ** power
    total = 0.0
    split = max(eps, 1.0)
    for lo, hi in ((eps, split), (split, math.inf)):
        if lo < hi:
            re, _ = quad(lambda x: np.real(f(x)), lo, hi, epsabs=1e-14, epsrel=1e-12, limit=200)
            im, _ = quad(lambda x: np.imag(f(x)), lo, hi, epsabs=1e-14, epsrel=1e-12, limit=200)
            total += complex(re, im)
    return total


def _slope_at_zero(phi, h=1e-4):
    # fourth-order central difference; exact enough for the counterterm
    return (8 * (phi(h) - phi(-h)) - (phi(2 * h) - phi(-2 * h))) / (12 * h)


def epsilon_profile(phi, power, epsilons=EPSILONS):
    """Raw cut-off integrals int_{|x| >= eps} phi / x^power for each eps."""
    if power not in (2, 3):
        raise ValueError("power must be 2 or 3")
    return [_outer_integral(phi, power, e) for e in epsilons]


def finite_part_1d(phi, power, epsilons=EPSILONS, derivative=None, tol=1e-6):
    """Finite part of int phi(x) / x^power over the line, power 2 or 3.

    The counterterm 2 phi(0)/eps (power 2) or 2 phi'(0)/eps (power 3) is
    removed from each cut-off integral before extrapolating eps -> 0.
    ``derivative`` supplies phi'(0) when known; otherwise it is differenced.
    """
    raw = epsilon_profile(phi, power, epsilons)
    if power == 2:
        c = complex(phi(0.0))
    elif isinstance(phi, Exponential):
        c = -1j * float(phi.k)
    else:
        c = complex(derivative) if derivative is not None else complex(_slope_at_zero(phi))
    vals = [r - 2.0 * c / e for r, e in zip(raw, epsilons)]
    re, err_re = richardson([v.real for v in np.asarray(vals, dtype=complex)], epsilons)
    im, err_im = richardson([v.imag for v in np.asarray(vals, dtype=complex)], epsilons)
    err = math.hypot(err_re, err_im)
    value = complex(re, im)
    if err > tol * max(1.0, abs(value)):
        raise FinitePartDivergence(f"extrapolation error {err:.3g} exceeds tolerance", err)
    return value.real if abs(value.imag) <= 1e-12 * max(1.0, abs(value)) else value


# --- polynomial x Gaussian test functions ---------------------------------------


@dataclass(frozen=True)
class TestFunction:
    """phi(x, y) = p(x, y) exp(-s((x - a)^2 + (y - b)^2)).

    ``coeffs[i, j]`` multiplies x^i y^j.  Derivatives stay in the class, so
    every partial derivative is exact.
    """

    coeffs: np.ndarray
    scale: float = 1.0
    center: tuple = (0.0, 0.0)
    name: str = ""

    __test__ = False  # not a pytest class

    @classmethod
    def monomials(cls, terms, scale=1.0, center=(0.0, 0.0), name=""):
        """From {(i, j): c} with c multiplying x^i y^j."""
        deg = max(max(i, j) for i, j in terms) if terms else 0
        c = np.zeros((deg + 1, deg + 1))
        for (i, j), v in terms.items():
            c[i, j] += v
        return cls(c, float(scale), tuple(map(float, center)), name)

    def __post_init__(self):
        i, j = np.nonzero(self.coeffs)
        object.__setattr__(self, "_terms",
                           tuple((int(p), int(q), float(self.coeffs[p, q])) for p, q in zip(i, j)))

    def __call__(self, x, y):
        a, b = self.center
        if isinstance(x, float) and isinstance(y, float):
            # scalar fast path for the nested quadratures
            poly = sum(c * x ** p * y ** q for p, q, c in self._terms)
            return poly * math.exp(-self.scale * ((x - a) ** 2 + (y - b) ** 2))
        return P.polyval2d(x, y, self.coeffs) * np.exp(
            -self.scale * ((x - a) ** 2 + (y - b) ** 2))

    def _shift_poly(self, axis):
        # (v - center) as a polynomial in x (axis 0) or y (axis 1)
        lin = np.zeros((2, 1)) if axis == 0 else np.zeros((1, 2))
        lin[(0, 0)] = -self.center[axis]
        lin[(1, 0) if axis == 0 else (0, 1)] = 1.0
        return lin

    def d(self, axis):
        """Partial derivative in x (axis 0) or y (axis 1)."""
        c = self.coeffs
        dp = P.polyder(c, axis=axis)
        lin = self._shift_poly(axis)
        prod = _mul2d(c, lin)
        out = _add2d(dp, -2.0 * self.scale * prod)
        return TestFunction(out, self.scale, self.center, self.name)

    def partial(self, nx, ny):
        f = self
        for _ in range(nx):
            f = f.d(0)
        for _ in range(ny):
            f = f.d(1)
        return f

    def swapped(self):
        a, b = self.center
        return TestFunction(self.coeffs.T.copy(), self.scale, (b, a), self.name + "_swapped")

    def __add__(self, other):
        if self.scale != other.scale or self.center != other.center:
            raise ValueError("sum needs a common Gaussian")
        return TestFunction(_add2d(self.coeffs, other.coeffs), self.scale, self.center)

    def __mul__(self, t):
        return TestFunction(self.coeffs * float(t), self.scale, self.center, self.name)

    __rmul__ = __mul__

    def odd_part_nonzero(self):
        """True unless every monomial has even total degree (centred Gaussian only)."""
        i, j = np.nonzero(self.coeffs)
        return bool(np.any((i + j) % 2 == 1))

    def third_derivative_sum(self):
        """phi_xxy(0, 0) + phi_yyx(0, 0)."""
        return float(self.partial(2, 1)(0.0, 0.0) + self.partial(1, 2)(0.0, 0.0))


def _add2d(a, b):
    n = max(a.shape[0], b.shape[0]), max(a.shape[1], b.shape[1])
    out = np.zeros(n)
    out[: a.shape[0], : a.shape[1]] += a
    out[: b.shape[0], : b.shape[1]] += b
    return out


def _mul2d(a, b):
    out = np.zeros((a.shape[0] + b.shape[0] - 1, a.shape[1] + b.shape[1] - 1))
    for i, j in zip(*np.nonzero(b)):
        out[i: i + a.shape[0], j: j + a.shape[1]] += b[i, j] * a
    return out


# named functions used by the command line and the checks
TEST_FUNCTIONS = {
    "gauss": TestFunction.monomials({(0, 0): 1.0}, name="gauss"),
    "x2y_gauss": TestFunction.monomials({(2, 1): 1.0}, name="x2y_gauss"),
    "xy2_gauss": TestFunction.monomials({(1, 2): 1.0}, name="xy2_gauss"),
    "sym_gauss": TestFunction.monomials({(2, 1): 1.0, (1, 2): 1.0}, name="sym_gauss"),
    "x_gauss": TestFunction.monomials({(1, 0): 1.0}, name="x_gauss"),
    "x2_gauss": TestFunction.monomials({(2, 0): 1.0, (2, 1): 0.5}, name="x2_gauss"),
    "mixed_shifted": TestFunction.monomials({(0, 0): 1.0, (2, 1): 1.0, (1, 1): -0.5},
                                            scale=0.8, center=(0.3, -0.2),
                                            name="mixed_shifted"),
}


def test_function(name):
    try:
        return TEST_FUNCTIONS[name]
    except KeyError:
        raise KeyError(f"unknown test function {name!r}; known: {sorted(TEST_FUNCTIONS)}") from None


# --- the two-dimensional region sums ------------------------------------------


def g1(x, y):
    return -2.0 / ((x - y) ** 2 * x ** 3) - 2.0 / ((x - y) ** 3 * x ** 2)


def g2(x, y):
    return -2.0 / (y ** 3 * (x - y) ** 2) + 2.0 / (y ** 2 * (x - y) ** 3)


def g3(x, y):
    return 2.0 / (x ** 3 * y ** 2) + 2.0 / (x ** 2 * y ** 3)


def kernel(x, y):
    return g1(x, y) + g2(x, y) + g3(x, y)


def _reach(phi):
    # beyond this distance from the origin the Gaussian factor is below 1e-30
    a, b = phi.center
    return math.hypot(a, b) + math.sqrt(70.0 / phi.scale) + 1.0


def _strip_integral(integrand, eps, lower, upper, reach, tol):
    """2 int_0^eps dt [int_{lower(t)}^{reach} + int_{-reach}^{upper(t)}] integrand(t, u) du.

    The integrand must be even under (t, u) -> (-t, -u), so the half strip
    t < 0 is the mirror image of the half strip t > 0.
    """
    def inner(t):
        lo, hi = lower(t), upper(t)
        f = lambda u: integrand(t, u)
        a, _ = quad(f, lo, reach, epsabs=tol * 1e-3, epsrel=tol * 0.1, limit=400)
        b, _ = quad(f, -reach, hi, epsabs=tol * 1e-3, epsrel=tol * 0.1, limit=400)
        return a + b

    val, err = quad(inner, 0.0, eps, epsabs=tol * 1e-2, epsrel=tol, limit=200)
    if not math.isfinite(val) or err > max(1e3 * tol * abs(val), 1e-6):
        raise RefinementFailure(f"strip quadrature error {err:.3g} at eps = {eps}")
    return 2.0 * val


def region_integrals(phi, eps, tol=QUAD_TOL):
    """The three strip integrals of phi g_j for one cut-off eps.

    Region 1 is the strip |y| < eps, region 2 is |x| < eps and region 3 is
    |x - y| < eps, each with the other two lines cut out at distance eps.  On
    region 3 the coordinates are (x, eta = y - x).  Every g_j is odd under
    (x, y) -> (-x, -y) and every region is symmetric, so only the odd part of
    phi contributes.
    """
    R = _reach(phi)
    odd = lambda x, y: 0.5 * (phi(x, y) - phi(-x, -y))
    if isinstance(phi, TestFunction) and phi.center == (0.0, 0.0) and not phi.odd_part_nonzero():
        return 0.0, 0.0, 0.0
    r1 = _strip_integral(lambda y, x: odd(x, y) * g1(x, y), eps,
                         lambda y: y + eps, lambda y: -eps, R, tol)
    r2 = _strip_integral(lambda x, y: odd(x, y) * g2(x, y), eps,
                         lambda x: x + eps, lambda x: -eps, R, tol)
    r3 = _strip_integral(lambda eta, x: odd(x, x + eta) * g3(x, x + eta), eps,
                         lambda eta: eps, lambda eta: -eps - eta, R, tol)
    return r1, r2, r3


def boundary_combination(phi, eps):
    """(4/eps^2) times the six-point corner combination; it is O(eps)."""
    e = eps
    return 4.0 / e ** 2 * (phi(e, e) - phi(-e, -e) - phi(e, 0.0) + phi(-e, 0.0)
                           - phi(0.0, e) + phi(0.0, -e))


@dataclass
class FinitePartResult:
    value: float
    epsilons: tuple
    extrapolation_error: float
    intermediate: float
    intermediate_error: float
    point_term: float
    boundary_limit: float
    regions: list = field(default_factory=list)

    def to_dict(self):
        return {"value": self.value, "epsilons": list(self.epsilons),
                "extrapolation_error": self.extrapolation_error,
                "intermediate": self.intermediate,
                "intermediate_error": self.intermediate_error,
                "point_term": self.point_term, "boundary_limit": self.boundary_limit}


def finite_part_double(phi, epsilons=EPSILONS, tol=QUAD_TOL):
    """Finite part of the pairing of phi with g over the plane.

    The region sum is extrapolated to eps = 0 (that limit is the intermediate
    value); the point term 4(phi_xxy + phi_yyx)(0, 0) is added to it.  The
    corner combination is extrapolated separately and reported; it tends
    to zero.
    """
    if not isinstance(phi, TestFunction):
        raise TypeError("phi must be a TestFunction")
    regions = [region_integrals(phi, e, tol) for e in epsilons]
    sums = [sum(r) for r in regions]
    inter, ierr = richardson(sums, epsilons)
    bound, _ = richardson([boundary_combination(phi, e) for e in epsilons], epsilons)
    point = 4.0 * phi.third_derivative_sum()
    return FinitePartResult(float(inter + point), tuple(epsilons), float(ierr), float(inter),
                            float(ierr), point, float(bound),
                            [[float(v) for v in r] for r in regions])


def distribution_identity_check(phi, epsilons=EPSILONS, tol=QUAD_TOL):
    """Compare the finite part with pi^2 (phi_xxy + phi_yyx)(0, 0)."""
    res = finite_part_double(phi, epsilons, tol)
    rhs = math.pi ** 2 * phi.third_derivative_sum()
    lhs = res.value
    scale = abs(rhs)
    rel = abs(lhs - rhs) / scale if scale > 0 else abs(lhs - rhs)
    return {"lhs": float(lhs), "rhs": float(rhs), "rel_err": float(rel),
            "epsilons": list(res.epsilons), "intermediate": float(res.intermediate),
            "intermediate_target": (math.pi ** 2 - 4.0) * phi.third_derivative_sum(),
            "extrapolation_error": float(res.extrapolation_error)}
