"""Closed-form solution families with analytic derivatives.

Each family is a :class:`SolutionSpec`: a family tag plus named parameters.
Values and derivatives up to fifth order come from Taylor jets built on the
family's own closed form, never from finite differences.

Family tags and parameters (defaults in brackets):

``linear``          a + b u                        a[0] b[1]
``exponential``     a + b exp(c u)                 a[0] b[1] c[1]
``weierstrass``     a + b P(c z + d; g2, g3)       a[0] b[1] c[1] d[0] g2 g3
``h1`` ``h2`` ``h3`` b {dn, cn, cn dn}(u)/sn(u)^2,
                    u = sqrt(b) z, b = e1 - e3     k scale[1]  (or g2 g3)
``hyperbolic``      beta cosh(alpha z)/sinh(alpha z)^2   beta[1] alpha[1]
``trigonometric``   3 b1 / sin(sqrt(3 b1/b0) z)^2  b0[1] b1[1]
``inverse_square``  b0 / z^2                       b0[1]
``sinh_shift``      1 / sinh(z - sign i pi/3)^2    sign[1]
"""

import json
import math
from dataclasses import dataclass, field
from functools import cached_property
from fractions import Fraction

import numpy as np

from . import jets
from .special_functions import (
    EllipticParams,
    PoleError,
    jacobi_sn_cn_dn,
    sigma_family,
    theta,
    theta1_prime0,
    weierstrass_p,
)

FAMILIES = {
    "linear": {"a": 0.0, "b": 1.0},
    "exponential": {"a": 0.0, "b": 1.0, "c": 1.0},
    "weierstrass": {"a": 0.0, "b": 1.0, "c": 1.0, "d": 0.0, "g2": None, "g3": None},
    "h1": {"k": None, "scale": 1.0, "g2": None, "g3": None},
    "h2": {"k": None, "scale": 1.0, "g2": None, "g3": None},
    "h3": {"k": None, "scale": 1.0, "g2": None, "g3": None},
    "hyperbolic": {"beta": 1.0, "alpha": 1.0},
    "trigonometric": {"b0": 1.0, "b1": 1.0},
    "inverse_square": {"b0": 1.0},
    "sinh_shift": {"sign": 1.0},
}

H_FAMILIES = ("h1", "h2", "h3")
POLE_GUARD = 1e-9


class UnsupportedFamily(ValueError):
    pass


@dataclass(frozen=True)
class SolutionSpec:
    family: str
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise UnsupportedFamily(f"unknown family {self.family!r}")
        allowed = FAMILIES[self.family]
        extra = set(self.params) - set(allowed)
        if extra:
            raise ValueError(f"unknown parameters {sorted(extra)} for {self.family}")
        if self.family == "weierstrass" and (
                self.params.get("g2") is None or self.params.get("g3") is None):
            raise ValueError("weierstrass family needs g2 and g3")
        if self.family in H_FAMILIES:
            has_k = self.params.get("k") is not None
            has_g = self.params.get("g2") is not None and self.params.get("g3") is not None
            if has_k == has_g:
                raise ValueError(f"{self.family} needs either k or (g2, g3)")

    def get(self, name):
        value = self.params.get(name)
        return FAMILIES[self.family][name] if value is None else value

    def to_json(self):
        return json.dumps({"family": self.family, "params": self.params}, sort_keys=True)

    @classmethod
    def from_json(cls, text):
        data = json.loads(text) if isinstance(text, str) else dict(text)
        return cls(data["family"], dict(data.get("params", {})))

    @cached_property
    def lattice(self):
        """EllipticParams behind the weierstrass and h families."""
        if self.family == "weierstrass":
            return EllipticParams.from_invariants(float(self.get("g2")), float(self.get("g3")))
        if self.family in H_FAMILIES:
            if self.params.get("k") is not None:
                return EllipticParams.from_modulus(float(self.get("k")), float(self.get("scale")))
            return EllipticParams.from_invariants(float(self.get("g2")), float(self.get("g3")))
        raise UnsupportedFamily(f"{self.family} has no lattice")

    @property
    def is_even(self):
        if self.family in ("linear", "exponential", "sinh_shift"):
            return False
        if self.family == "weierstrass":
            return float(self.get("d")) == 0.0
        return True

    @property
    def real_period(self):
        """Smallest positive real period, or None."""
        if self.family == "weierstrass":
            w = self.lattice.omega
            return 2.0 * w / abs(float(self.get("c"))) if math.isfinite(w) else None
        if self.family in H_FAMILIES:
            w = self.lattice.omega
            if not math.isfinite(w):
                return None
            # h2 and h3 change sign over one period of the lattice: 4 omega
            return 2.0 * w if self.family == "h1" else 4.0 * w
        if self.family == "trigonometric":
            lam2 = 3.0 * float(self.get("b1")) / float(self.get("b0"))
            return math.pi / math.sqrt(lam2) if lam2 > 0 else None
        return None

    @property
    def pole_period(self):
        """Spacing of the real double poles (None when only z = 0)."""
        if self.family in H_FAMILIES or self.family == "weierstrass":
            w = self.lattice.omega
            if not math.isfinite(w):
                return None
            c = abs(float(self.get("c"))) if self.family == "weierstrass" else 1.0
            return 2.0 * w / c
        return self.real_period


def _guard(condition, z, family, spacing=None):
    """Raise PoleError at the pole nearest the first offending point."""
    if np.any(condition):
        loc = complex(np.ravel(np.asarray(z))[np.flatnonzero(np.ravel(condition))[0]])
        pole = 0.0 if spacing is None or not math.isfinite(spacing) else spacing * round(loc.real / spacing)
        raise PoleError(f"{family}: evaluation point within {POLE_GUARD} of a pole",
                        complex(pole))


def _h_jet(spec, z, order):
    lat = spec.lattice
    b = lat.e1 - lat.e3
    rb = math.sqrt(b)
    u = rb * np.asarray(z, dtype=float)
    sn, cn, dn = jacobi_sn_cn_dn(u, lat.k)
    sn, cn, dn = np.asarray(sn), np.asarray(cn), np.asarray(dn)
    _guard(np.abs(sn) < POLE_GUARD * rb, z, spec.family, 2.0 * lat.omega)
    s, c, d = jets.jacobi(sn, cn, dn, lat.k, order)
    num = {"h1": d, "h2": c, "h3": jets.mul(c, d)}[spec.family]
    rs = jets.recip(s)
    t = b * jets.mul(num, jets.mul(rs, rs))
    return jets.scale_argument(t, rb)


def _jet(spec, z, order):
    fam = spec.family
    z = np.asarray(z)
    cplx = np.iscomplexobj(z)
    dtype = complex if cplx else float
    if fam == "linear":
        a, b = float(spec.get("a")), float(spec.get("b"))
        t = np.zeros((order + 1,) + z.shape, dtype=dtype)
        t[0] = a + b * z
        if order >= 1:
            t[1] = b
        return t
    if fam == "exponential":
        a, b, c = (float(spec.get(n)) for n in "abc")
        e = b * np.exp(c * z)
        t = np.array([e * c ** m / math.factorial(m) for m in range(order + 1)])
        t[0] = t[0] + a
        return t
    if fam == "weierstrass":
        a, b, c, d = (float(spec.get(n)) for n in "abcd")
        lat = spec.lattice
        w = c * z + d
        p, dp = weierstrass_p(w, lat)
        t = jets.weierstrass(np.asarray(p), np.asarray(dp), lat.g2, order)
        t = b * jets.scale_argument(t, c)
        t[0] = t[0] + a
        return t
    if fam in H_FAMILIES:
        if cplx:
            raise UnsupportedFamily("h families are evaluated on the real axis only")
        return _h_jet(spec, z, order)
    if fam == "hyperbolic":
        beta, alpha = float(spec.get("beta")), float(spec.get("alpha"))
        w = alpha * z
        ch, sh = jets.cosh_sinh(w, order)
        _guard(np.abs(sh[0]) < POLE_GUARD * abs(alpha), z, fam)
        r = jets.recip(sh)
        return beta * jets.scale_argument(jets.mul(ch, jets.mul(r, r)), alpha)
    if fam == "trigonometric":
        b0, b1 = float(spec.get("b0")), float(spec.get("b1"))
        lam2 = 3.0 * b1 / b0
        if lam2 > 0:
            lam = math.sqrt(lam2)
            s = jets.sin_jet(lam * z, order)
            coef = 3.0 * b1
        else:
            lam = math.sqrt(-lam2)
            _, s = jets.cosh_sinh(lam * z, order)
            coef = -3.0 * b1
        _guard(np.abs(s[0]) < POLE_GUARD * lam, z, fam,
               math.pi / lam if lam2 > 0 else None)
        r = jets.recip(s)
        return coef * jets.scale_argument(jets.mul(r, r), lam)
    if fam == "inverse_square":
        b0 = float(spec.get("b0"))
        _guard(np.abs(z) < POLE_GUARD, z, fam)
        return np.array([b0 * (-1) ** m * (m + 1) * z ** (-2.0 - m) for m in range(order + 1)])
    if fam == "sinh_shift":
        sign = float(spec.get("sign"))
        w = z - sign * 1j * math.pi / 3.0
        _, sh = jets.cosh_sinh(w, order)
        r = jets.recip(sh)
        return jets.mul(r, r)
    raise UnsupportedFamily(fam)


def _first_order(spec, z):
    """Closed-form (f, f') for the families used in hot loops, else None."""
    fam = spec.family
    if np.iscomplexobj(z):
        return None
    if fam in H_FAMILIES:
        lat = spec.lattice
        b = lat.e1 - lat.e3
        rb = math.sqrt(b)
        sn, cn, dn = (np.asarray(t) for t in jacobi_sn_cn_dn(rb * z, lat.k))
        _guard(np.abs(sn) < POLE_GUARD * rb, z, fam, 2.0 * lat.omega)
        m2 = lat.k * lat.k
        s2 = sn * sn
        if fam == "h1":
            f = dn / s2
            fp = -cn * (m2 * s2 + 2.0 * dn * dn) / (s2 * sn)
        elif fam == "h2":
            f = cn / s2
            fp = -dn * (s2 + 2.0 * cn * cn) / (s2 * sn)
        else:
            f = cn * dn / s2
            fp = -(dn * dn * s2 + m2 * s2 * cn * cn + 2.0 * cn * cn * dn * dn) / (s2 * sn)
        return np.array([b * f, b * rb * fp])
    if fam == "hyperbolic":
        beta, alpha = float(spec.get("beta")), float(spec.get("alpha"))
        with np.errstate(over="ignore"):
            sh = np.sinh(alpha * z)
        _guard(np.abs(sh) < POLE_GUARD * abs(alpha), z, fam)
        # csch and coth stay finite where sinh overflows
        csch, coth = 1.0 / sh, 1.0 / np.tanh(alpha * z)
        return np.array([beta * coth * csch, -beta * alpha * csch * (csch ** 2 + coth ** 2)])
    if fam == "weierstrass":
        a, b, c, d = (float(spec.get(n)) for n in "abcd")
        p, dp = weierstrass_p(c * z + d, spec.lattice)
        return np.array([a + b * np.asarray(p), b * c * np.asarray(dp)])
    return None


def derivatives(spec, z, order=1):
    """Array of f, f', ..., f^(order) at z (shape (order+1,) + shape(z))."""
    if not 0 <= order <= 5:
        raise ValueError("order must be in 0..5")
    if hasattr(z, "re") and hasattr(z, "im"):
        z = complex(z)
    if order <= 1:
        fast = _first_order(spec, np.asarray(z))
        if fast is not None:
            return fast[: order + 1]
    return jets.to_derivatives(_jet(spec, z, order))


def evaluate(spec, z):
    out = derivatives(spec, z, 0)[0]
    return out.item() if np.ndim(out) == 0 else out


# --- exact Laurent data ------------------------------------------------------

@dataclass(frozen=True)
class LaurentCoeffs:
    """f(z) = sum_j coeffs[j] c_{2j-2} z^(2j-2), c_{-2} = 1, c_m = 1/m!."""

    coeffs: tuple
    start_power: int = -2

    def power_coefficient(self, j):
        """Plain coefficient of z^(2j-2)."""
        if j == 0:
            return self.coeffs[0]
        return self.coeffs[j] / math.factorial(2 * j - 2)


def _exact(x):
    return x if isinstance(x, Fraction) else Fraction(x)


def weierstrass_laurent(g2, g3, J):
    """Coefficients p_m of z^(2m) in P(z) - 1/z^2, m = 1..J (exact)."""
    g2, g3 = _exact(g2), _exact(g3)
    p = [Fraction(0)] * (J + 1)
    if J >= 1:
        p[1] = g2 / 20
    if J >= 2:
        p[2] = g3 / 28
    for m in range(3, J + 1):
        acc = sum(p[i] * p[m - 1 - i] for i in range(1, m - 1))
        p[m] = Fraction(3, (2 * m + 3) * (m - 2)) * acc
    return p


def _series_mul(a, b, n):
    return [sum(a[i] * b[m - i] for i in range(m + 1)) for m in range(n)]


def _series_recip(a, n):
    out = [Fraction(0)] * n
    out[0] = 1 / a[0]
    for m in range(1, n):
        out[m] = -sum(a[i] * out[m - i] for i in range(1, m + 1)) * out[0]
    return out


def _series_sqrt(a, n):
    """Square root of a series with a[0] = 1."""
    out = [Fraction(0)] * n
    out[0] = Fraction(1)
    for m in range(1, n):
        out[m] = (a[m] - sum(out[i] * out[m - i] for i in range(1, m))) / 2
    return out


def _even_series(J, kind):
    """Coefficients in y^(2m) of sin(y)/y, sinh(y)/y or cosh(y)."""
    out = []
    for m in range(J + 1):
        if kind == "sin":
            out.append(Fraction((-1) ** m, math.factorial(2 * m + 1)))
        elif kind == "sinh":
            out.append(Fraction(1, math.factorial(2 * m + 1)))
        else:
            out.append(Fraction(1, math.factorial(2 * m)))
    return out


def _pack(plain):
    """Plain coefficients of z^(2j-2) into the c_{2j-2} convention."""
    return LaurentCoeffs(tuple(
        plain[j] if j == 0 else plain[j] * math.factorial(2 * j - 2)
        for j in range(len(plain))))


def laurent_coefficients(spec, J):
    """Exact a_0..a_J of a family with a double pole at the origin."""
    if J > 20:
        raise ValueError("J must not exceed 20")
    fam = spec.family
    n = J + 1
    if fam == "linear" and float(spec.get("b")) == 0.0:
        # a constant sits entirely in the z^0 slot
        return LaurentCoeffs(tuple([Fraction(0), _exact(spec.get("a"))] + [Fraction(0)] * (J - 1))[:n])
    if fam == "inverse_square":
        return LaurentCoeffs(tuple([_exact(spec.get("b0"))] + [Fraction(0)] * J))
    if fam == "weierstrass":
        if float(spec.get("d")) != 0.0:
            raise UnsupportedFamily("shifted weierstrass has no pole at the origin")
        a, b, c = (_exact(spec.get(x)) for x in "abc")
        p = weierstrass_laurent(spec.get("g2"), spec.get("g3"), J)
        plain = [b / c ** 2, a] + [b * c ** (2 * m) * p[m] for m in range(1, J)]
        return _pack(plain[:n])
    if fam == "trigonometric":
        b0, b1 = _exact(spec.get("b0")), _exact(spec.get("b1"))
        lam2 = 3 * b1 / b0
        s = _series_recip(_even_series(J, "sin"), n)
        s2 = _series_mul(s, s, n)
        return _pack([3 * b1 * s2[m] * lam2 ** (m - 1) for m in range(n)])
    if fam == "hyperbolic":
        beta, alpha = _exact(spec.get("beta")), _exact(spec.get("alpha"))
        a2 = alpha ** 2
        r = _series_recip(_even_series(J, "sinh"), n)
        h = _series_mul(_even_series(J, "cosh"), _series_mul(r, r, n), n)
        return _pack([beta * h[m] * a2 ** (m - 1) for m in range(n)])
    if fam in H_FAMILIES:
        if spec.params.get("k") is not None:
            m2 = _exact(spec.get("k")) ** 2
            b = _exact(spec.get("scale"))
            e = {1: (2 - m2) * b / 3, 2: (2 * m2 - 1) * b / 3, 3: -(1 + m2) * b / 3}
            g2 = 2 * (e[1] ** 2 + e[2] ** 2 + e[3] ** 2)
            g3 = 4 * e[1] * e[2] * e[3]
        else:
            lat = spec.lattice
            g2, g3 = _exact(spec.get("g2")), _exact(spec.get("g3"))
            e = {1: _exact(lat.e1), 2: _exact(lat.e2), 3: _exact(lat.e3)}
        i, j = {"h1": (2, 3), "h2": (1, 3), "h3": (1, 2)}[fam]
        # z^2 P(z) as a series in z^2, then z^4 (P - ei)(P - ej)
        p = weierstrass_laurent(g2, g3, J)
        zp = [Fraction(1), Fraction(0)] + [p[m] for m in range(1, J)]
        zp = zp[:n]
        fi = [zp[0], zp[1] - e[i]] + zp[2:]
        fj = [zp[0], zp[1] - e[j]] + zp[2:]
        fi, fj = fi[:n], fj[:n]
        root = _series_sqrt(_series_mul(fi, fj, n), n)
        return _pack(root)
    raise UnsupportedFamily(f"{fam} has no double pole at the origin")


# --- representations of the odd-n solutions -------------------------------------

_H_PAIRS = {1: (2, 3), 2: (1, 3), 3: (1, 2)}
_H_THETAS = {1: (3, 4), 2: (2, 4), 3: (2, 3)}


def h_representations(h_index, z, params):
    """The four closed forms of h_i at real z as a dict of arrays.

    ``product``: sqrt((P - ei)(P - ej)) carrying the Jacobi sign;
    ``sigma``: sigma_i sigma_j / sigma^2; ``theta``: theta quotient with the
    theta_1'(0)^2 normalisation; ``jacobi``: b {dn, cn, cn dn}/sn^2.
    """
    z = np.asarray(z, dtype=float)
    i, j = _H_PAIRS[h_index]
    e = {1: params.e1, 2: params.e2, 3: params.e3}
    b = params.e1 - params.e3
    sn, cn, dn = (np.asarray(x) for x in jacobi_sn_cn_dn(math.sqrt(b) * z, params.k))
    num = {1: dn, 2: cn, 3: cn * dn}[h_index]
    jac = b * num / sn ** 2
    p, _ = weierstrass_p(z, params)
    prod = np.sqrt(np.abs((p - e[i]) * (p - e[j]))) * np.sign(jac)
    s0 = sigma_family(z, 0, params)
    sig = sigma_family(z, i, params) * sigma_family(z, j, params) / s0 ** 2
    q = params.q
    w = params.omega
    v = math.pi * z / (2.0 * w)
    ta, tb = _H_THETAS[h_index]
    scale = (math.pi / (2.0 * w)) ** 2 * theta1_prime0(q) ** 2
    th = (theta(ta, v, q) * theta(tb, v, q) / theta(1, v, q) ** 2
          * scale / (theta(ta, 0.0, q) * theta(tb, 0.0, q)))
    return {"product": prod, "sigma": np.asarray(sig), "theta": th, "jacobi": jac}


def representation_chain_check(h_index, z, params):
    """Largest pairwise difference among the four forms of h_i at z."""
    forms = list(h_representations(h_index, z, params).values())
    worst = 0.0
    for a in range(4):
        for c in range(a + 1, 4):
            worst = max(worst, float(np.max(np.abs(forms[a] - forms[c]))))
    return worst


def quadratic_in_p_form(b0, b1, b2, z):
    """sqrt(b0^2 W^2 + 2 b0 b1 W - b1^2 + 5 b0 b2/3) with W a Weierstrass function."""
    g2 = -20.0 * (b0 * b2 - 3.0 * b1 ** 2) / (3.0 * b0 ** 2)
    g3 = 8.0 * b1 * (5.0 * b0 * b2 - 3.0 * b1 ** 2) / (3.0 * b0 ** 3)
    W, _ = weierstrass_p(z, EllipticParams.from_invariants(g2, g3))
    rad = b0 ** 2 * W ** 2 + 2.0 * b0 * b1 * W - b1 ** 2 + 5.0 * b0 * b2 / 3.0
    rad = np.asarray(rad)
    if np.iscomplexobj(rad):
        # complex z on a line where W is real (e.g. Re z = omega) still has a real radicand
        if np.any(np.abs(rad.imag) > 1e-10 * np.maximum(1.0, np.abs(rad))):
            raise ValueError("radicand is not real at z")
        rad = rad.real
    if np.any(rad < 0):
        raise ValueError("negative radicand: z lies outside the real window")
    out = np.sqrt(rad)
    return out.item() if out.ndim == 0 else out


def quadratic_lattice(b0, b1, b2):
    """Lattice of W and the two cubic roots shared with the quadratic."""
    g2 = -20.0 * (b0 * b2 - 3.0 * b1 ** 2) / (3.0 * b0 ** 2)
    g3 = 8.0 * b1 * (5.0 * b0 * b2 - 3.0 * b1 ** 2) / (3.0 * b0 ** 3)
    lat = EllipticParams.from_invariants(g2, g3)
    disc = b1 ** 2 * b0 ** 2 - b0 ** 2 * (5.0 * b0 * b2 / 3.0 - b1 ** 2)
    r = math.sqrt(max(disc, 0.0)) / b0 ** 2
    return lat, sorted((-b1 / b0 + r, -b1 / b0 - r), reverse=True)


def real_window(spec, count=2001):
    """Sub-intervals of (0, period) on which the family is real and finite.

    Returned as a list of (start, stop) pairs sampled on a uniform grid.
    """
    per = spec.real_period or 10.0
    zs = np.linspace(0.0, per, count)[1:-1]
    ok = []
    for z in zs:
        try:
            v = complex(evaluate(spec, z))
            ok.append(abs(v.imag) < 1e-12 and math.isfinite(v.real))
        except PoleError:
            ok.append(False)
    out, start = [], None
    for i, flag in enumerate(ok):
        if flag and start is None:
            start = zs[i]
        if not flag and start is not None:
            out.append((start, zs[i - 1]))
            start = None
    if start is not None:
        out.append((start, zs[-1]))
    return out
