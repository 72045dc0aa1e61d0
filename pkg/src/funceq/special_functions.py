"""Weierstrass, Jacobi and theta functions on real lattices.

All routines work in binary64.  The Weierstrass function is evaluated from
theta quotients in the nome ``q``; Jacobi functions come from the descending
Landen (AGM) scheme in :func:`scipy.special.ellipj`.

Theta functions use Jacobi's convention, ``theta(1, v, q) = 2 sum (-1)^n
q^((n+1/2)^2) sin((2n+1)v)``, so that the quasi-period in ``v`` is ``pi``.
Lattice quantities use the real half-period ``omega`` and the imaginary
half-period ``i * omega_prime``.
"""

import math
from dataclasses import dataclass

import numpy as np
from scipy import special

__all__ = [
    "ComplexError",
    "PoleError",
    "DegenerateLattice",
    "EllipticParams",
    "ComplexPoint",
    "weierstrass_roots",
    "weierstrass_p",
    "weierstrass_sigma",
    "sigma_family",
    "jacobi_sn_cn_dn",
    "theta",
    "theta1_prime0",
    "half_periods",
    "nome_from_modulus",
    "complete_k",
    "pole_distance",
]

POLE_GUARD = 1e-9


class ComplexError(ValueError):
    """Invariants whose cubic has complex roots (negative discriminant)."""


class PoleError(ValueError):
    """Evaluation point too close to a pole."""

    def __init__(self, message, location=None):
        super().__init__(message)
        self.location = location


class DegenerateLattice(ValueError):
    """Operation undefined because one of the periods is infinite."""


@dataclass(frozen=True)
class ComplexPoint:
    re: float
    im: float = 0.0

    def __post_init__(self):
        if not (math.isfinite(self.re) and math.isfinite(self.im)):
            raise ValueError("ComplexPoint components must be finite")

    def __complex__(self):
        return complex(self.re, self.im)


def _as_complex(z):
    if isinstance(z, ComplexPoint):
        return complex(z)
    return z


def weierstrass_roots(g2, g3):
    """Real roots e1 >= e2 >= e3 of 4e^3 - g2 e - g3.

    Raises ComplexError when the discriminant g2^3 - 27 g3^2 is negative.
    """
    g2 = float(g2)
    g3 = float(g3)
    disc = g2 ** 3 - 27.0 * g3 ** 2
    scale = max(abs(g2) ** 3, 27.0 * g3 ** 2, 1e-300)
    if disc < -1e-13 * scale:
        raise ComplexError(f"discriminant {disc} < 0: complex roots for g2={g2}, g3={g3}")
    if g2 == 0.0 and g3 == 0.0:
        return 0.0, 0.0, 0.0
    if abs(disc) <= 1e-13 * scale:
        # double root; exact closed form avoids arccos at the branch point
        ed = -1.5 * g3 / g2
        es = -2.0 * ed
        return (es, ed, ed) if es > ed else (ed, ed, es)
    r = math.sqrt(g2 / 3.0)
    c = max(-1.0, min(1.0, 3.0 * math.sqrt(3.0) * g3 / g2 ** 1.5))
    phi = math.acos(c) / 3.0
    roots = [r * math.cos(phi - 2.0 * math.pi * m / 3.0) for m in range(3)]
    polished = []
    for e in roots:
        for _ in range(2):
            d = 12.0 * e * e - g2
            if d == 0.0:
                break
            e -= (4.0 * e ** 3 - g2 * e - g3) / d
        polished.append(e)
    e1, e2, e3 = sorted(polished, reverse=True)
    # enforce the zero sum exactly on the middle root
    e2 = -(e1 + e3)
    return e1, e2, e3


def complete_k(k):
    """Complete elliptic integrals (K(k), K'(k)); infinite at k=1 or k=0."""
    m = float(k) ** 2
    return float(special.ellipk(m)), float(special.ellipkm1(m))


def nome_from_modulus(k):
    """Nome q = exp(-pi K'/K) for 0 <= k <= 1 (q=0 at k=0, q=1 at k=1)."""
    k = abs(float(k))
    if k > 1.0:
        raise ValueError("modulus must lie in [0, 1]")
    if k == 0.0:
        return 0.0
    if k == 1.0:
        return 1.0
    K, Kp = complete_k(k)
    return math.exp(-math.pi * Kp / K)


@dataclass(frozen=True)
class EllipticParams:
    """Real lattice data for the Weierstrass function.

    ``degenerate`` is None for a genuine lattice; otherwise it names the limit:
    "trigonometric" (e2 = e3, omega_prime infinite), "hyperbolic"
    (e1 = e2, omega infinite) or "rational" (g2 = g3 = 0).
    """

    g2: float
    g3: float
    e1: float
    e2: float
    e3: float
    omega: float
    omega_prime: float
    k: float
    q: float
    degenerate: str | None = None

    @classmethod
    def from_invariants(cls, g2, g3):
        e1, e2, e3 = weierstrass_roots(g2, g3)
        b = e1 - e3
        if b == 0.0:
            return cls(float(g2), float(g3), 0.0, 0.0, 0.0,
                       math.inf, math.inf, 0.0, 0.0, "rational")
        k = math.sqrt(max(0.0, min(1.0, (e2 - e3) / b)))
        return cls._build(float(g2), float(g3), e1, e2, e3, k)

    @classmethod
    def from_modulus(cls, k, scale=1.0):
        """Lattice with k^2 = (e2-e3)/(e1-e3) and e1 - e3 = scale."""
        k = abs(float(k))
        if k > 1.0:
            raise ValueError("modulus must lie in [0, 1]; use the real transformation first")
        b = float(scale)
        if b <= 0.0:
            raise ValueError("scale e1 - e3 must be positive")
        m = k * k
        e3 = -(1.0 + m) * b / 3.0
        e1 = (2.0 - m) * b / 3.0
        e2 = (2.0 * m - 1.0) * b / 3.0
        g2 = 2.0 * (e1 * e1 + e2 * e2 + e3 * e3)
        g3 = 4.0 * e1 * e2 * e3
        return cls._build(g2, g3, e1, e2, e3, k)

    @classmethod
    def _build(cls, g2, g3, e1, e2, e3, k):
        b = e1 - e3
        root = math.sqrt(b)
        degenerate = None
        if k == 0.0:
            omega, omega_prime, q = math.pi / (2.0 * root), math.inf, 0.0
            degenerate = "trigonometric"
        elif k == 1.0:
            omega, omega_prime, q = math.inf, math.pi / (2.0 * root), 1.0
            degenerate = "hyperbolic"
        else:
            K, Kp = complete_k(k)
            omega, omega_prime = K / root, Kp / root
            q = math.exp(-math.pi * Kp / K)
        return cls(g2, g3, e1, e2, e3, omega, omega_prime, k, q, degenerate)

    def scaled(self, c):
        """Invariants (c^4 g2, c^6 g3), the lattice shrunk by 1/c."""
        return EllipticParams.from_invariants(c ** 4 * self.g2, c ** 6 * self.g3)


def half_periods(params):
    """(omega, omega_prime); an infinite entry marks a degenerate lattice."""
    return params.omega, params.omega_prime


def _n_terms(q):
    if q <= 0.0:
        return 1
    return int(math.ceil(math.sqrt(40.0 / -math.log(q)))) + 2


def _theta_series(j, v, q, deriv=0, reduced=False):
    """Theta function (or its derivative) by direct series summation.

    With ``reduced`` the factor q^(1/4) of theta_1, theta_2 is dropped so the
    q -> 0 limit stays finite.
    """
    v = np.asarray(v)
    out = np.zeros(v.shape, dtype=complex if np.iscomplexobj(v) else float)
    N = _n_terms(q)
    shift = deriv * math.pi / 2.0
    if j in (1, 2):
        for n in range(N):
            m = 2 * n + 1
            w = q ** (n * n + n) if reduced else q ** ((n + 0.5) ** 2)
            if w == 0.0 and n > 0:
                break
            sign = (-1.0) ** n if j == 1 else 1.0
            trig = np.sin(m * v + shift) if j == 1 else np.cos(m * v + shift)
            out = out + 2.0 * sign * w * m ** deriv * trig
        return out
    if deriv == 0:
        out = out + 1.0
    for n in range(1, N + 1):
        w = q ** (n * n)
        if w == 0.0:
            break
        sign = (-1.0) ** n if j == 4 else 1.0
        out = out + 2.0 * sign * w * (2 * n) ** deriv * np.cos(2 * n * v + shift)
    return out


def theta(j, v, q, deriv=0):
    """Jacobi theta function theta_j(v, q), j = 1..4, or its v-derivative."""
    if j not in (1, 2, 3, 4):
        raise ValueError("theta index must be 1..4")
    if not 0.0 <= q < 1.0:
        raise ValueError(f"nome q={q} outside [0,1): divergent series")
    res = _theta_series(j, v, q, deriv)
    return res.item() if np.ndim(res) == 0 else res


def theta1_prime0(q):
    """First derivative of theta_1 at the origin."""
    return theta(1, 0.0, q, deriv=1)


def pole_distance(z, params):
    """Distance from z to the nearest lattice point, and that point."""
    z = complex(_as_complex(z))
    lat = 0j
    if math.isfinite(params.omega):
        p = 2.0 * params.omega
        lat += p * round(z.real / p)
    if math.isfinite(params.omega_prime):
        p = 2.0 * params.omega_prime
        lat += 1j * p * round(z.imag / p)
    return abs(z - lat), lat


def _reduce(z, params):
    """Shift z into the period cell centred on the origin."""
    z = np.asarray(z, dtype=complex)
    if math.isfinite(params.omega):
        p = 2.0 * params.omega
        z = z - p * np.round(z.real / p)
    if math.isfinite(params.omega_prime):
        p = 2.0 * params.omega_prime
        z = z - 1j * p * np.round(z.imag / p)
    return z


def _check_poles(z, zr):
    bad = np.abs(zr) < POLE_GUARD
    if np.any(bad):
        idx = np.flatnonzero(np.ravel(bad))[0]
        # report the lattice point itself: z minus its reduced offset
        where = complex(np.ravel(np.asarray(z))[idx] - np.ravel(zr)[idx])
        raise PoleError(f"evaluation within {POLE_GUARD} of a lattice point", where)


def weierstrass_p(z, params):
    """Return (p, p') for the Weierstrass function at z (scalar or array).

    Real arrays stay real when the lattice is real; complex input gives
    complex output.
    """
    z = _as_complex(z)
    real_in = not np.iscomplexobj(z)
    zr = _reduce(z, params)
    _check_poles(z, zr)
    kind = params.degenerate
    if kind == "rational":
        p, dp = 1.0 / zr ** 2, -2.0 / zr ** 3
    elif kind == "hyperbolic":
        b = params.e1 - params.e3
        s = math.sqrt(b)
        sh = np.sinh(s * zr)
        p = params.e1 + b / sh ** 2
        dp = -2.0 * b * s * np.cosh(s * zr) / sh ** 3
    else:
        q = params.q
        scale = math.pi / (2.0 * params.omega)
        v = scale * zr
        t1 = _theta_series(1, v, q, reduced=True)
        t1d = _theta_series(1, v, q, 1, reduced=True)
        t2 = _theta_series(2, v, q, reduced=True)
        t2d = _theta_series(2, v, q, 1, reduced=True)
        c = _theta_series(3, 0.0, q) * _theta_series(4, 0.0, q)
        A = (scale * c) ** 2
        R = t2 / t1
        Rv = (t2d * t1 - t2 * t1d) / t1 ** 2
        p = params.e1 + A * R * R
        dp = 2.0 * A * R * Rv * scale
    if real_in:
        p, dp = np.real(p), np.real(dp)
    if np.ndim(p) == 0:
        return p.item(), dp.item()
    return p, dp


def _eta1(params):
    """Quasi-period zeta(omega) from theta derivatives."""
    q = params.q
    if params.degenerate == "trigonometric":
        return math.pi ** 2 / (12.0 * params.omega)
    r = _theta_series(1, 0.0, q, 3, reduced=True) / _theta_series(1, 0.0, q, 1, reduced=True)
    return -math.pi ** 2 * float(r) / (12.0 * params.omega)


def weierstrass_sigma(z, params):
    """Weierstrass sigma function for a non-degenerate or trigonometric lattice."""
    if params.degenerate in ("hyperbolic", "rational"):
        raise DegenerateLattice("sigma needs a finite real period")
    z = np.asarray(_as_complex(z))
    w = params.omega
    v = math.pi * z / (2.0 * w)
    q = params.q
    ratio = _theta_series(1, v, q, reduced=True) / _theta_series(1, 0.0, q, 1, reduced=True)
    out = (2.0 * w / math.pi) * np.exp(_eta1(params) * z * z / (2.0 * w)) * ratio
    return out.item() if out.ndim == 0 else out


def _half_period_data(alpha, params):
    """(omega_alpha, zeta(omega_alpha)) with omega_2 = -omega_1 - omega_3."""
    if params.degenerate is not None and alpha != 1:
        raise DegenerateLattice("sigma_2 and sigma_3 need both periods finite")
    w1 = params.omega
    e1 = _eta1(params)
    if alpha == 1:
        return complex(w1), complex(e1)
    w3 = 1j * params.omega_prime
    e3 = (e1 * w3 - 0.5j * math.pi) / w1
    if alpha == 3:
        return w3, e3
    return -w1 - w3, -e1 - e3


def sigma_family(z, alpha, params):
    """Co-sigma functions sigma(z + w_a)/sigma(w_a) exp(-z zeta(w_a)).

    ``alpha`` = 0 returns sigma itself.  For real z the values are real.
    """
    if alpha == 0:
        out = weierstrass_sigma(z, params)
    elif alpha in (1, 2, 3):
        wa, ea = _half_period_data(alpha, params)
        z = np.asarray(_as_complex(z))
        num = weierstrass_sigma(z + wa, params)
        den = weierstrass_sigma(wa, params)
        out = num / den * np.exp(-z * ea)
    else:
        raise ValueError("alpha must be 0..3")
    if not np.iscomplexobj(_as_complex(z)) or np.all(np.imag(np.asarray(z)) == 0):
        out = np.real(out)
    out = np.asarray(out)
    return out.item() if out.ndim == 0 else out


def jacobi_sn_cn_dn(u, k):
    """Jacobi sn, cn, dn for real u and any real modulus k.

    |k| > 1 is mapped into [0, 1] by the real transformation
    sn(u,k) = sn(ku,1/k)/k, cn(u,k) = dn(ku,1/k), dn(u,k) = cn(ku,1/k).
    """
    k = abs(float(k))
    u = np.asarray(u, dtype=float)
    if k > 1.0:
        s, c, d = jacobi_sn_cn_dn(k * u, 1.0 / k)
        return s / k, d, c
    if k == 0.0:
        sn, cn, dn = np.sin(u), np.cos(u), np.ones_like(u)
    elif k == 1.0:
        sn, cn = np.tanh(u), 1.0 / np.cosh(u)
        dn = cn
    else:
        sn, cn, dn, _ = special.ellipj(u, k * k)
    if np.ndim(sn) == 0:
        return float(sn), float(cn), float(dn)
    return sn, cn, dn

