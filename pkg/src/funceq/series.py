"""Exact small-separation expansion of the functional equation.

Put x_i = t z_i and expand f(t w) = sum_j a_j c_{2j-2} (t w)^(2j-2), with
c_j = 1 for j < 0 and 1/j! otherwise.  After multiplying by t^(2n+1) the
residual becomes a series in t^2; its coefficient at level s involves only
products a_{j_1}...a_{j_n} with j_1 + ... + j_n = s, each multiplied by a
rational function of the z_i.  Writing that coefficient as

    sum_k P_k(z) A_k(a)

with independent z-factors P_k gives the a-constraints A_k = 0.  The row space
is found exactly: the coefficient is sampled at random integer z points with
exact rationals, reduced to echelon form, and the result is re-verified at
fresh points against the symbolic z-factors.

Everything here is exact (Fraction or sympy rationals); no floating point is
used except in the numeric cross-checks that are marked as such.
"""

import itertools
import json
import random
from dataclasses import dataclass, field
from fractions import Fraction
from math import comb, factorial, gcd

import numpy as np
import sympy as sp

from .families import SolutionSpec, derivatives, laurent_coefficients, weierstrass_laurent
from .residuals import method2_residual
from .special_functions import EllipticParams, weierstrass_p


class DivisionError(ArithmeticError):
    """Raised by MultiPoly.exact_divide; carries the non-zero remainder."""

    def __init__(self, remainder):
        super().__init__(f"division leaves remainder {remainder}")
        self.remainder = remainder


class CutoffExceeded(ValueError):
    pass


class StructuralFailure(ArithmeticError):
    """A level coefficient is not reproduced by its z-factor decomposition."""


class InconsistentSystem(ArithmeticError):
    def __init__(self, level, expression):
        super().__init__(f"level {level}: constraint {expression} cannot be satisfied")
        self.level = level
        self.expression = expression


# --- sparse exact polynomials ---------------------------------------------------

def _lcm(a, b):
    return a * b // gcd(a, b)


class MultiPoly:
    """Sparse polynomial with Fraction coefficients over named variables.

    Terms are kept in descending lexicographic order of exponent vectors and
    zero coefficients are never stored.
    """

    __slots__ = ("variables", "_terms")

    def __init__(self, variables, terms=()):
        self.variables = tuple(variables)
        acc = {}
        items = terms.items() if isinstance(terms, dict) else terms
        for exp, c in items:
            exp = tuple(int(e) for e in exp)
            if len(exp) != len(self.variables):
                raise ValueError("exponent length does not match the variables")
            acc[exp] = acc.get(exp, 0) + Fraction(c)
        self._terms = {e: c for e, c in sorted(acc.items(), reverse=True) if c != 0}

    @classmethod
    def constant(cls, variables, c):
        return cls(variables, {(0,) * len(variables): c})

    @classmethod
    def generator(cls, variables, name):
        variables = tuple(variables)
        exp = tuple(int(v == name) for v in variables)
        if sum(exp) != 1:
            raise ValueError(f"{name!r} is not one of {variables}")
        return cls(variables, {exp: 1})

    @property
    def terms(self):
        return dict(self._terms)

    def __len__(self):
        return len(self._terms)

    def is_zero(self):
        return not self._terms

    def _coerce(self, other):
        if isinstance(other, MultiPoly):
            if other.variables != self.variables:
                raise ValueError("polynomials live over different variables")
            return other
        return MultiPoly.constant(self.variables, other)

    def __add__(self, other):
        other = self._coerce(other)
        return MultiPoly(self.variables, itertools.chain(self._terms.items(), other._terms.items()))

    __radd__ = __add__

    def __neg__(self):
        return MultiPoly(self.variables, {e: -c for e, c in self._terms.items()})

    def __sub__(self, other):
        return self + (-self._coerce(other))

    def __rsub__(self, other):
        return self._coerce(other) - self

    def __mul__(self, other):
        if not isinstance(other, MultiPoly):
            c = Fraction(other)
            return MultiPoly(self.variables, {e: c * v for e, v in self._terms.items()})
        other = self._coerce(other)
        acc = {}
        for e1, c1 in self._terms.items():
            for e2, c2 in other._terms.items():
                e = tuple(a + b for a, b in zip(e1, e2))
                acc[e] = acc.get(e, 0) + c1 * c2
        return MultiPoly(self.variables, acc)

    __rmul__ = __mul__

    def __pow__(self, k):
        if k < 0:
            raise ValueError("negative powers are not polynomials")
        out = MultiPoly.constant(self.variables, 1)
        base = self
        while k:
            if k & 1:
                out = out * base
            base = base * base
            k >>= 1
        return out

    def __eq__(self, other):
        if not isinstance(other, MultiPoly):
            other = MultiPoly.constant(self.variables, other)
        return self.variables == other.variables and self._terms == other._terms

    __hash__ = None

    def total_degree(self):
        return max((sum(e) for e in self._terms), default=-1)

    def leading(self):
        if not self._terms:
            raise ValueError("zero polynomial has no leading term")
        return next(iter(self._terms.items()))

    def content(self):
        """Positive rational g with self / g having coprime integer coefficients."""
        if not self._terms:
            return Fraction(0)
        num, den = 0, 1
        for c in self._terms.values():
            num = gcd(num, c.numerator)
            den = _lcm(den, c.denominator)
        return Fraction(num, den)

    def primitive(self):
        """self / content, signed so the leading coefficient is positive."""
        if not self._terms:
            return self
        g = self.content()
        if self.leading()[1] < 0:
            g = -g
        return self * (1 / g)

    def exact_divide(self, divisor):
        """Quotient q with self == q * divisor; DivisionError otherwise."""
        divisor = self._coerce(divisor)
        if divisor.is_zero():
            raise ZeroDivisionError("division by the zero polynomial")
        lexp, lcoef = divisor.leading()
        rem = self
        quot = {}
        left = {}
        while not rem.is_zero():
            e, c = rem.leading()
            if all(a >= b for a, b in zip(e, lexp)):
                qe = tuple(a - b for a, b in zip(e, lexp))
                qc = c / lcoef
                quot[qe] = quot.get(qe, 0) + qc
                rem = rem - MultiPoly(self.variables, {qe: qc}) * divisor
            else:
                left[e] = c
                rem = MultiPoly(self.variables, {k: v for k, v in rem._terms.items() if k != e})
        if left:
            raise DivisionError(MultiPoly(self.variables, left))
        return MultiPoly(self.variables, quot)

    def evaluate(self, point):
        """Exact value at ``point`` (sequence aligned with variables, or a dict)."""
        if isinstance(point, dict):
            point = [point[v] for v in self.variables]
        point = [Fraction(p) for p in point]
        total = Fraction(0)
        for e, c in self._terms.items():
            v = c
            for x, k in zip(point, e):
                if k:
                    v *= x ** k
            total += v
        return total

    def to_sympy(self, symbols=None):
        syms = symbols or sp.symbols(self.variables)
        return sp.Add(*[sp.Rational(c.numerator, c.denominator)
                        * sp.Mul(*[s ** k for s, k in zip(syms, e)])
                        for e, c in self._terms.items()])

    def __str__(self):
        return str(self.to_sympy()) if self._terms else "0"

    def __repr__(self):
        return f"MultiPoly({self.variables}, {self})"


class TruncatedLaurent:
    """Finite Laurent series in t with MultiPoly coefficients.

    Powers above ``cutoff`` are discarded on construction and after every
    product, so arithmetic happens in the quotient ring by t^(cutoff+1).
    """

    def __init__(self, min_power, coeffs, cutoff):
        self.min_power = int(min_power)
        self.cutoff = int(cutoff)
        keep = max(0, self.cutoff - self.min_power + 1)
        self.coeffs = list(coeffs)[:keep]

    def power(self, p):
        i = p - self.min_power
        if p > self.cutoff:
            raise CutoffExceeded(f"power {p} is above the cutoff {self.cutoff}")
        if 0 <= i < len(self.coeffs):
            return self.coeffs[i]
        return None

    def __mul__(self, other):
        lo = self.min_power + other.min_power
        cut = min(self.cutoff + other.min_power, other.cutoff + self.min_power)
        out = [None] * max(0, cut - lo + 1)
        for i, a in enumerate(self.coeffs):
            if a is None or a.is_zero():
                continue
            for j, b in enumerate(other.coeffs):
                if i + j >= len(out):
                    break
                if b is None or b.is_zero():
                    continue
                out[i + j] = a * b if out[i + j] is None else out[i + j] + a * b
        return TruncatedLaurent(lo, out, cut)

    def scale(self, poly):
        return TruncatedLaurent(self.min_power,
                                [None if c is None else c * poly for c in self.coeffs], self.cutoff)

    def __add__(self, other):
        lo = min(self.min_power, other.min_power)
        cut = min(self.cutoff, other.cutoff)
        out = [None] * max(0, cut - lo + 1)
        for s in (self, other):
            for i, c in enumerate(s.coeffs):
                k = i + s.min_power - lo
                if c is None or k >= len(out):
                    continue
                out[k] = c if out[k] is None else out[k] + c
        return TruncatedLaurent(lo, out, cut)


# --- the expansion --------------------------------------------------------------

def _c(j):
    return Fraction(1) if j < 0 else Fraction(1, factorial(j))


def _compositions(total, parts):
    if parts == 1:
        yield (total,)
        return
    for first in range(total + 1):
        for rest in _compositions(total - first, parts - 1):
            yield (first,) + rest


def _monomial_key(mono):
    # columns with the largest index first, so echelon pivots favour the newest a_j
    return tuple(sorted(mono, reverse=True))


def _level_monomials(n, s):
    monos = {tuple(sorted(c)) for c in _compositions(s, n)}
    return sorted(monos, key=_monomial_key, reverse=True)


def _pair_terms(n):
    """(i, l, rest) for every ordered pair: f' on (i, l), f on (i, j) for j in rest."""
    m = n + 1
    for i in range(m):
        others = [j for j in range(m) if j != i]
        for l in others:
            yield i, l, [j for j in others if j != l]


def _level_values(n, s, point):
    """Exact coefficient of each a-monomial at level s for one z point."""
    out = {}
    for i, l, rest in _pair_terms(n):
        dl = Fraction(point[i] - point[l])
        diffs = [Fraction(point[i] - point[j]) for j in rest]
        for comp in _compositions(s, n):
            j0 = comp[0]
            coef = (2 * j0 - 2) * _c(2 * j0 - 2)
            if coef == 0:
                continue
            v = coef * dl ** (2 * j0 - 3)
            for jj, d in zip(comp[1:], diffs):
                v *= _c(2 * jj - 2) * d ** (2 * jj - 2)
            key = tuple(sorted(comp))
            out[key] = out.get(key, 0) + v
    return out


def _denominator(n, point):
    """prod_{p<q} (z_p - z_q)^3; clears every pole of the level coefficients."""
    d = Fraction(1)
    for p, q in itertools.combinations(range(n + 1), 2):
        d *= Fraction(point[p] - point[q]) ** 3
    return d


def _rref(rows):
    """Reduced row echelon form over the rationals (nonzero rows only)."""
    rows = [list(r) for r in rows]
    basis, pivots = [], []
    for r in rows:
        for b, pc in zip(basis, pivots):
            if r[pc]:
                f = r[pc]
                r = [x - f * y for x, y in zip(r, b)]
        nz = next((k for k, x in enumerate(r) if x), None)
        if nz is None:
            continue
        inv = 1 / r[nz]
        r = [x * inv for x in r]
        for bi, b in enumerate(basis):
            if b[nz]:
                f = b[nz]
                basis[bi] = [x - f * y for x, y in zip(b, r)]
        basis.append(r)
        pivots.append(nz)
    order = sorted(range(len(pivots)), key=lambda k: pivots[k])
    return [basis[k] for k in order], [pivots[k] for k in order]


def _random_point(rng, m, span=10 ** 6):
    """Distinct integer coordinates with the last one pinned at 0."""
    while True:
        pt = [rng.randint(-span, span) for _ in range(m - 1)] + [0]
        if len(set(pt)) == m:
            return pt


def _int_poly_power(nvars, i, j, k):
    """(z_i - z_j)^k as {exponent: int}; index nvars means the pinned variable 0."""
    out = {}
    for r in range(k + 1):
        e = [0] * nvars
        c = comb(k, r) * (-1) ** (k - r)
        if i < nvars:
            e[i] += r
        elif r:
            continue
        if j < nvars:
            e[j] += k - r
        elif k - r:
            continue
        e = tuple(e)
        out[e] = out.get(e, 0) + c
    return out


def _int_poly_mul(a, b):
    out = {}
    for e1, c1 in a.items():
        for e2, c2 in b.items():
            e = tuple(x + y for x, y in zip(e1, e2))
            out[e] = out.get(e, 0) + c1 * c2
    return {e: c for e, c in out.items() if c}


def _zeta_variables(n):
    return tuple(f"z{i + 1}" for i in range(n))


def _zeta_factor(n, s, mono):
    """Denominator-cleared z-coefficient of one a-monomial, with z_{n+1} = 0."""
    nv = n
    m = n + 1
    acc = {}
    target = tuple(sorted(mono))
    for i, l, rest in _pair_terms(n):
        # D / (d_il^3 prod_rest d_ij^2) = sign * prod_rest d_ij * prod_{pairs without i} d^3
        sign = 1 if i < l else -1
        base = {(0,) * nv: 1}
        for j in rest:
            if j < i:
                sign = -sign
            base = _int_poly_mul(base, _int_poly_power(nv, i, j, 1))
        for p, q in itertools.combinations([k for k in range(m) if k != i], 2):
            base = _int_poly_mul(base, _int_poly_power(nv, p, q, 3))
        for comp in set(itertools.permutations(target)):
            j0 = comp[0]
            coef = (2 * j0 - 2) * _c(2 * j0 - 2)
            if coef == 0:
                continue
            poly = _int_poly_power(nv, i, l, 2 * j0)
            for jj, j in zip(comp[1:], rest):
                coef *= _c(2 * jj - 2)
                poly = _int_poly_mul(poly, _int_poly_power(nv, i, j, 2 * jj))
            poly = _int_poly_mul(poly, base)
            for e, c in poly.items():
                acc[e] = acc.get(e, 0) + sign * coef * c
    return MultiPoly(_zeta_variables(n), acc)


def _a_variables(J):
    return tuple(f"a{j}" for j in range(J + 1))


def _mono_poly(variables, mono):
    e = [0] * len(variables)
    for j in mono:
        e[j] += 1
    return tuple(e)


@dataclass
class LevelConstraint:
    """Constraints from the t^(2 level) coefficient.

    ``constraints`` are primitive polynomials in a_0..a_J; ``zeta_factors``
    (evaluated with z_{n+1} = 0) pair with them so that the coefficient equals
    sum_k zeta_factors[k] * constraints[k] / prod_{p<q} (z_p - z_q)^3.
    """

    level: int
    rank: int
    constraints: list
    zeta_factors: list | None = None

    @property
    def power(self):
        return 2 * self.level

    @property
    def factorises(self):
        return self.rank <= 1

    def to_dict(self):
        return {"power": self.power, "rank": self.rank,
                "constraints": [str(c) for c in self.constraints]}


def _cost_guard(n, J, allow_expensive):
    if n not in (2, 3, 4):
        raise ValueError("the expansion is implemented for n = 2, 3, 4")
    if n in (2, 3) and J > 12:
        raise CutoffExceeded("J must not exceed 12 for n = 2, 3")
    if n == 4:
        if not allow_expensive:
            raise CutoffExceeded("n = 4 needs allow_expensive=True")
        if J > 6:
            raise CutoffExceeded("J must not exceed 6 for n = 4")


def _extract(monos, sampler, variables, rng, extra_rows=6, factor_fn=None):
    """Row-reduce sampled coefficient vectors into constraints and z-factors.

    Returns (basis, scales, constraints, factors): constraint k is basis row k
    divided by scales[k], and factors[k] is the matching z-polynomial.
    """
    rows = []
    for _ in range(len(monos) + extra_rows):
        vals = sampler(rng)
        rows.append([vals.get(mm, Fraction(0)) for mm in monos])
    basis, pivots = _rref(rows)
    scales, constraints, factors = [], [], []
    for b, pc in zip(basis, pivots):
        poly = MultiPoly(variables, {_mono_poly(variables, mm): x
                                     for mm, x in zip(monos, b) if x})
        g = poly.content()
        if poly.leading()[1] < 0:
            g = -g
        scales.append(g)
        constraints.append(poly * (1 / g))
        if factor_fn is not None:
            factors.append(factor_fn(monos[pc]) * g)
    return basis, scales, constraints, factors


def expand_pde(n, J=None, allow_expensive=False, zeta_factors=True, seed=0):
    """a-constraints from every t-level 0..J of the small-separation expansion."""
    if J is None:
        J = {2: 10, 3: 9, 4: 6}.get(n, 6)
    _cost_guard(n, J, allow_expensive)
    rng = random.Random(seed)
    variables = _a_variables(J)
    out = []
    for s in range(J + 1):
        monos = _level_monomials(n, s)

        def sampler(r, s=s):
            return _level_values(n, s, _random_point(r, n + 1))

        fac = (lambda mono, s=s: _zeta_factor(n, s, mono)) if zeta_factors else None
        basis, scales, cons, facs = _extract(monos, sampler, variables, rng, factor_fn=fac)
        if zeta_factors and cons:
            _verify_level(n, s, monos, basis, scales, facs, rng)
        out.append(LevelConstraint(s, len(cons), cons, facs if zeta_factors else None))
    return out


def _verify_level(n, s, monos, basis, scales, facs, rng, checks=3):
    """Fresh-point check that sum_k P_k A_k reproduces the cleared coefficient."""
    for _ in range(checks):
        pt = _random_point(rng, n + 1)
        vals = _level_values(n, s, pt)
        D = _denominator(n, pt)
        fv = [f.evaluate(pt[:n]) / g for f, g in zip(facs, scales)]
        for k, mm in enumerate(monos):
            want = sum(v * b[k] for v, b in zip(fv, basis))
            if want != D * vals.get(mm, Fraction(0)):
                raise StructuralFailure(
                    f"level {s}: z-factor decomposition fails for monomial {mm}")


def expand_symbolic(n, J):
    """Full denominator-cleared coefficients over (z, a) via TruncatedLaurent.

    Slow; meant as an oracle for small n and J.  z_{n+1} is pinned at 0.
    Returns {level: MultiPoly}.
    """
    _cost_guard(n, J, True)
    zv = _zeta_variables(n)
    av = _a_variables(J)
    variables = zv + av
    nz = len(zv)

    def lift_z(intpoly):
        return MultiPoly(variables, {e + (0,) * len(av): c for e, c in intpoly.items()})

    def a_var(j):
        return MultiPoly.generator(variables, f"a{j}")

    total = None
    m = n + 1
    for i, l, rest in _pair_terms(n):
        sign = 1 if i < l else -1
        pref = {(0,) * nz: 1}
        for j in rest:
            if j < i:
                sign = -sign
            pref = _int_poly_mul(pref, _int_poly_power(nz, i, j, 1))
        for p, q in itertools.combinations([k for k in range(m) if k != i], 2):
            pref = _int_poly_mul(pref, _int_poly_power(nz, p, q, 3))
        # d^3 f'(t d) and d^2 f(t d) as series in t, one power of t per slot
        fp = [None] * (2 * J + 1)
        for j in range(J + 1):
            c = (2 * j - 2) * _c(2 * j - 2)
            if c:
                fp[2 * j] = a_var(j) * lift_z(_int_poly_power(nz, i, l, 2 * j)) * c
        series = TruncatedLaurent(-3, fp, 2 * J - 3)
        for j_ in rest:
            fs = [None] * (2 * J + 1)
            for j in range(J + 1):
                fs[2 * j] = a_var(j) * lift_z(_int_poly_power(nz, i, j_, 2 * j)) * _c(2 * j - 2)
            series = series * TruncatedLaurent(-2, fs, 2 * J - 2)
        series = series.scale(lift_z(pref) * sign)
        total = series if total is None else total + series
    out = {}
    for s in range(J + 1):
        p = 2 * s - 2 * n - 1
        if p > total.cutoff:
            break
        c = total.power(p)
        out[s] = c if c is not None else MultiPoly(variables)
    return out


# --- solving the recurrence -----------------------------------------------------

@dataclass
class RecurrenceState:
    """One consistent branch: every a_j as a rational function of the free ones."""

    n: int
    J: int
    known: dict
    branch_events: list = field(default_factory=list)
    free: tuple = ()

    def value(self, j):
        return self.known[j]

    def label(self):
        picks = [e["choice"] for e in self.branch_events if e["kind"] == "branch"]
        return "; ".join(picks) if picks else "generic"

    def to_dict(self):
        return {"n": self.n, "J": self.J, "label": self.label(),
                "free": [str(s) for s in self.free],
                "known": {str(j): str(v) for j, v in sorted(self.known.items())},
                "branch_events": self.branch_events}


@dataclass
class RecurrenceReport:
    n: int
    J: int
    levels: list
    branches: list
    checks: dict = field(default_factory=dict)

    @property
    def state(self):
        if len(self.branches) != 1:
            raise ValueError(f"{len(self.branches)} branches; pick one explicitly")
        return self.branches[0]

    def to_dict(self):
        return {"n": self.n, "J": self.J,
                "levels": [lv.to_dict() for lv in self.levels],
                "branches": [b.to_dict() for b in self.branches],
                "checks": self.checks}

    def to_json(self):
        return json.dumps(self.to_dict(), sort_keys=True, indent=2)


def _symbols(J, prefix="a"):
    return sp.symbols(f"{prefix}0:{J + 1}")


def _numerator(expr):
    return sp.factor(sp.numer(sp.together(expr)))


def _essential_factors(expr, protected):
    """Irreducible factors of the numerator, minus constants and protected symbols."""
    _, facs = sp.factor_list(sp.numer(sp.together(expr)))
    return [f for f, _ in facs if f.free_symbols and f not in protected]


def _solve_for(expr, syms):
    """Solve a factor for its highest-index symbol that appears linearly."""
    for s in sorted(expr.free_symbols, key=lambda x: syms.index(x), reverse=True):
        poly = sp.Poly(expr, s)
        if poly.degree() == 1:
            c1, c0 = poly.all_coeffs()
            return s, sp.factor(-c0 / c1)
    raise InconsistentSystem(-1, expr)


class _Branch:
    def __init__(self, known, events, excluded=()):
        self.known = known
        self.events = events
        # factors assumed nonzero because a sibling branch took them
        self.excluded = tuple(excluded)

    def sub(self, expr):
        return sp.together(expr.xreplace(self.known))

    def with_value(self, sym, value, event):
        value = sp.factor(value)
        known = {k: sp.factor(sp.together(v.xreplace({sym: value}))) for k, v in self.known.items()}
        known[sym] = value
        return _Branch(known, self.events + [event], self.excluded)

    def excludes(self, factor):
        for e in self.excluded:
            ratio = sp.cancel(sp.together(self.sub(e)) / factor)
            if not ratio.free_symbols:
                return True
        return False

    def excluding(self, factors):
        return _Branch(self.known, self.events, self.excluded + tuple(factors))


def _resolve(branch, level, target, exprs, syms, protected):
    """Impose the remaining expressions of one level on a branch (may split)."""
    pending = [e for e in (branch.sub(x) for x in exprs)]
    pending = [e for e in pending if _numerator(e) != 0]
    if not pending:
        return [branch]
    head, tail = _numerator(pending[0]), pending[1:]
    if target is not None and target not in branch.known and head.has(target) \
            and sp.Poly(head, target).degree() == 1:
        c1, c0 = sp.Poly(head, target).all_coeffs()
        value = -c0 / c1
        ev = {"level": level, "kind": "solve", "symbol": str(target),
              "value": str(sp.factor(value))}
        return _resolve(branch.with_value(target, value, ev), level, target, tail, syms,
                        protected)
    factors = _essential_factors(head, protected)
    allowed = [f for f in factors if not branch.excludes(f)]
    if not allowed:
        raise InconsistentSystem(level, head)
    out = []
    for i, fct in enumerate(allowed):
        sym, value = _solve_for(fct, syms)
        ev = {"level": level, "kind": "branch", "condition": str(head),
              "alternatives": [str(f) for f in factors],
              "choice": f"{fct} = 0", "symbol": str(sym), "value": str(value)}
        # later alternatives assume the earlier ones fail, so branches stay disjoint
        child = branch.excluding(allowed[:i]).with_value(sym, value, ev)
        out += _resolve(child, level, target, tail, syms, protected)
    return out


def _run_levels(level_exprs, syms, targets, protected, start=None):
    branches = [_Branch(dict(start or {}), [])]
    for level, exprs in level_exprs:
        target = targets(level)
        nxt = []
        for br in branches:
            res = _resolve(br, level, target, exprs, syms, protected)
            for b in res:
                if target is not None and target not in b.known and target in syms:
                    b.events.append({"level": level, "kind": "free", "symbol": str(target)})
            nxt += res
        branches = nxt
    return branches


def _finish(branches, n, J, syms):
    states = []
    for br in branches:
        known = {}
        for j, s in enumerate(syms):
            known[j] = sp.factor(br.known.get(s, s))
        free = tuple(s for s in syms if s not in br.known)
        states.append(RecurrenceState(n, J, known, list(br.events), free))
    return states


def solve_recurrence(n, J=None, levels=None, allow_expensive=False):
    """Solve the level constraints successively for a_J, following every branch."""
    if levels is None:
        levels = expand_pde(n, J, allow_expensive=allow_expensive, zeta_factors=False)
    J = levels[-1].level if J is None else J
    syms = list(_symbols(J))
    level_exprs = [(lv.level, [c.to_sympy(syms) for c in lv.constraints]) for lv in levels]
    branches = _run_levels(level_exprs, syms, lambda s: syms[s] if s < len(syms) else None,
                           protected={syms[0]})
    states = _finish(branches, n, J, syms)
    report = RecurrenceReport(n, J, levels, states)
    if n == 2:
        report.checks["weierstrass_match"] = _match(states[0], weierstrass_series(syms[:4], J))
    if n == 3:
        report.checks.update(n3_branch_checks(report))
    return report


# --- reference series -------------------------------------------------------------

def weierstrass_series(free, J):
    """a_0..a_J of c P(z; g2, g3) + e with g2, g3, c, e fixed by a_0..a_3."""
    a0, a1, a2, a3 = free
    g2 = 10 * a2 / a0
    g3 = sp.Rational(7, 6) * a3 / a0
    p = [sp.Integer(0)] * (J + 1)
    if J >= 1:
        p[1] = g2 / 20
    if J >= 2:
        p[2] = g3 / 28
    for m in range(3, J + 1):
        p[m] = sp.Rational(3, (2 * m + 3) * (m - 2)) * sum(p[i] * p[m - 1 - i]
                                                           for i in range(1, m - 1))
    out = [a0, a1] + [a0 * p[m - 1] * factorial(2 * m - 2) for m in range(2, J + 1)]
    return [sp.factor(v) for v in out[:J + 1]]


def scaled_series(base, amplitude, scale2, shift=0):
    """b_j = amplitude * scale2^(j-1) * base_j (+ shift at j = 1)."""
    out = []
    for j, c in enumerate(base):
        v = amplitude * scale2 ** (j - 1) * sp.Rational(c.numerator, c.denominator)
        if j == 1:
            v = v + shift
        out.append(sp.factor(v))
    return out


def _match(state, series, extra=None):
    """Largest index j at which the branch agrees with ``series`` for every j' <= j."""
    extra = extra or {}
    upto = -1
    for j, target in enumerate(series):
        if j > state.J:
            break
        lhs = state.known[j].xreplace(extra)
        if sp.simplify(sp.together(lhs - target.xreplace(extra))) != 0:
            return {"agrees": False, "first_mismatch": j}
        upto = j
    return {"agrees": True, "checked_through": upto}


def _unit_base(family, J):
    if family == "hyperbolic":
        spec = SolutionSpec("hyperbolic", {"beta": 1.0, "alpha": 1.0})
        return list(laurent_coefficients(spec, J).coeffs)
    if family == "p1288":
        p = weierstrass_laurent(12, 8, J)
        return [Fraction(1), Fraction(0)] + [p[m - 1] * factorial(2 * m - 2) for m in range(2, J + 1)]
    raise ValueError(family)


def n3_branch_checks(report):
    """Identify the two n = 3 branches and compare them with known families."""
    J = report.J
    syms = list(_symbols(J))
    a0, a1, a2, a3, a4 = syms[:5]
    checks = {}
    split = next((e for b in report.branches for e in b.branch_events if e["kind"] == "branch"),
                 None)
    if split is None:
        return {"split": None}
    checks["split"] = {"level": split["level"], "condition": split["condition"],
                       "alternatives": split["alternatives"]}
    wp = weierstrass_series(syms[:4], J)
    for br in report.branches:
        first = next(e for e in br.branch_events if e["kind"] == "branch")
        key = f"branch[{first['symbol']}]"
        info = {"choice": first["choice"], "value": first["value"]}
        if first["symbol"] == "a4":
            info["weierstrass_match"] = _match(br, wp)
        else:
            forced = [e for e in br.branch_events if e["kind"] != "free" and e["symbol"] == "a4"]
            info["forced_a4"] = str(br.known[4])
            if forced:
                info["forced_a4_level"] = forced[0]["level"]
            gap = _essential_factors(sp.together(br.known[4] - 60 * a2 ** 2 / a0), {a0})
            info["elliptic_condition"] = [f"{g} = 0" for g in gap]
            f2 = scaled_series(_unit_base("p1288", J), a1, a1 / a0, shift=a1)
            info["p1288_match"] = _match(br, f2, {a2: sp.Rational(6, 5) * a1 ** 2 / a0})
            hyp = scaled_series(_unit_base("hyperbolic", J), 6 * a1, 6 * a1 / a0)
            info["hyperbolic_match"] = _match(br, hyp, {a2: sp.Rational(-21, 5) * a1 ** 2 / a0})
        checks[key] = info
    del a3, a4
    return checks


def family_match(report, spec):
    """Does some branch reproduce the family's exact Laurent data through J?"""
    data = laurent_coefficients(spec, report.J).coeffs
    syms = list(_symbols(report.J))
    target = [sp.Rational(c.numerator, c.denominator) for c in data]
    results = []
    for br in report.branches:
        subs = {s: target[syms.index(s)] for s in br.free}
        ok = all(sp.simplify(br.known[j].xreplace(subs) - target[j]) == 0
                 for j in range(report.J + 1))
        results.append(ok)
    return any(results), results


def substitute_constraints(levels, coeffs):
    """Evaluate every level constraint at exact numeric a_j; all zero for solutions."""
    vals = [Fraction(c) for c in coeffs]
    out = []
    for lv in levels:
        for c in lv.constraints:
            used = c.variables
            pt = [vals[int(v[1:])] if int(v[1:]) < len(vals) else Fraction(0) for v in used]
            out.append((lv.level, c.evaluate(pt)))
    return out


# --- the pair of ordinary differential equations for n = 3 -------------------------

def ode_pair_series(J=9):
    """Series solution of the two n = 3 ordinary differential equations.

    f = sum_j b_j c_{2j-2} z^(2j-2) is substituted into both equations, whose
    coefficients involve a_0..a_3; the z-power coefficients are solved level by
    level for b_j, splitting where the two equations disagree.
    """
    z = sp.Symbol("z")
    b = list(_symbols(J, "b"))
    a = list(_symbols(3))
    f = sum(b[j] * (sp.Integer(1) / sp.factorial(2 * j - 2) if j >= 1 else 1) * z ** (2 * j - 2)
            for j in range(J + 1))
    d = [f]
    for _ in range(5):
        d.append(sp.diff(d[-1], z))
    f0, f1, f2, f3, f4, f5 = d
    a0, a1, a2, a3 = a
    e1 = 120 * a2 * f1 * f0 + 5 * a0 * f3 * f2 + 60 * f2 * f1 * a1 - a0 * f5 * f0
    e2 = (504 * a3 * f1 * f0 ** 2 + 1080 * f1 * a2 * f2 * f0 + 36 * f4 * f1 * a1 * f0
          + 15 * f1 * a0 * f3 ** 2 + 180 * f1 * f2 ** 2 * a1 + 180 * f3 * f1 ** 2 * a1
          - 3 * a0 * f5 * f1 ** 2 + 360 * f1 ** 3 * a2 + 15 * f1 * a0 * f4 * f2
          - 60 * f2 * a1 * f3 * f0 - 12 * a0 * f4 * f3 * f0 + 240 * f3 * a2 * f0 ** 2
          + a0 * f5 * f2 * f0)
    p1 = sp.Poly(sp.expand(e1 * z ** 9), z)
    p2 = sp.Poly(sp.expand(e2 * z ** 13), z)
    level_exprs = []
    for k in range(J + 1):
        level_exprs.append((k, [p1.coeff_monomial(z ** (2 * k)), p2.coeff_monomial(z ** (2 * k))]))
    syms = a + b
    # both equations are homogeneous in f, so the amplitude is normalised by b_0 = a_0
    branches = _run_levels(level_exprs, syms, lambda k: b[k], protected={a0}, start={b[0]: a0})
    out = []
    for br in branches:
        known = {j: sp.factor(br.known.get(b[j], b[j]).xreplace(
            {s: v for s, v in br.known.items() if s in a})) for j in range(J + 1)}
        out.append({"known": known, "events": br.events})
    return out


# --- the Taylor branch ------------------------------------------------------------

def _det_level_values(L, point):
    """Coefficient of t^L in the three-point determinant, per a-pair, at (s, r)."""
    s, r = (Fraction(x) for x in point)
    args = (s, r, -(s + r))
    # det = sum over cyclic (p, q): f(x_p) f'(x_q) - f(x_q) f'(x_p)
    out = {}
    for p, q in ((1, 2), (2, 0), (0, 1)):
        for j in range(2, L + 4):
            k = L + 5 - j
            if k < 3:
                continue
            cj = Fraction(1, factorial(j - 2))
            ck = Fraction(1, factorial(k - 3))
            v = cj * ck * (args[p] ** (j - 2) * args[q] ** (k - 3)
                           - args[q] ** (j - 2) * args[p] ** (k - 3))
            key = (j, k)
            out[key] = out.get(key, 0) + v
    sym = {}
    for (j, k), v in out.items():
        key = tuple(sorted((j, k)))
        sym[key] = sym.get(key, 0) + v
    return sym


@dataclass
class TaylorReport:
    J: int
    levels: list
    state: RecurrenceState
    condition: str
    condition_level: int
    checks: dict = field(default_factory=dict)

    def to_dict(self):
        return {"J": self.J, "condition": self.condition, "condition_level": self.condition_level,
                "levels": [lv.to_dict() for lv in self.levels],
                "state": self.state.to_dict(), "checks": self.checks}

    def to_json(self):
        return json.dumps(self.to_dict(), sort_keys=True, indent=2)


def taylor_branch(J=10, seed=0, lattice=(12.0, -4.0)):
    """Expand the determinant equation for a pole-free f = sum_{j>=2} a_j x^(j-2)/(j-2)!."""
    if J < 6 or J > 14:
        raise CutoffExceeded("taylor_branch needs 6 <= J <= 14")
    rng = random.Random(seed)
    variables = _a_variables(J)
    levels = []
    for L in range(J - 1):
        # the constant a_2 cancels from the determinant, so a_{L+3} never survives
        monos = sorted({tuple(sorted((j, L + 5 - j))) for j in range(3, L + 3) if L + 5 - j >= 3},
                       key=_monomial_key, reverse=True)

        def sampler(r, L=L):
            return _det_level_values(L, (r.randint(-10 ** 6, 10 ** 6), r.randint(-10 ** 6, 10 ** 6)))

        _, _, cons, _ = _extract(monos, sampler, variables, rng)
        levels.append(LevelConstraint(L, len(cons), cons))
    syms = list(_symbols(J))
    level_exprs = [(lv.level, [c.to_sympy(syms) for c in lv.constraints]) for lv in levels]
    branches = _run_levels(level_exprs, syms,
                           lambda L: syms[L + 2] if L + 2 < len(syms) else None,
                           protected={syms[3]}, start={syms[0]: sp.Integer(0), syms[1]: sp.Integer(0)})
    if len(branches) != 1:
        raise InconsistentSystem(-1, "Taylor branch split unexpectedly")
    state = _finish(branches, 2, J, syms)[0]
    first = next(lv for lv in levels if lv.rank)
    cond = first.constraints[0].to_sympy(syms)
    report = TaylorReport(J, levels, state, f"{cond} = 0", first.level)
    report.checks["third_period"] = third_period_check(*lattice)
    report.checks["third_period_exact"] = exact_third_period_check()
    report.checks["exponential_identity"] = exponential_identity()
    return report


def third_period_check(g2, g3, fraction=Fraction(1, 3)):
    """Numeric residuals at d = fraction * (real period) of the lattice.

    ``p_identity`` is |P''^2 - 12 P P'^2| / P''^2 at d; ``taylor`` is the
    normalized |a3 a5 - a4^2| for f(z) = P(z + d).
    """
    params = EllipticParams.from_invariants(float(g2), float(g3))
    d = float(fraction) * 2.0 * params.omega
    p, dp = weierstrass_p(np.array([d]), params)
    p, dp = float(np.real(p[0])), float(np.real(dp[0]))
    d2 = 6.0 * p * p - params.g2 / 2.0
    ident = abs(d2 * d2 - 12.0 * p * dp * dp) / max(d2 * d2, 12.0 * abs(p) * dp * dp)
    spec = SolutionSpec("weierstrass", {"g2": float(g2), "g3": float(g3), "d": d})
    jet = np.real(derivatives(spec, 0.0, 3))
    a3, a4, a5 = jet[1], jet[2], jet[3]
    taylor = abs(a3 * a5 - a4 * a4) / max(abs(a3 * a5), a4 * a4)
    return {"d": d, "p_identity": ident, "taylor": float(taylor)}


def exact_third_period_check():
    """a3 a5 - a4^2 for P(z + d; 12, 8) at d a third of its real period, exactly."""
    z = sp.Symbol("z")
    lam = sp.sqrt(3)
    d = sp.pi / (3 * lam)
    f = -1 + 3 / sp.sin(lam * (z + d)) ** 2
    a3 = sp.diff(f, z).subs(z, 0)
    a4 = sp.diff(f, z, 2).subs(z, 0)
    a5 = sp.diff(f, z, 3).subs(z, 0)
    return str(sp.nsimplify(sp.simplify(a3 * a5 - a4 ** 2)))


def exponential_identity():
    """a3 a5 - a4^2 for a + b exp(c z), symbolically."""
    z, a, b, c = sp.symbols("z a b c")
    f = a + b * sp.exp(c * z)
    t = [sp.diff(f, z, m).subs(z, 0) for m in (1, 2, 3)]
    return str(sp.simplify(t[0] * t[2] - t[1] ** 2))


def verify_method2_eq(spec, z, a=None):
    """Normalized residual of the two-body first equation at z."""
    return method2_residual(spec, z, a)
