"""Transform-side checks: closed-form transforms, the normalized S_n functional,
discrete coefficient recurrences and indented generalized Fourier transforms.

Conventions: f^(k) = int f(x) exp(-i k x) dx, so 1/x^2 has transform -pi|k|,
and a 2 pi periodic f is (1/2 pi) sum_K a_K exp(i K x) with a_K = f^(K).
"""

import json
import math
from dataclasses import dataclass, field

import mpmath
import numpy as np
import sympy
from scipy import special
from scipy.integrate import tanhsinh

from .families import SolutionSpec, UnsupportedFamily, derivatives
from .special_functions import EllipticParams, complete_k, theta

KINDS = ("coth", "tanh", "abs", "const", "pair")
DISCRETE_KINDS = ("general", "even_pole", "even_pole_a0zero")
_DEFAULTS = {
    "coth": {"a0": 1.0},
    "tanh": {"a2": 1.0},
    "abs": {"t": -1.0},
    "const": {"value": 1.0},
    # sign picks f1 + k f2 (+1) or f1 - k f2 (-1); c is the integration constant
    "pair": {"a1": -2.0, "a2": -math.pi / 3.0, "sign": 1.0, "c": 0.0},
}


class DenominatorZero(ValueError):
    """A factor f^(k_j) + pi k_j (or the total momentum) vanishes at the sample."""


class InconsistentSeeds(ValueError):
    def __init__(self, message, witness=None):
        super().__init__(message)
        self.witness = witness


class Underdetermined(ValueError):
    pass


class DivergentSeries(ValueError):
    pass


@dataclass(frozen=True)
class TransformSpec:
    kind: str
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown transform kind {self.kind!r}")
        extra = set(self.params) - set(_DEFAULTS[self.kind])
        if extra:
            raise ValueError(f"unknown parameters {sorted(extra)} for {self.kind}")
        if self.kind == "pair" and float(self.get("c")) not in (0.0, -4.0):
            raise ValueError("pair kind supports c = 0 or c = -4 only")

    def get(self, name):
        value = self.params.get(name)
        return _DEFAULTS[self.kind][name] if value is None else value

    @property
    def is_even(self):
        return self.kind != "pair"

    @property
    def analytic(self):
        """True when f^ extends holomorphically near the real axis."""
        return self.kind != "abs"

    def to_dict(self):
        return {"kind": self.kind, "params": dict(self.params)}


# --- closed forms --------------------------------------------------------------

def _removable(k, num_fn, at_zero):
    k = np.asarray(k)
    # below 1e-200 the limit is exact in double precision and avoids subnormal ratios
    zero = np.abs(k) < 1e-200
    safe = np.where(zero, 1.0, k)
    with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
        out = num_fn(safe)
    return np.where(zero, at_zero, out)


def pair_components(ts, k):
    """Even parts (f1, f2) with f^ = f1 + sign k f2."""
    a1, a2, c = float(ts.get("a1")), float(ts.get("a2")), float(ts.get("c"))
    k = np.asarray(k)
    if c == -4.0:
        s = math.sqrt(3.0) * a2
        f1 = _removable(k, lambda u: s * u / np.tan(s * u / a1), a1)
        return f1, np.full(np.shape(k), a2, dtype=np.result_type(k, float))
    alpha = a2 / a1
    with np.errstate(over="ignore"):
        f2 = 3.0 * a2 / (2.0 * np.cosh(2.0 * alpha * k) + 1.0)
    # even part of the exponential form: 3 a2 k cosh(alpha k)/sinh(3 alpha k)
    f1 = _removable(k, lambda u: 3.0 * a2 * u * np.cosh(alpha * u) / np.sinh(3.0 * alpha * u), a1)
    return f1, f2


def evaluate_fhat(ts, k):
    """Closed-form transform at k (scalar or array, real or complex)."""
    kind = ts.kind
    k = np.asarray(k)
    if kind == "coth":
        a0 = float(ts.get("a0"))
        out = _removable(k, lambda u: math.pi * u / np.tanh(math.pi * u / a0), a0)
    elif kind == "tanh":
        a = float(ts.get("a2")) / (2.0 * math.pi)
        out = math.pi * k * np.tanh(a * k)
    elif kind == "abs":
        t = ts.get("t")
        out = t * math.pi * np.abs(k)
    elif kind == "const":
        out = np.full(np.shape(k), ts.get("value"), dtype=np.result_type(k, float))
    else:
        f1, f2 = pair_components(ts, k)
        out = f1 + float(ts.get("sign")) * k * f2
    return out[()] if out.ndim == 0 else out


def pair_exponential_form(ts, k):
    """6 a2 k e^{4 alpha k}/(e^{6 alpha k}-1) (sign +1) or with e^{2 alpha k} (sign -1)."""
    a1, a2 = float(ts.get("a1")), float(ts.get("a2"))
    alpha = a2 / a1
    shift = 4.0 if float(ts.get("sign")) > 0 else 2.0
    return _removable(k, lambda u: 6.0 * a2 * u * np.exp(shift * alpha * u) / np.expm1(6.0 * alpha * u),
                      a1)[()]


def fhat_derivative(ts, k):
    """d f^/dk by complex step for analytic kinds, by sign for the abs kind."""
    k = np.asarray(k, dtype=float)
    if ts.kind == "abs":
        return ts.get("t") * math.pi * np.sign(k)
    h = 1e-30
    return np.imag(evaluate_fhat(ts, k + 1j * h)) / h


# --- the S_n functional --------------------------------------------------------

def _factors(ts, k):
    k = np.atleast_2d(np.asarray(k, dtype=float))
    fk = np.asarray(evaluate_fhat(ts, k))
    total = k.sum(axis=-1)
    return k, fk + math.pi * k, fk - math.pi * k, total, evaluate_fhat(ts, total) + math.pi * total


def s_n(ts, k):
    """Unnormalized transformed equation for n = len(k) momenta."""
    k, plus, minus, total, tail = _factors(ts, k)
    n = k.shape[-1]
    acc = 0.0
    for j in range(n):
        acc = acc + k[..., j] * np.prod(plus[..., :j], axis=-1) * np.prod(minus[..., j + 1:], axis=-1)
    out = acc * tail - total * np.prod(plus, axis=-1)
    return out[0] if out.shape == (1,) else out


def s_hat_n(ts, k, rtol=1e-12):
    """Normalized form: the unnormalized one divided by (sum k) prod(f^(k_q) + pi k_q)."""
    k, plus, minus, total, tail = _factors(ts, k)
    scale = np.maximum(np.abs(np.asarray(evaluate_fhat(ts, k))), math.pi * np.abs(k))
    if np.any(np.abs(plus) <= rtol * scale) or np.any(np.abs(total) <= rtol * np.abs(k).max(axis=-1)):
        raise DenominatorZero("f^(k_j) + pi k_j or sum k vanishes at the sample")
    n = k.shape[-1]
    acc = 0.0
    for j in range(n):
        acc = acc + k[..., j] / plus[..., j] * np.prod(minus[..., j + 1:] / plus[..., j + 1:], axis=-1)
    out = acc * tail / total - 1.0
    return out[0] if out.shape == (1,) else out


def tanh_dichotomy(ts, k):
    """Closed form ((-1)^(n+1) - 1)/(exp(2 a sum k) + 1) for the tanh kind."""
    k = np.atleast_2d(np.asarray(k, dtype=float))
    n = k.shape[-1]
    a = float(ts.get("a2")) / (2.0 * math.pi)
    x = 2.0 * a * k.sum(axis=-1)
    # 1/(e^x + 1) written to avoid overflow
    out = ((-1) ** (n + 1) - 1) * special.expit(-x)
    return out[0] if out.shape == (1,) else out


def s_n_reduction_checks(ts, n, k):
    """Defects of the two reduction identities, on momenta k[0..n-1] plus one extra.

    ``k`` must hold n + 1 numbers: the first n are the base momenta and the
    last is the one that gets paired (paired_defect) or set to zero (zero_defect).
    """
    k = np.asarray(k, dtype=float)
    if k.size != n + 1:
        raise ValueError(f"need {n + 1} momenta, got {k.size}")
    base, extra = k[:n], k[n]
    sn = s_n(ts, base)
    fe = evaluate_fhat(ts, extra)
    paired_defect = abs(s_n(ts, np.append(base, [extra, -extra])) - (fe ** 2 - (math.pi * extra) ** 2) * sn)
    zero_defect = abs(s_n(ts, np.append(base, 0.0)) - evaluate_fhat(ts, 0.0) * sn)
    return {"paired_defect": float(paired_defect), "zero_defect": float(zero_defect)}


def t_multiplier_roots(n):
    """All t with (1+t)^n (t-1) = (t-1)^n (1+t): +-1 and i cot(j pi/(n-1))."""
    roots = [1.0 + 0j, -1.0 + 0j]
    roots += [1j / math.tan(j * math.pi / (n - 1)) for j in range(1, n - 1)]
    return roots


def t_root_defect(t, n):
    return abs((1 + t) ** n * (t - 1) - (t - 1) ** n * (1 + t))


# --- ODEs satisfied by the transforms ------------------------------------------

def _normed(terms):
    terms = [complex(t) for t in terms]
    scale = max(abs(t) for t in terms)
    return float(abs(sum(terms)) / scale) if scale > 0 else 0.0


def ode_residual_transform(ts, k):
    """Scaled residuals of the transform-side ODEs at k != 0.

    r58 is the even two-body ODE with a0 = f^(0).  r48, r49 and r412 use the
    decomposition f^ = f1 + k f2 into even parts, with a1 = f1(0), a2 = f2(0)
    and the integration constant c of the pair kind (0 otherwise).
    """
    k = float(k)
    if k == 0.0:
        raise ValueError("k must be nonzero")
    f, fp = evaluate_fhat(ts, k), fhat_derivative(ts, k)
    fm, fpm = evaluate_fhat(ts, -k), fhat_derivative(ts, -k)
    a0 = evaluate_fhat(ts, 0.0)
    r58 = _normed([a0 * k * fp, -a0 * f, f * f, -(math.pi * k) ** 2])

    sign = float(ts.get("sign")) if ts.kind == "pair" else 1.0
    f1 = 0.5 * (f + fm)
    f1p = 0.5 * (fp - fpm)
    f2 = (f - fm) / (2.0 * sign * k)
    f2p = (fp + fpm) / (2.0 * sign * k) - f2 / k
    if ts.kind == "pair":
        # exact components avoid cancellation in the odd part
        a1, a2 = float(ts.get("a1")), float(ts.get("a2"))
        c = float(ts.get("c"))
        h = 1e-30
        c1, c2 = pair_components(ts, k + 1j * h)
        f1, f2 = float(np.real(c1)), float(np.real(c2))
        f1p, f2p = float(np.imag(c1)) / h, float(np.imag(c2)) / h
    else:
        a1, a2, c = float(a0), 0.0, 0.0
    r48 = _normed([2.0 * f2 * f1, -2.0 * a2 * f1, -k * a1 * f2p])
    r49 = _normed([k * a1 * f1p, f1 * f1, k * k * f2 * f2, -f1 * a1, 2.0 * k * k * a2 * f2])
    r412 = _normed([3.0 * a1 ** 2 * f2p ** 2,
                    -4.0 * (a2 - f2) * c * a2 ** 3, -4.0 * (a2 - f2) * f2 ** 3,
                    -12.0 * (a2 - f2) * a2 * f2 ** 2])
    return {"r58": r58, "r48": r48, "r49": r49, "r412": r412}


# --- coefficient sequences -----------------------------------------------------

@dataclass
class FourierSeq:
    """Coefficients a_K; with ``parity`` only K >= 0 is stored."""

    a: dict
    parity: bool = False
    a0_free: bool = False
    kind: str = ""

    def __getitem__(self, K):
        K = int(K)
        if self.parity:
            K = abs(K)
        if K == 0 and self.a0_free:
            return self.a.get(0, 0.0)
        return self.a[K]

    def __contains__(self, K):
        return (abs(int(K)) if self.parity else int(K)) in self.a

    @property
    def indices(self):
        keys = sorted(self.a)
        if self.parity:
            return sorted(set(keys) | {-K for K in keys})
        return keys

    @property
    def cutoff(self):
        return max(abs(K) for K in self.a)

    def to_list(self):
        out = []
        for K in self.indices:
            if K == 0 and self.a0_free:
                out.append({"K": 0, "a": None, "free": True})
                continue
            v = complex(self[K])
            out.append({"K": K, "a": v.real if v.imag == 0 else [v.real, v.imag]})
        return out

    def to_json(self):
        return json.dumps(self.to_list(), sort_keys=True)


def even_pole_closed_form(beta, N):
    """pi |K| (1 + beta^|K|)/(1 - beta^|K|) for 1 <= K <= N."""
    return {K: math.pi * K * (1 + beta ** K) / (1 - beta ** K) for K in range(1, N + 1)}


def a0zero_closed_form(beta, N, branch):
    """Odd terms as in the even-pole form; even terms per the chosen branch."""
    out = {}
    for K in range(1, N + 1):
        b = beta ** K
        if K % 2:
            out[K] = math.pi * K * (1 + b) / (1 - b)
        elif branch == 1:
            out[K] = math.pi * K * (1 + b) / (1 - b)
        else:
            out[K] = math.pi * K * (1 - b) / (1 + b)
    return out


def general_seeds(beta, alpha):
    """Seeds a_{-2}, a_{-1}, a_1 of beta K alpha^{4K}/(alpha^{6K} - 1)."""
    return {K: general_closed_form(beta, alpha, K) for K in (-2, -1, 1)}


def general_closed_form(beta, alpha, K):
    """beta K alpha^{4K}/(alpha^{6K} - 1), in the working precision of the inputs."""
    return beta * K * alpha ** (4 * K) / (alpha ** (6 * K) - 1)


def _beta_ok(beta):
    beta = float(beta)
    if not (-1.0 < beta < 1.0) or beta == 0.0:
        raise ValueError("beta must lie in (-1, 1) without 0")
    return beta


def _equations(kind, N, pi):
    """Equations introduced in shell N, in sweep order.

    Each equation is (label, indices, terms) where ``terms(a)`` returns the
    list of summands for a coefficient lookup ``a``.
    """
    out = []
    if kind in ("general", "even_pole"):
        pairs = [(K, L) for K in range(-N, N + 1) for L in range(-N, N + 1)
                 if K and L and max(abs(K), abs(L)) == N]
        if kind == "even_pole":
            pairs = [p for p in pairs if p[0] + p[1] != 0]
        pairs.sort(key=lambda p: (abs(p[0]), abs(p[1]), p[0] > 0, p[1] > 0))
        for K, L in pairs:
            if kind == "general":
                def terms(a, K=K, L=L):
                    return [K * a(-L) * a(-K - L), L * a(K) * a(K + L), -(K + L) * a(-K) * a(L)]
                idx = (-L, -K - L, K, K + L, -K, L)
            else:
                def terms(a, K=K, L=L):
                    s = K + L
                    return [K * a(L) * a(s), L * a(K) * a(s), -s * a(K) * a(L),
                            -pi ** 2 * K * L * s]
                idx = (L, K + L, K)
            out.append(((K, L), idx, terms))
        return out
    # discrete three-momentum functional over positive momenta; shell N holds
    # the triples of total N + 2, the first ones able to fix a_{N+2}
    S = N + 2
    triples = sorted((p, q, S - p - q) for p in range(1, S - 1) for q in range(1, S - p))
    for t in triples:
        def terms(a, t=t):
            plus = [a(m) + pi * m for m in t]
            minus = [a(m) - pi * m for m in t]
            s = sum(t)
            head = (t[0] * minus[1] * minus[2] + t[1] * plus[0] * minus[2]
                    + t[2] * plus[0] * plus[1])
            return [head * a(s), head * pi * s, -s * plus[0] * plus[1] * plus[2]]
        out.append((t, tuple(t) + (sum(t),), terms))
    return out


@dataclass
class DiscreteResult:
    kind: str
    branches: list
    events: list
    equations_checked: int
    dps: int

    @property
    def seq(self):
        if len(self.branches) != 1:
            raise ValueError(f"{len(self.branches)} branches; pick one with branch=")
        return self.branches[0]

    def to_dict(self):
        return {"kind": self.kind, "events": self.events, "dps": self.dps,
                "equations_checked": self.equations_checked,
                "branches": [b.to_list() for b in self.branches]}


class _State:
    def __init__(self, known, parity, events):
        self.known = dict(known)
        self.parity = parity
        self.events = list(events)

    def key(self, K):
        return abs(K) if self.parity else K

    def copy(self):
        return _State(self.known, self.parity, self.events)

    def unknowns(self, idx):
        return sorted({self.key(K) for K in idx} - set(self.known))

    def lookup(self, sub=None):
        sub = sub or {}
        return lambda K: sub[self.key(K)] if self.key(K) in sub else self.known[self.key(K)]


_VINV = {}


def _vandermonde_inverse(degree):
    """Exact inverse of the Vandermonde matrix on nodes 0..degree (rows: x^degree..x^0)."""
    if degree not in _VINV:
        M = sympy.Matrix([[x ** (degree - j) for j in range(degree + 1)] for x in range(degree + 1)])
        _VINV[degree] = [[(int(e.p), int(e.q)) for e in row] for row in M.inv().tolist()]
    return _VINV[degree]


def _term_poly(terms, st, u, degree):
    """Coefficients (highest first) of an equation in one unknown, fitted term by term.

    Fitting each summand separately keeps a small coefficient from being lost
    against a large constant part.
    """
    rows = [terms(st.lookup({u: mpmath.mpf(x)})) for x in range(degree + 1)]
    inv = _vandermonde_inverse(degree)
    coeffs = []
    for j in range(degree + 1):
        acc = mpmath.mpf(0)
        for t in range(len(rows[0])):
            acc += mpmath.fsum(mpmath.mpf(p) / q * rows[i][t] for i, (p, q) in enumerate(inv[j]))
        coeffs.append(acc)
    return coeffs


def _single_unknown(terms, st, u, degree, eps):
    """Real roots, largest first; None when the unknown drops out."""
    coeffs = _term_poly(terms, st, u, degree)
    big = max(abs(c) for c in coeffs)
    while len(coeffs) > 1 and abs(coeffs[0]) <= eps * big:
        coeffs = coeffs[1:]
    if len(coeffs) == 1:
        return None
    if len(coeffs) == 2:
        return [-coeffs[1] / coeffs[0]]
    roots = mpmath.polyroots(coeffs, maxsteps=200, extraprec=2 * mpmath.mp.prec)
    real = [mpmath.re(r) for r in roots if abs(mpmath.im(r)) <= mpmath.sqrt(eps) * max(1, abs(r))]
    return sorted(real, reverse=True)


def _affine(terms, st, u, v, eps):
    """(A, B, C) with equation A u + B v + C when it is affine in (u, v), else None."""
    grid = [(0, 0), (1, 0), (0, 1), (1, 1), (2, 0), (0, 2)]
    rows = [terms(st.lookup({u: mpmath.mpf(x), v: mpmath.mpf(y)})) for x, y in grid]
    r00, r10, r01, r11, r20, r02 = rows
    scale = max(abs(t) for r in rows for t in r)
    n = len(r00)
    for i in range(n):
        for bad in (r11[i] - r10[i] - r01[i] + r00[i], r20[i] - 2 * r10[i] + r00[i],
                    r02[i] - 2 * r01[i] + r00[i]):
            if abs(bad) > eps * scale:
                return None
    A = mpmath.fsum(r10[i] - r00[i] for i in range(n))
    B = mpmath.fsum(r01[i] - r00[i] for i in range(n))
    return A, B, mpmath.fsum(r00)


def _propagate(pending, st, tol, eps, stack, shell):
    """Solve single-unknown equations until none is left; fork on multiple roots."""
    checked = 0
    progress = True
    while progress:
        progress = False
        rest = []
        for eq in pending:
            label, idx, terms = eq
            unknown = st.unknowns(idx)
            if not unknown:
                checked += 1
                ts = terms(st.lookup())
                r, sc = mpmath.fsum(ts), max(abs(t) for t in ts)
                if abs(r) > tol * sc:
                    st.events.append({"kind": "conflict", "witness": list(label),
                                      "residual": float(r)})
                    return pending, "dead", checked
                continue
            if len(unknown) == 1:
                (u,) = unknown
                degree = sum(1 for K in idx if st.key(K) == u)
                roots = _single_unknown(terms, st, u, degree, eps)
                if roots is None:
                    rest.append(eq)
                    continue
                if not roots:
                    st.events.append({"kind": "conflict", "witness": list(label), "residual": None})
                    return pending, "dead", checked
                event = {"kind": "branch", "index": u, "roots": [float(r) for r in roots],
                         "witness": [list(label)]}
                for r in roots[1:]:
                    other = st.copy()
                    other.known[u] = r
                    other.events.append(event)
                    stack.append((other, shell, list(pending)))
                if len(roots) > 1:
                    st.events.append(event)
                st.known[u] = roots[0]
                progress = True
                continue
            rest.append(eq)
        pending = rest
    return pending, "ok", checked


def _pair_groups(pending, st):
    groups = {}
    for label, idx, terms in pending:
        unknown = st.unknowns(idx)
        if len(unknown) == 2:
            groups.setdefault(tuple(unknown), []).append((label, terms))
    return sorted(groups.items(), key=lambda kv: (max(abs(t) for t in kv[0]), kv[0]))


def _affine_pair(pending, st, eps):
    """Solve two affine equations sharing the same two unknowns; True on success."""
    for (u, v), eqs in _pair_groups(pending, st):
        lin = [(label, _affine(terms, st, u, v, eps)) for label, terms in eqs]
        lin = [(label, c) for label, c in lin if c is not None]
        for i in range(len(lin)):
            for j in range(i + 1, len(lin)):
                (A1, B1, C1), (A2, B2, C2) = lin[i][1], lin[j][1]
                det = A1 * B2 - A2 * B1
                if abs(det) <= mpmath.sqrt(eps) * (abs(A1 * B2) + abs(A2 * B1)):
                    continue
                st.known[u] = (B1 * C2 - B2 * C1) / det
                st.known[v] = (A2 * C1 - A1 * C2) / det
                return True
    return False


def _branch_on_pair(pending, st, eps):
    """Eliminate a second unknown between two equations linear in it.

    Returns (u, roots, witness) for the first compatible pair whose condition
    on u has real roots, or None.
    """
    su, sv = sympy.symbols("u v")
    digits = mpmath.mp.dps
    for (u, v), eqs in _pair_groups(pending, st):
        lookup = st.lookup({u: su, v: sv})

        def symbolic(K):
            val = lookup(K)
            return val if isinstance(val, sympy.Basic) else sympy.Float(str(val), digits)

        lin = []
        for label, t in eqs:
            poly = sympy.Poly(sympy.expand(sum(t(symbolic))), sv)
            if poly.degree() == 1:
                A, B = poly.all_coeffs()
                lin.append((label, A, B))
        for i in range(len(lin)):
            for j in range(i + 1, len(lin)):
                # both equations linear in v: they agree iff A_i B_j = A_j B_i
                res = sympy.Poly(sympy.expand(lin[i][1] * lin[j][2] - lin[j][1] * lin[i][2]), su)
                cs = [mpmath.mpf(str(c)) for c in res.all_coeffs()]
                big = max((abs(c) for c in cs), default=0)
                if big == 0:
                    continue
                while abs(cs[0]) <= mpmath.sqrt(eps) * big:
                    cs = cs[1:]
                if len(cs) < 2:
                    continue
                roots = mpmath.polyroots(cs, maxsteps=200, extraprec=2 * mpmath.mp.prec)
                real = sorted((mpmath.re(r) for r in roots
                               if abs(mpmath.im(r)) <= mpmath.sqrt(eps) * max(1, abs(r))),
                              reverse=True)
                if real:
                    return u, real, [lin[i][0], lin[j][0]]
    return None


def _fork(st, stack, shell, pending, u, roots, witness):
    event = {"kind": "branch", "index": u, "roots": [float(r) for r in roots],
             "witness": [list(w) for w in witness]}
    for r in roots[1:]:
        other = st.copy()
        other.known[u] = r
        other.events.append(event)
        stack.append((other, shell, list(pending)))
    st.events.append(event)
    st.known[u] = roots[0]


def _wanted(kind, N, st):
    if st.parity:
        return range(1, N + 1)
    return [K for K in range(-N, N + 1) if K != 0]


def _sweep(kind, state, N, tol, eps, pi):
    """Add shells 1, 2, ... and solve; returns (finished states, equations checked)."""
    checked = 0
    finished, conflicts = [], []
    stack = [(state, 0, [])]
    limit = 3 * N + 4
    while stack:
        st, shell, pending = stack.pop()
        while True:
            pending, status, n = _propagate(pending, st, tol, eps, stack, shell)
            checked += n
            if status == "dead":
                conflicts.append(st.events[-1])
                break
            missing = [K for K in _wanted(kind, N, st) if K not in st.known]
            if shell >= N and not missing:
                finished.append(st)
                break
            if _affine_pair(pending, st, eps):
                continue
            if missing and shell >= N + 2:
                found = _branch_on_pair(pending, st, eps)
                if found is not None:
                    _fork(st, stack, shell, pending, *found)
                    continue
            if shell >= limit:
                raise Underdetermined(f"coefficients {missing[:4]} not fixed by the sweep")
            shell += 1
            pending = pending + _equations(kind, shell, pi)
    if not finished:
        raise InconsistentSeeds("every branch hits a contradiction", conflicts[-1]["witness"])
    # the running state keeps the largest root, so finished is already ordered
    return finished, checked


def default_dps(kind, N):
    """Working digits: the general recurrence loses about three digits per shell."""
    return 30 + 4 * N if kind == "general" else 30


def discrete_solve(kind, seeds, N, branch=None, a0=None, tol=1e-9, dps=None):
    """Solve a coefficient recurrence shell by shell up to |K| <= N.

    general            seeds {-2: a, -1: b, 1: c}, or {"beta": b, "alpha": a}
                       for the closed-form seeds computed at working precision
    even_pole          seeds {"beta": beta} or {1: a_1}; even, a_0 free
    even_pole_a0zero   seeds as even_pole; a_0 = 0 and the three-momentum
                       functional over positive momenta.  a_2 is fixed by a
                       quadratic condition met along the sweep; both roots are
                       returned, largest first, unless ``branch`` (1 or 2)
                       selects one.

    Arithmetic runs in mpmath at ``dps`` digits (see :func:`default_dps`).
    """
    if kind not in DISCRETE_KINDS:
        raise ValueError(f"unknown recurrence {kind!r}")
    if N < 1:
        raise ValueError("N must be positive")
    dps = default_dps(kind, N) if dps is None else int(dps)
    with mpmath.workdps(dps):
        mpf = mpmath.mpf
        seeds = dict(seeds)
        if kind == "general":
            if "beta" in seeds or "alpha" in seeds:
                b, al = mpf(seeds.pop("beta")), mpf(seeds.pop("alpha"))
                seeds.update(general_seeds(b, al))
            missing = {-2, -1, 1} - set(seeds)
            if missing:
                raise ValueError(f"general recurrence needs seeds for {sorted(missing)}")
            known = {int(K): mpf(v) for K, v in seeds.items()}
            parity = False
        else:
            if "beta" in seeds:
                beta = mpf(_beta_ok(seeds.pop("beta")))
                seeds[1] = mpmath.pi * (beta + 1) / (1 - beta)
            if 1 not in seeds:
                raise ValueError(f"{kind} needs beta or a_1")
            known = {abs(int(K)): mpf(v) for K, v in seeds.items()}
            parity = True
        a0_free = kind != "even_pole_a0zero"
        known[0] = mpf(0) if (not a0_free or a0 is None) else mpf(a0)
        eps = mpf(10) ** (-(dps - 8))
        states, checked = _sweep(kind, _State(known, parity, []), N, mpf(tol), eps, +mpmath.pi)
        if branch is not None:
            if not 1 <= branch <= len(states):
                raise ValueError(f"branch must be in 1..{len(states)}")
            states = [states[branch - 1]]
        events = [e for e in states[0].events if e["kind"] == "branch"]
        branches = []
        for st in states:
            a = {K: float(v) for K, v in st.known.items() if abs(K) <= N}
            branches.append(FourierSeq(a, parity, a0_free, kind))
    return DiscreteResult(kind, branches, events, checked, dps)


def solves_general(seq, N, tol=1e-9):
    """Worst scaled residual of the general recurrence over 1 <= |K|, |L| <= N."""
    worst = 0.0
    for K in range(-N, N + 1):
        for L in range(-N, N + 1):
            if not K or not L or abs(K + L) > seq.cutoff:
                continue
            ts = [K * seq[-L] * seq[-K - L], L * seq[K] * seq[K + L], -(K + L) * seq[-K] * seq[L]]
            s = max(abs(t) for t in ts)
            if s:
                worst = max(worst, abs(sum(ts)) / s)
    return worst


def shift_family(seq, m):
    """Multiply a_K by exp(2 pi i K m / 3): the one-third period shifts."""
    if m not in (1, 2):
        raise ValueError("m must be 1 or 2")
    a = {}
    for K in seq.indices:
        if K == 0 and seq.a0_free:
            a[0] = seq[0]
            continue
        a[K] = complex(seq[K]) * complex(np.exp(2j * math.pi * K * m / 3.0))
    # the multipliers break evenness, so store both signs
    return FourierSeq(a, False, seq.a0_free, seq.kind + f"+shift{m}")


def seed_sweep(beta, alpha, factors, N=12):
    """Solve the general recurrence with a_{-2} scaled by each factor and describe growth."""
    rows = []
    for fac in factors:
        with mpmath.workdps(default_dps("general", N)):
            seeds = general_seeds(mpmath.mpf(beta), mpmath.mpf(alpha))
            seeds[-2] = seeds[-2] * mpmath.mpf(fac)
        try:
            seq = discrete_solve("general", seeds, N).seq
        except (InconsistentSeeds, Underdetermined, ZeroDivisionError, OverflowError) as exc:
            rows.append({"factor": float(fac), "error": str(exc)})
            continue
        pos = [abs(complex(seq[K])) for K in range(1, N + 1)]
        neg = [abs(complex(seq[-K])) for K in range(1, N + 1)]
        signs = [np.sign(complex(seq[K]).real) for K in range(1, N + 1)]
        rows.append({
            "factor": float(fac),
            "tail_abs": float(max(pos[-1], neg[-1])),
            "head_abs": float(max(pos[0], neg[0])),
            "sign_changes": int(sum(1 for i in range(1, N) if signs[i] != signs[i - 1])),
            "decays": bool(max(pos[-1], neg[-1]) < 1e-3 * max(pos[0], neg[0])),
        })
    return rows


def growth_rate(seq):
    """a_K / (pi |K|) at the largest index: +-1 for a unit double pole, 0 if decaying."""
    N = seq.cutoff
    ends = [complex(seq[N]), complex(seq[-N])] if (N in seq and -N in seq) else [complex(seq[N])]
    return [e / (math.pi * N) for e in ends]


def resum(seq, x, cutoff=None, tol=1e-8):
    """(1/2 pi) sum_K a_K e^{iKx} with the linear pi|K| growth summed in closed form.

    A double pole makes a_K grow like s pi |K| (s = +-1); that part sums (in the
    Abel sense) to -s/(4 sin^2(x/2)) and only the decaying remainder is added
    term by term.  a_0 counts as zero when it is free.
    """
    N = seq.cutoff if cutoff is None else min(int(cutoff), seq.cutoff)
    rates = growth_rate(FourierSeq({K: v for K, v in seq.a.items() if abs(K) <= N},
                                   seq.parity, seq.a0_free))
    s = round(float(np.real(rates[0])))
    if any(abs(r - s) > 1e-3 for r in rates):
        raise DivergentSeries("coefficients neither decay nor grow like pi |K|")
    x = np.asarray(x, dtype=float)
    total = np.zeros(x.shape, dtype=complex)
    last = 0.0
    for K in range(-N, N + 1):
        if K not in seq:
            continue
        if K == 0 and seq.a0_free:
            continue
        r = complex(seq[K]) - s * math.pi * abs(K)
        total = total + r * np.exp(1j * K * x)
        if abs(K) == N:
            last = max(last, abs(r))
    head = max(abs(complex(seq[K]) - s * math.pi * abs(K)) for K in (1, -1) if K in seq)
    if last > tol * max(head, 1.0):
        raise DivergentSeries(f"remainder still {last:.3g} at |K| = {N}")
    total = total / (2.0 * math.pi)
    if s:
        total = total - s / (4.0 * np.sin(0.5 * x) ** 2)
    if np.all(np.abs(total.imag) <= 1e-12 * np.maximum(1.0, np.abs(total.real))):
        total = total.real
    return total[()] if total.ndim == 0 else total


def periodized(spec, x, period=2.0 * math.pi, terms=20):
    """sum_p f(x - p period) over |p| <= terms, for a family decaying along the real axis."""
    x = np.asarray(x, dtype=float)
    out = 0.0
    for p in range(-terms, terms + 1):
        out = out + derivatives(spec, x - p * period, 0)[0]
    return out


def modulus_from_nome(q):
    """Inverse of the nome map on 0 < q < 1, from k = (theta_2(0)/theta_3(0))^2."""
    if not 0.0 < q < 1.0:
        raise ValueError("nome must lie in (0, 1)")
    k = (theta(2, 0.0, q) / theta(3, 0.0, q)) ** 2
    if k >= 1.0:
        # beyond q ~ 0.72 the modulus is within one ulp of 1
        raise ValueError(f"nome {q} is too close to 1 for a double-precision modulus")
    return float(k)


def lattice_for_beta(beta):
    """2 pi real-period lattice whose nome is sqrt(beta), as EllipticParams."""
    k = modulus_from_nome(math.sqrt(beta))
    K, _ = complete_k(k)
    return EllipticParams.from_modulus(k, (K / math.pi) ** 2)


# --- indented generalized transforms -------------------------------------------

INDENT_RADIUS = 1e-3
TRUNCATION = 40.0


def _quad(fn, a, b, rtol=1e-13):
    re = tanhsinh(lambda t: np.real(fn(t)), a, b, rtol=rtol, atol=0.0)
    im = tanhsinh(lambda t: np.imag(fn(t)), a, b, rtol=rtol, atol=0.0)
    return complex(re.integral, im.integral)


def _values(spec, z):
    return derivatives(spec, z, 0)[0]


def _tail_coefficient(spec, X):
    """c when f ~ c/x^2 at both ends beyond X, 0 when negligible, else None."""
    ends = [complex(_values(spec, np.array([s * X], dtype=float))[0]) for s in (1, -1)]
    ref = max(abs(complex(_values(spec, np.array([1.0]))[0])), 1.0)
    if max(abs(e) for e in ends) <= 1e-14 * ref:
        return 0.0
    c = ends[0] * X * X
    half = complex(_values(spec, np.array([2.0 * X]))[0]) * 4 * X * X
    back = ends[1] * X * X
    if abs(half - c) <= 1e-6 * abs(c) and abs(back - c) <= 1e-6 * abs(c):
        return c
    return None


def _cos_tail(k, X):
    """int_X^inf cos(k x)/x^2 dx."""
    k = abs(k)
    if k == 0.0:
        return 1.0 / X
    si, _ = special.sici(k * X)
    return math.cos(k * X) / X - k * (0.5 * math.pi - si)


def indented_transforms(spec, k, radius=INDENT_RADIUS, X=TRUNCATION):
    """(f_U, f_L): contours passing above and below every real pole in the window.

    Decaying families use the window [-X, X] (plus an exact c/x^2 tail when
    the decay is algebraic); families with real poles on a lattice use one
    real period centred on the pole at the origin, giving a Fourier
    coefficient rather than a transform.
    """
    if not isinstance(spec, SolutionSpec):
        raise TypeError("spec must be a SolutionSpec")
    k = float(k)
    period = spec.real_period
    if period:
        pp = spec.pole_period or period
        lo, hi = -0.5 * pp, period - 0.5 * pp
        poles = [m * pp for m in range(int(round(period / pp)))]
        tail = 0.0
    else:
        # growing families overflow while being probed; that is the rejection path
        with np.errstate(over="ignore", invalid="ignore"):
            c = _tail_coefficient(spec, X)
            # slow exponential decay: widen the window until the ends are negligible
            while c is None and X < 16 * TRUNCATION:
                X *= 2.0
                c = _tail_coefficient(spec, X)
        if c is None:
            raise UnsupportedFamily(f"{spec.family} neither decays nor is periodic on the real axis")
        lo, hi, poles, tail = -X, X, [0.0], 2.0 * c * _cos_tail(k, X)

    def line(t):
        return _values(spec, t) * np.exp(-1j * k * t)

    def arc(center, sign):
        # z = center + r e^{i theta}, theta from pi to 0 (above) or -pi to 0 (below)
        def g(th):
            z = center + radius * np.exp(1j * th)
            return _values(spec, z) * np.exp(-1j * k * z) * 1j * radius * np.exp(1j * th)
        return -_quad(g, 0.0, sign * math.pi) if sign > 0 else _quad(g, -math.pi, 0.0)

    straight = 0.0
    edges = [lo] + [e for p in poles for e in (p - radius, p + radius)] + [hi]
    for a, b in zip(edges[0::2], edges[1::2]):
        mid = [a]
        # split long pieces so the endpoint clustering sees both the pole and the far end
        for p in poles:
            if a < p + 1.0 < b:
                mid.append(p + 1.0)
            if a < p - 1.0 < b:
                mid.append(p - 1.0)
        mid = sorted(set(mid)) + [b]
        for u, v in zip(mid[:-1], mid[1:]):
            straight += _quad(line, u, v)
    upper = straight + sum(arc(p, 1) for p in poles) + tail
    lower = straight + sum(arc(p, -1) for p in poles) + tail
    return upper, lower


def generalized_ft(spec, k, radius=INDENT_RADIUS, X=TRUNCATION):
    """Mean of the two indented transforms; real part for even families."""
    up, low = indented_transforms(spec, k, radius, X)
    val = 0.5 * (up + low)
    return float(val.real) if abs(val.imag) <= 1e-9 * max(1.0, abs(val)) else val


def residue_jump(spec, k, radius=INDENT_RADIUS, X=TRUNCATION):
    """f_L - f_U; equals 2 pi k times the double-pole coefficient."""
    up, low = indented_transforms(spec, k, radius, X)
    return low - up
