"""Truncated Taylor arithmetic on numpy arrays.

A jet of order M at points z0 is an array ``t`` of shape (M+1, ...) with
``t[m] = f^(m)(z0) / m!``.  All operations act along axis 0 and broadcast over
the remaining axes, so one call handles a whole batch of sample points.
"""

import math

import numpy as np


def mul(a, b):
    M = a.shape[0]
    out = np.zeros(np.broadcast_shapes(a.shape, b.shape), dtype=np.result_type(a, b))
    for m in range(M):
        for i in range(m + 1):
            out[m] += a[i] * b[m - i]
    return out


def recip(a):
    M = a.shape[0]
    out = np.zeros_like(a)
    out[0] = 1.0 / a[0]
    for m in range(1, M):
        acc = np.zeros_like(a[0])
        for i in range(1, m + 1):
            acc = acc + a[i] * out[m - i]
        out[m] = -acc * out[0]
    return out


def sqrt(a, root0):
    """Square root with the leading value ``root0`` chosen by the caller."""
    M = a.shape[0]
    out = np.zeros(a.shape, dtype=np.result_type(a, root0))
    out[0] = root0
    for m in range(1, M):
        acc = a[m]
        for i in range(1, m):
            acc = acc - out[i] * out[m - i]
        out[m] = acc / (2.0 * root0)
    return out


def scale_argument(t, c):
    """Jet of g(z) = f(c z) given the jet of f at c z0."""
    pw = np.array([c ** m for m in range(t.shape[0])])
    return t * pw.reshape((-1,) + (1,) * (t.ndim - 1))


def to_derivatives(t):
    fac = np.array([math.factorial(m) for m in range(t.shape[0])], dtype=float)
    return t * fac.reshape((-1,) + (1,) * (t.ndim - 1))


def from_values(values, order):
    """Jet whose m-th entry is values[m]/m!, for cyclic derivative data."""
    out = np.zeros((order + 1,) + np.shape(values[0]), dtype=np.result_type(*values))
    for m in range(order + 1):
        out[m] = values[m % len(values)] / math.factorial(m)
    return out


def cosh_sinh(w, order):
    """Jets of cosh and sinh at w (unit argument scale)."""
    ch, sh = np.cosh(w), np.sinh(w)
    return from_values([ch, sh], order), from_values([sh, ch], order)


def sin_jet(w, order):
    s, c = np.sin(w), np.cos(w)
    return from_values([s, c, -s, -c], order)


def weierstrass(p, dp, g2, order):
    """Jet of the Weierstrass function from its value, slope and g2."""
    out = np.zeros((order + 1,) + np.shape(p), dtype=np.result_type(p, dp))
    out[0] = p
    if order >= 1:
        out[1] = dp
    # p'' = 6 p^2 - g2/2, so (m+2)(m+1) t[m+2] = 6 (t*t)[m] - g2/2 [m == 0]
    for m in range(order - 1):
        acc = np.zeros_like(out[0])
        for i in range(m + 1):
            acc = acc + out[i] * out[m - i]
        acc = 6.0 * acc
        if m == 0:
            acc = acc - 0.5 * g2
        out[m + 2] = acc / ((m + 2) * (m + 1))
    return out


def jacobi(sn, cn, dn, k, order):
    """Jets of sn, cn, dn from sn' = cn dn, cn' = -sn dn, dn' = -k^2 sn cn."""
    shape = (order + 1,) + np.shape(sn)
    s, c, d = np.zeros(shape), np.zeros(shape), np.zeros(shape)
    s[0], c[0], d[0] = sn, cn, dn
    m2 = k * k
    for m in range(order):
        cd = sum(c[i] * d[m - i] for i in range(m + 1))
        sd = sum(s[i] * d[m - i] for i in range(m + 1))
        sc = sum(s[i] * c[m - i] for i in range(m + 1))
        s[m + 1] = cd / (m + 1)
        c[m + 1] = -sd / (m + 1)
        d[m + 1] = -m2 * sc / (m + 1)
    return s, c, d
