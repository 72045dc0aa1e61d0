# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled versions of the hot loops in _kernels_py."""

import numpy as np
from libc.math cimport cosh, sinh, fabs


def residual_and_scale(double[:, :, ::1] F, double[:, :, ::1] Fp):
    cdef Py_ssize_t S = F.shape[0], m = F.shape[1]
    cdef Py_ssize_t s, i, l, j
    cdef double total, worst, term, pre
    res = np.empty(S)
    scl = np.empty(S)
    cdef double[::1] r = res, c = scl
    cdef double[::1] suffix = np.empty(m + 1)
    for s in range(S):
        total = 0.0
        worst = 0.0
        for i in range(m):
            suffix[m] = 1.0
            for j in range(m - 1, -1, -1):
                suffix[j] = suffix[j + 1] * F[s, i, j]
            pre = 1.0
            for l in range(m):
                if l != i:
                    term = Fp[s, i, l] * pre * suffix[l + 1]
                    total += term
                    if fabs(term) > worst:
                        worst = fabs(term)
                pre *= F[s, i, l]
        r[s] = total
        c[s] = worst
    return res, scl


def rs_gradients(double[::1] x, double[::1] p, double[:, ::1] F, double[:, ::1] Fp):
    cdef Py_ssize_t m = x.shape[0]
    cdef Py_ssize_t i, l, j
    cdef double H = 0.0, P = 0.0, prod, pre, d, ch, sh
    dHdx_a = np.zeros(m)
    dPdx_a = np.zeros(m)
    dHdp_a = np.empty(m)
    dPdp_a = np.empty(m)
    cdef double[::1] dHdx = dHdx_a, dPdx = dPdx_a, dHdp = dHdp_a, dPdp = dPdp_a
    cdef double[::1] suffix = np.empty(m + 1)
    for i in range(m):
        ch = cosh(p[i])
        sh = sinh(p[i])
        suffix[m] = 1.0
        for j in range(m - 1, -1, -1):
            suffix[j] = suffix[j + 1] * F[i, j]
        prod = suffix[0]
        H += ch * prod
        P += sh * prod
        dHdp[i] = sh * prod
        dPdp[i] = ch * prod
        pre = 1.0
        for l in range(m):
            if l != i:
                d = Fp[i, l] * pre * suffix[l + 1]
                dHdx[i] += ch * d
                dHdx[l] -= ch * d
                dPdx[i] += sh * d
                dPdx[l] -= sh * d
            pre *= F[i, l]
    return H, P, dHdx_a, dHdp_a, dPdx_a, dPdp_a
