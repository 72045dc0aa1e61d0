"""Pure numpy implementations of the hot loops (fallback for the compiled core)."""

import numpy as np


def residual_and_scale(F, Fp):
    """Product-rule residual and largest term per sample.

    F[s, i, j] = f(x_i - x_j) with the diagonal set to 1, and Fp holds f' with
    a zero diagonal.  Term (i, l) is Fp[i, l] times the product of F[i, j]
    over j != l; exclusive prefix and suffix products avoid dividing by f.
    """
    ones = np.ones(F.shape[:2] + (1,), dtype=F.dtype)
    prefix = np.concatenate([ones, np.cumprod(F[:, :, :-1], axis=2)], axis=2)
    suffix = np.concatenate([np.cumprod(F[:, :, :0:-1], axis=2)[:, :, ::-1], ones], axis=2)
    terms = Fp * prefix * suffix
    res = terms.sum(axis=(1, 2))
    scale = np.abs(terms).max(axis=(1, 2))
    return res, scale


def rs_gradients(x, p, F, Fp):
    """Values and gradients of H = sum cosh p_j prod F and P = sum sinh p_j prod F.

    F[i, j] = F(x_i - x_j) (diagonal 1) and Fp its derivative (diagonal 0).
    Returns (H, P, dH/dx, dH/dp, dP/dx, dP/dp).
    """
    m = x.shape[0]
    prod = np.prod(F, axis=1)
    ch, sh = np.cosh(p), np.sinh(p)
    H = float(np.dot(ch, prod))
    P = float(np.dot(sh, prod))
    ones = np.ones((m, 1))
    prefix = np.concatenate([ones, np.cumprod(F[:, :-1], axis=1)], axis=1)
    suffix = np.concatenate([np.cumprod(F[:, :0:-1], axis=1)[:, ::-1], ones], axis=1)
    # d prod_i / d x_i through F(x_i - x_l) and d prod_i / d x_l (opposite sign)
    dprod = Fp * prefix * suffix
    gh = ch[:, None] * dprod
    gp = sh[:, None] * dprod
    dHdx = gh.sum(axis=1) - gh.sum(axis=0)
    dPdx = gp.sum(axis=1) - gp.sum(axis=0)
    return H, P, dHdx, sh * prod, dPdx, ch * prod
