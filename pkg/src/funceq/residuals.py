"""Residuals of the functional equation and of its derived ODEs.

The n-particle residual is sum_i d/dx_i prod_{j != i} f(x_i - x_j) over n+1
particles.  It is expanded with the product rule,

    sum_i sum_{l != i} f'(x_i - x_l) prod_{j != i, l} f(x_i - x_j),

so that only f and f' are needed.  Every residual is reported next to the
largest single term of its sum; their ratio is the scale-free figure used for
classification.
"""

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .families import derivatives, laurent_coefficients

SOLVE_TOL = 1e-8
FAIL_TOL = 1e-2


class DegenerateFamily(ValueError):
    """Least-squares system for the first integral is rank deficient."""


def _pair_tables(spec, x):
    """f and f' at every ordered difference x_i - x_j (diagonal filled with 1, 0)."""
    x = np.atleast_2d(np.asarray(x, dtype=float))
    diff = x[:, :, None] - x[:, None, :]
    m = x.shape[1]
    off = ~np.eye(m, dtype=bool)
    vals = diff[:, off]
    d = derivatives(spec, vals, 1)
    F = np.ones(diff.shape, dtype=d.dtype)
    Fp = np.zeros(diff.shape, dtype=d.dtype)
    F[:, off] = d[0]
    Fp[:, off] = d[1]
    return F, Fp


def pde_terms(spec, n, x):
    """Residual and largest term magnitude for each sample row of x."""
    x = np.atleast_2d(np.asarray(x, dtype=float))
    if x.shape[1] != n + 1:
        raise ValueError(f"expected {n + 1} coordinates per sample, got {x.shape[1]}")
    F, Fp = _pair_tables(spec, x)
    return kernels.residual_and_scale(F, Fp)


def pde_residual(spec, n, x):
    """Residual of the n-particle equation at one point x (length n+1)."""
    res, _ = pde_terms(spec, n, x)
    return complex(res[0]) if np.iscomplexobj(res) else float(res[0])


def pde_residual_even_form(spec, x):
    """Three-particle residual written with w = x3 - x1 (valid for even f)."""
    x1, x2, x3 = (float(t) for t in x)
    u, v, w = x1 - x2, x2 - x3, x3 - x1
    d = derivatives(spec, np.array([u, v, w]), 1)
    f, fp = d[0], d[1]
    # d1[f(u) f(w)] + d2[f(v) f(u)] + d3[f(w) f(v)]
    return (fp[0] * f[2] - f[0] * fp[2]) + (fp[1] * f[0] - f[1] * fp[0]) \
        + (fp[2] * f[1] - f[2] * fp[1])


def determinant_residual(spec, u, v, normalized=False):
    """det[(1,1,1), (f(u),f(v),f(w)), (f'(u),f'(v),f'(w))] with w = -u-v."""
    w = -u - v
    d = derivatives(spec, np.array([u, v, w], dtype=float), 1)
    f, fp = d[0], d[1]
    terms = np.array([f[1] * fp[2], -f[2] * fp[1], -f[0] * fp[2],
                      f[2] * fp[0], f[0] * fp[1], -f[1] * fp[0]])
    det = terms.sum()
    if normalized:
        scale = np.max(np.abs(terms))
        return float(abs(det) / scale) if scale > 0 else 0.0
    return det.real if np.isrealobj(det) or det.imag == 0 else det


def _normed(terms):
    total = sum(terms)
    scale = max(abs(t) for t in terms)
    return float(abs(total) / scale) if scale > 0 else 0.0


def ode_residuals(spec, z):
    """Normalized residuals of f'f''' - f''^2 and of the fifth-order ODE."""
    d = derivatives(spec, float(z), 5)
    f1, f2, f3, f4, f5 = (d[m] for m in range(1, 6))
    r16 = _normed([f1 * f3, -f2 * f2])
    r18 = _normed([f1 * f1 * f5, -3 * f1 * f2 * f4, 3 * f2 * f2 * f3, -f1 * f3 * f3])
    return {"r16": r16, "r18": r18}


def fit_first_integral(spec, sample_zs, validation_zs=None):
    """Least-squares (A, B, C, D) in f'^2 + A f^3 + B f^2 + C f + D = 0.

    Returns (A, B, C, D, residual) with the residual measured on a fresh
    validation set (midpoints of the sorted samples unless given) and scaled
    by the largest term there.
    """
    zs = np.sort(np.asarray(sample_zs, dtype=float))
    if zs.size < 4:
        raise ValueError("need at least four sample points")
    d = derivatives(spec, zs, 1)
    f, fp = np.real(d[0]), np.real(d[1])
    M = np.stack([f ** 3, f ** 2, f, np.ones_like(f)], axis=1)
    col = np.max(np.abs(M), axis=0)
    col[col == 0] = 1.0
    sol, _, rank, sv = np.linalg.lstsq(M / col, -fp ** 2, rcond=None)
    if rank < 4 or sv[-1] < 1e-12 * sv[0]:
        raise DegenerateFamily(f"moment matrix rank {rank}: no unique cubic first integral")
    A, B, C, D = sol / col
    if validation_zs is None:
        validation_zs = 0.5 * (zs[1:] + zs[:-1])
    dv = derivatives(spec, np.asarray(validation_zs, dtype=float), 1)
    fv, fpv = np.real(dv[0]), np.real(dv[1])
    terms = np.stack([fpv ** 2, A * fv ** 3, B * fv ** 2, C * fv, D * np.ones_like(fv)])
    scale = np.max(np.abs(terms), axis=0)
    residual = float(np.max(np.abs(terms.sum(axis=0)) / scale))
    return float(A), float(B), float(C), float(D), residual


def laurent_constants(spec, count=4):
    """Floating a_0..a_{count-1} of the family's Laurent data."""
    return [float(c) for c in laurent_coefficients(spec, count - 1).coeffs]


def odeA1_residuals(spec, z, a=None):
    """Normalized residuals of the two n=3 expansion ODEs at z.

    ``a`` holds the Laurent constants a_0..a_3; by default they are taken from
    the family itself.
    """
    if a is None:
        a = laurent_constants(spec)
    a0, a1, a2, a3 = (float(t) for t in a)
    d = derivatives(spec, float(z), 5)
    f, f1, f2, f3, f4, f5 = (d[m] for m in range(6))
    rA11 = _normed([120 * a2 * f1 * f, 5 * a0 * f3 * f2, 60 * f2 * f1 * a1, -a0 * f5 * f])
    rA12 = _normed([
        504 * a3 * f1 * f * f, 1080 * f1 * a2 * f2 * f, 36 * f4 * f1 * a1 * f,
        15 * f1 * a0 * f3 * f3, 180 * f1 * f2 * f2 * a1, 180 * f3 * f1 * f1 * a1,
        -3 * a0 * f5 * f1 * f1, 360 * f1 ** 3 * a2, 15 * f1 * a0 * f4 * f2,
        -60 * f2 * a1 * f3 * f, -12 * a0 * f4 * f3 * f, 240 * f3 * a2 * f * f,
        a0 * f5 * f2 * f,
    ])
    return {"rA11": rA11, "rA12": rA12}


def method2_residual(spec, z, a=None):
    """Normalized residual of a_0 f''' + 12 a_1 f' - 12 f f' (two-body expansion)."""
    if a is None:
        a = laurent_constants(spec, 2)
    a0, a1 = float(a[0]), float(a[1])
    d = derivatives(spec, float(z), 3)
    f, f1, f3 = d[0], d[1], d[3]
    return _normed([a0 * f3, 12 * a1 * f1, -12 * f * f1])


# --- sampling and classification ------------------------------------------------

@dataclass(frozen=True)
class SamplePlan:
    n: int
    count: int = 200
    delta: float | None = None
    box: tuple | None = None
    seed: int = 0

    def __post_init__(self):
        if self.n < 1 or self.count < 1:
            raise ValueError("need n >= 1 and count >= 1")
        if self.delta is not None and self.delta <= 0:
            raise ValueError("delta must be positive")


@dataclass
class Verdict:
    family: str
    n: int
    max_abs_residual: float
    normalized: float
    solves: bool
    status: str
    failures: list = field(default_factory=list)
    rejected: int = 0

    def to_dict(self):
        return {"family": self.family, "n": self.n,
                "max_abs_residual": self.max_abs_residual,
                "normalized": self.normalized, "solves": self.solves}


def _window(spec, plan):
    if plan.box is not None:
        return tuple(plan.box)
    per = spec.real_period
    return (0.0, per) if per else (-5.0, 5.0)


def _separation_ok(x, period, delta):
    d = np.abs(x[:, :, None] - x[:, None, :])
    if period:
        d = np.abs(d - period * np.round(d / period))
    m = x.shape[1]
    d[:, np.arange(m), np.arange(m)] = np.inf
    return np.min(d.reshape(len(x), -1), axis=1) > delta


def draw_samples(spec, plan):
    """Sample points for a plan, honouring the hyperplane guard.

    Rejected rows are redrawn up to 100 times; returns (points, rejected).
    """
    lo, hi = _window(spec, plan)
    period = spec.pole_period
    delta = plan.delta
    if delta is None:
        delta = 0.02 * (period if period else 1.0)
    rng = np.random.default_rng(plan.seed)
    x = rng.uniform(lo, hi, size=(plan.count, plan.n + 1))
    ok = _separation_ok(x, period, delta)
    rejected = int((~ok).sum())
    for _ in range(100):
        if ok.all():
            break
        bad = np.flatnonzero(~ok)
        x[bad] = rng.uniform(lo, hi, size=(bad.size, plan.n + 1))
        ok[bad] = _separation_ok(x[bad], period, delta)
        rejected += int((~ok[bad]).sum())
    if not ok.all():
        x = x[ok]
    return x, rejected


def thread_count(threads=None):
    if threads is None:
        threads = int(os.environ.get("FE_THREADS", "1") or 1)
    return max(1, int(threads))


def classify(spec, n, plan=None, threads=None):
    """Decide whether spec solves the n-particle equation on sampled points."""
    plan = plan or SamplePlan(n)
    x, rejected = draw_samples(spec, plan)
    workers = thread_count(threads)
    chunks = np.array_split(np.arange(len(x)), workers)
    res = np.zeros(len(x))
    scl = np.zeros(len(x))

    def job(idx):
        if idx.size:
            r, s = pde_terms(spec, n, x[idx])
            res[idx] = np.abs(r)
            scl[idx] = s

    if workers == 1:
        job(chunks[0])
    else:
        with ThreadPoolExecutor(workers) as pool:
            list(pool.map(job, chunks))
    with np.errstate(invalid="ignore", divide="ignore"):
        normed = np.where(scl > 0, res / np.where(scl > 0, scl, 1.0), 0.0)
    worst = float(np.max(normed)) if normed.size else 0.0
    if worst < SOLVE_TOL:
        status = "solves"
    elif worst > FAIL_TOL:
        status = "fails"
    else:
        status = "indeterminate"
    order = np.argsort(normed)[::-1][:5]
    failures = [{"x": [float(t) for t in x[i]], "normalized": float(normed[i])}
                for i in order if normed[i] >= SOLVE_TOL]
    return Verdict(spec.family, n, float(np.max(res)) if res.size else 0.0, worst,
                   status == "solves", status, failures, rejected)

