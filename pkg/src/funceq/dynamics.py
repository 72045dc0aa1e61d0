"""Relativistic and non-relativistic many-body observables.

The relativistic observables are

    H = sum_j cosh(p_j) prod_{k != j} F(x_j - x_k)
    P = sum_j sinh(p_j) prod_{k != j} F(x_j - x_k)
    B = -sum_j x_j

with F = sqrt(f).  {H, B} = P and {P, B} = H hold for any F; {H, P} = 0 is
equivalent to f solving the functional equation for n + 1 particles.
"""

import csv
import io
import json
from dataclasses import dataclass

import numpy as np

from . import kernels
from .families import derivatives
from .special_functions import weierstrass_p


class SquareRootWindowError(ValueError):
    """f is negative at some separation, so F = sqrt(f) is not real."""


@dataclass(frozen=True)
class PhaseState:
    x: tuple
    p: tuple

    def __post_init__(self):
        if len(self.x) != len(self.p):
            raise ValueError("positions and momenta must have equal length")

    @classmethod
    def of(cls, x, p):
        return cls(tuple(float(t) for t in x), tuple(float(t) for t in p))

    @property
    def arrays(self):
        return np.array(self.x), np.array(self.p)


@dataclass(frozen=True)
class ObservableValue:
    """Value and canonical gradients of an observable at one state."""

    value: float
    dx: np.ndarray
    dp: np.ndarray


def _sqrt_tables(spec, x):
    m = x.size
    diff = x[:, None] - x[None, :]
    off = ~np.eye(m, dtype=bool)
    d = derivatives(spec, diff[off], 1)
    f, fp = np.real(d[0]), np.real(d[1])
    if np.any(f <= 0):
        raise SquareRootWindowError("f <= 0 at a separation; F = sqrt(f) is not real here")
    F = np.ones((m, m))
    Fp = np.zeros((m, m))
    root = np.sqrt(f)
    F[off] = root
    Fp[off] = fp / (2.0 * root)
    return F, Fp


def rs_observables(state, spec):
    """(H, P, B) with analytic gradients for F^2 = f."""
    x, p = state.arrays
    F, Fp = _sqrt_tables(spec, x)
    H, P, dHdx, dHdp, dPdx, dPdp = kernels.rs_gradients(x, p, F, Fp)
    B = ObservableValue(-float(x.sum()), -np.ones_like(x), np.zeros_like(x))
    return (ObservableValue(float(H), np.asarray(dHdx), np.asarray(dHdp)),
            ObservableValue(float(P), np.asarray(dPdx), np.asarray(dPdp)), B)


def poisson_bracket(A, B, state=None):
    """Canonical bracket sum_j dA/dx_j dB/dp_j - dA/dp_j dB/dx_j."""
    return float(np.sum(A.dx * B.dp - A.dp * B.dx))


def bracket_scale(A, B):
    """Largest single product entering the bracket."""
    return float(max(np.max(np.abs(A.dx * B.dp)), np.max(np.abs(A.dp * B.dx))))


def normalized_bracket(A, B):
    s = bracket_scale(A, B)
    return abs(poisson_bracket(A, B)) / s if s > 0 else 0.0


def coordinate(j, m, momentum=False):
    """x_j (or p_j) as an observable on m particles, for bracket tests."""
    e = np.zeros(m)
    e[j] = 1.0
    z = np.zeros(m)
    return ObservableValue(0.0, z, e) if momentum else ObservableValue(0.0, e, z)


def cm_hamiltonian(state, params):
    """0.5 sum p^2 + (1/6) sum_{i != j} P(x_i - x_j) with gradients."""
    x, p = state.arrays
    m = x.size
    diff = x[:, None] - x[None, :]
    off = ~np.eye(m, dtype=bool)
    wp, dwp = weierstrass_p(diff[off], params)
    V = np.zeros((m, m))
    dV = np.zeros((m, m))
    V[off] = wp
    dV[off] = dwp
    value = 0.5 * float(p @ p) + V.sum() / 6.0
    # each unordered pair appears twice in the double sum
    dx = dV.sum(axis=1) / 3.0
    return ObservableValue(value, dx, p.copy())


def rs_hamiltonian(spec):
    return lambda state: rs_observables(state, spec)[0]


def rs_momentum(spec):
    return lambda state: rs_observables(state, spec)[1]


def cm_energy(params):
    return lambda state: cm_hamiltonian(state, params)


def total_momentum(state):
    _, p = state.arrays
    m = p.size
    return ObservableValue(float(p.sum()), np.zeros(m), np.ones(m))


@dataclass
class Trajectory:
    times: np.ndarray
    x: np.ndarray
    p: np.ndarray
    H: np.ndarray
    P: np.ndarray
    truncated: bool
    steps: int = 0

    @property
    def drift_H(self):
        return float(np.max(np.abs(self.H - self.H[0])))

    @property
    def drift_P(self):
        return float(np.max(np.abs(self.P - self.P[0])))

    def summary(self):
        return {"steps": int(self.steps), "t_final": float(self.times[-1]),
                "drift_H": self.drift_H, "drift_P": self.drift_P,
                "truncated": bool(self.truncated)}

    def to_csv(self):
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        m = self.x.shape[1]
        w.writerow(["t"] + [f"x{i + 1}" for i in range(m)] + [f"p{i + 1}" for i in range(m)]
                   + ["H", "P"])
        for i in range(len(self.times)):
            w.writerow([repr(float(v)) for v in
                        [self.times[i], *self.x[i], *self.p[i], self.H[i], self.P[i]]])
        return buf.getvalue()

    def summary_json(self):
        return json.dumps(self.summary(), sort_keys=True)


def integrate(state, H, dt, steps, monitor=None, guard=1e-3, record_every=1):
    """Classical RK4 on Hamilton's equations.

    ``H`` maps a PhaseState to an ObservableValue; ``monitor`` is a second
    observable tracked alongside (total momentum by default).  Integration
    stops early, with ``truncated`` set, if two particles come within
    ``guard`` of each other.
    """
    monitor = monitor or total_momentum
    x, p = state.arrays

    def rhs(xx, pp):
        g = H(PhaseState(tuple(xx), tuple(pp)))
        return g.dp, -g.dx

    keep_t, keep_x, keep_p, keep_H, keep_P = [], [], [], [], []

    def record(t, xx, pp):
        s = PhaseState(tuple(xx), tuple(pp))
        keep_t.append(t)
        keep_x.append(xx.copy())
        keep_p.append(pp.copy())
        keep_H.append(H(s).value)
        keep_P.append(monitor(s).value)

    record(0.0, x, p)
    truncated = False
    m = x.size
    done = 0
    for step in range(1, steps + 1):
        k1x, k1p = rhs(x, p)
        k2x, k2p = rhs(x + 0.5 * dt * k1x, p + 0.5 * dt * k1p)
        k3x, k3p = rhs(x + 0.5 * dt * k2x, p + 0.5 * dt * k2p)
        k4x, k4p = rhs(x + dt * k3x, p + dt * k3p)
        x = x + dt / 6.0 * (k1x + 2 * k2x + 2 * k3x + k4x)
        p = p + dt / 6.0 * (k1p + 2 * k2p + 2 * k3p + k4p)
        done = step
        sep = np.abs(x[:, None] - x[None, :])[~np.eye(m, dtype=bool)]
        if sep.size and sep.min() < guard:
            truncated = True
            record(step * dt, x, p)
            break
        if step % record_every == 0 or step == steps:
            record(step * dt, x, p)
    return Trajectory(np.array(keep_t), np.array(keep_x), np.array(keep_p),
                      np.array(keep_H), np.array(keep_P), truncated, done)
