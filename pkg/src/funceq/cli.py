"""Command-line front end: one subcommand per verification, JSON on stdout.

Exit codes: 0 on success (or a met expectation), 1 when an expectation or
check fails, 2 on usage and spec errors.
"""

import argparse
import json
import math
import os
import sys

import numpy as np

from . import dynamics, finite_part, fourier, residuals, series
from .families import FAMILIES, H_FAMILIES, SolutionSpec, UnsupportedFamily, \
    representation_chain_check
from .special_functions import EllipticParams

# lattice used when a family needs one and none was given
DEFAULT_INVARIANTS = {"g2": 12.0, "g3": -4.0}
DEFAULT_MODULUS = 0.9999
CHAIN_TOL = 1e-9


class UsageError(Exception):
    pass


def _dump(obj, path=None):
    text = json.dumps(obj, sort_keys=True, indent=2, default=_plain)
    if path:
        with open(path, "w") as fh:
            fh.write(text + "\n")
    else:
        sys.stdout.write(text + "\n")


def _plain(x):
    if isinstance(x, (np.floating, np.integer)):
        return x.item()
    if isinstance(x, np.ndarray):
        return x.tolist()
    if isinstance(x, complex):
        return [x.real, x.imag]
    return str(x)


def _load_json(text):
    # inline JSON or a path to a JSON file
    if os.path.exists(text):
        with open(text) as fh:
            return json.load(fh)
    return json.loads(text)


def build_spec(args):
    """SolutionSpec from --spec, or --family with optional --params."""
    try:
        if getattr(args, "spec", None):
            data = _load_json(args.spec)
            return SolutionSpec(data["family"], dict(data.get("params", {})))
        family = args.family
        params = _load_json(args.params) if getattr(args, "params", None) else {}
        if family not in FAMILIES:
            raise UsageError(f"unknown family {family!r}; known: {', '.join(sorted(FAMILIES))}")
        if family == "weierstrass":
            for key, val in DEFAULT_INVARIANTS.items():
                params.setdefault(key, val)
        if family in H_FAMILIES and "k" not in params and "g2" not in params:
            params["k"] = DEFAULT_MODULUS
        return SolutionSpec(family, params)
    except (UnsupportedFamily, ValueError, KeyError, TypeError) as err:
        raise UsageError(str(err)) from None


# --- subcommands -----------------------------------------------------------------


def cmd_verify(args):
    spec = build_spec(args)
    plan = residuals.SamplePlan(args.n, count=args.count, delta=args.delta, seed=args.seed)
    verdict = residuals.classify(spec, args.n, plan, threads=args.threads)
    out = verdict.to_dict()
    out["status"] = verdict.status
    out["rejected"] = verdict.rejected
    _dump(out, args.output)
    print(f"{spec.family} n={args.n}: {verdict.status} (normalized residual "
          f"{verdict.normalized:.3e})", file=sys.stderr)
    if args.expect is None:
        return 0
    return 0 if verdict.status == args.expect else 1


def cmd_series(args):
    if args.taylor:
        report = series.taylor_branch(args.J, seed=args.seed)
        _dump(report.to_dict(), args.output)
        return 0
    report = series.solve_recurrence(args.n, args.J, allow_expensive=args.allow_expensive)
    out = report.to_dict()
    if args.branch is not None:
        if not 1 <= args.branch <= len(report.branches):
            raise UsageError(f"branch must lie in 1..{len(report.branches)}")
        out["branches"] = [out["branches"][args.branch - 1]]
    if not args.levels:
        out.pop("levels")
    _dump(out, args.output)
    return 0


def cmd_fourier(args):
    kind = {"a0zero": "even_pole_a0zero"}.get(args.kind, args.kind)
    if kind == "general":
        alpha = args.alpha if args.alpha is not None else math.exp(math.pi / 6)
        seeds = {"beta": args.beta, "alpha": alpha}
    else:
        seeds = {"beta": args.beta}
    res = fourier.discrete_solve(kind, seeds, args.N, branch=args.branch)
    out = {"kind": kind, "beta": args.beta, "N": args.N, "dps": res.dps,
           "equations_checked": res.equations_checked, "events": res.events,
           "branches": [b.to_list() for b in res.branches]}
    closed = []
    for i, seq in enumerate(res.branches):
        if kind == "even_pole":
            ref = fourier.even_pole_closed_form(args.beta, args.N)
        elif kind == "even_pole_a0zero":
            ref = fourier.a0zero_closed_form(args.beta, args.N, args.branch or i + 1)
        else:
            ref = {K: fourier.general_closed_form(args.beta, alpha, K)
                   for K in range(-args.N, args.N + 1) if K != 0}
        worst = 0.0
        for K, v in ref.items():
            if K == 0 or K not in seq or seq[K] is None:
                continue
            worst = max(worst, abs(complex(seq[K]) - complex(v)) / max(abs(complex(v)), 1e-300))
        closed.append(worst)
    out["closed_form_max_rel_err"] = closed
    _dump(out, args.output)
    return 0


def _initial_state(spec, m, seed, momentum_scale):
    plan = residuals.SamplePlan(m - 1, count=1, seed=seed)
    x, _ = residuals.draw_samples(spec, plan)
    rng = np.random.default_rng(seed + 1)
    p = momentum_scale * rng.standard_normal(m)
    return dynamics.PhaseState.of(np.sort(x[0]), p)


def cmd_dynamics(args):
    m = args.n + 1
    if args.system == "cm":
        g2 = args.g2 if args.g2 is not None else DEFAULT_INVARIANTS["g2"]
        g3 = args.g3 if args.g3 is not None else DEFAULT_INVARIANTS["g3"]
        params = EllipticParams.from_invariants(g2, g3)
        spec = SolutionSpec("weierstrass", {"g2": g2, "g3": g3})
        state = _initial_state(spec, m, args.seed, args.momentum)
        H = dynamics.cm_energy(params)
        out = {"system": "cm", "g2": g2, "g3": g3}
    else:
        spec = build_spec(args)
        state = _initial_state(spec, m, args.seed, args.momentum)
        Hv, Pv, Bv = dynamics.rs_observables(state, spec)
        out = {"system": "rs", "spec": json.loads(spec.to_json()),
               "brackets": {
                   "HB_minus_P": dynamics.poisson_bracket(Hv, Bv) - Pv.value,
                   "PB_minus_H": dynamics.poisson_bracket(Pv, Bv) - Hv.value,
                   "HP": dynamics.poisson_bracket(Hv, Pv),
                   "HP_normalized": dynamics.normalized_bracket(Hv, Pv)}}
        H = dynamics.rs_hamiltonian(spec)
    traj = dynamics.integrate(state, H, args.dt, args.steps, record_every=args.record_every)
    out["initial"] = {"x": list(state.x), "p": list(state.p)}
    out["trajectory"] = traj.summary()
    if args.csv:
        with open(args.csv, "w") as fh:
            fh.write(traj.to_csv())
    _dump(out, args.output)
    return 0


def cmd_finitepart(args):
    try:
        phi = finite_part.test_function(args.phi)
    except KeyError as err:
        raise UsageError(str(err)) from None
    rep = finite_part.distribution_identity_check(phi)
    rep["phi"] = args.phi
    _dump(rep, args.output)
    return 0 if rep["rel_err"] < args.tol else 1


def cmd_chain_check(args):
    zs = np.random.default_rng(args.seed)
    rows = []
    ok = True
    for k in args.k:
        params = EllipticParams.from_modulus(k, 1.0)
        # keep clear of the poles at multiples of 2 omega
        z = zs.uniform(0.05, 2.0 * params.omega - 0.05, args.points)
        for h in (1, 2, 3):
            worst = representation_chain_check(h, z, params)
            rows.append({"k": k, "h": f"h{h}", "max_pairwise_diff": worst})
            ok = ok and worst < args.tol
    _dump({"tolerance": args.tol, "points": args.points, "results": rows}, args.output)
    return 0 if ok else 1


# --- parser ----------------------------------------------------------------------


def _spec_flags(p, family_default="h1"):
    p.add_argument("--family", default=family_default, help="family name")
    p.add_argument("--params", help="family parameters as JSON (inline or file)")
    p.add_argument("--spec", help='full spec as JSON {"family": ..., "params": {...}}')


def build_parser():
    parser = argparse.ArgumentParser(prog="funceq", description=__doc__.splitlines()[0])
    parser.add_argument("--threads", type=int, default=None,
                        help="worker cap (default from FE_THREADS, else 1)")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("verify", help="sample the n-particle residual and classify")
    _spec_flags(p)
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--count", type=int, default=200)
    p.add_argument("--delta", type=float, default=None)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--expect", choices=("solves", "fails", "indeterminate"))
    p.add_argument("--output")
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("series", help="exact Laurent-series recurrence")
    p.add_argument("--n", type=int, default=3)
    p.add_argument("--J", type=int, default=9)
    p.add_argument("--branch", type=int, default=None)
    p.add_argument("--levels", action="store_true", help="include the level constraints")
    p.add_argument("--taylor", action="store_true", help="pole-free branch instead")
    p.add_argument("--allow-expensive", action="store_true")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--output")
    p.set_defaults(func=cmd_series)

    p = sub.add_parser("fourier", help="discrete Fourier-coefficient recurrences")
    p.add_argument("--kind", choices=("even_pole", "a0zero", "even_pole_a0zero", "general"),
                   default="even_pole")
    p.add_argument("--beta", type=float, required=True)
    p.add_argument("--alpha", type=float, default=None)
    p.add_argument("--N", type=int, default=20)
    p.add_argument("--branch", type=int, choices=(1, 2), default=None)
    p.add_argument("--output")
    p.set_defaults(func=cmd_fourier)

    p = sub.add_parser("dynamics", help="brackets and an RK4 trajectory")
    _spec_flags(p)
    p.add_argument("--system", choices=("rs", "cm"), default="rs")
    p.add_argument("--n", type=int, default=3)
    p.add_argument("--steps", type=int, default=1000)
    p.add_argument("--dt", type=float, default=1e-3)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--momentum", type=float, default=0.5)
    p.add_argument("--record-every", type=int, default=1)
    p.add_argument("--g2", type=float, default=None)
    p.add_argument("--g3", type=float, default=None)
    p.add_argument("--csv", help="write the trajectory as CSV here")
    p.add_argument("--output")
    p.set_defaults(func=cmd_dynamics)

    p = sub.add_parser("finitepart", help="distribution identity for a named test function")
    p.add_argument("--phi", default="x2y_gauss",
                   help=f"one of {', '.join(sorted(finite_part.TEST_FUNCTIONS))}")
    p.add_argument("--tol", type=float, default=1e-2)
    p.add_argument("--output")
    p.set_defaults(func=cmd_finitepart)

    p = sub.add_parser("chain-check", help="agreement of the four closed forms of h1, h2, h3")
    p.add_argument("--k", type=float, nargs="+", default=[0.3, 0.5, 0.9])
    p.add_argument("--points", type=int, default=100)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--tol", type=float, default=CHAIN_TOL)
    p.add_argument("--output")
    p.set_defaults(func=cmd_chain_check)
    return parser


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 2 if exc.code else 0
    if args.threads is not None:
        os.environ["FE_THREADS"] = str(max(1, args.threads))
    try:
        return args.func(args)
    except UsageError as err:
        print(f"funceq: {err}", file=sys.stderr)
        return 2
    except (ArithmeticError, ValueError) as err:
        print(f"funceq: {type(err).__name__}: {err}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
