"""Time the compiled kernels against the numpy fallback.

    python benchmarks/bench_kernels.py [--samples 2000] [--n 5] [--repeat 5]

Both backends are run on identical inputs; the script also checks that they
agree before reporting timings.
"""

import argparse
import json
import time

import numpy as np

from funceq import kernels
from funceq.families import SolutionSpec
from funceq.residuals import SamplePlan, _pair_tables, draw_samples


def best_of(fn, repeat):
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--samples", type=int, default=2000)
    ap.add_argument("--n", type=int, default=5)
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()

    spec = SolutionSpec("h1", {"k": 0.9})
    x, _ = draw_samples(spec, SamplePlan(args.n, count=args.samples, seed=1))
    F, Fp = _pair_tables(spec, x)
    F, Fp = np.real(F).copy(), np.real(Fp).copy()

    report = {"compiled_available": kernels._compiled is not None,
              "samples": int(len(x)), "particles": args.n + 1}
    backends = ["python"] + (["cython"] if kernels._compiled is not None else [])
    results = {}
    for b in backends:
        results[b] = kernels.residual_and_scale(F, Fp, backend=b)
        report[f"residual_{b}_s"] = best_of(
            lambda: kernels.residual_and_scale(F, Fp, backend=b), args.repeat)

    xs, ps = x[0], np.linspace(-0.5, 0.5, x.shape[1])
    G, Gp = F[0], Fp[0]
    for b in backends:
        report[f"rs_gradients_{b}_s"] = best_of(
            lambda: [kernels.rs_gradients(xs, ps, G, Gp, backend=b) for _ in range(1000)],
            args.repeat) / 1000

    if "cython" in results:
        r0, s0 = results["python"]
        r1, s1 = results["cython"]
        report["max_residual_diff"] = float(np.max(np.abs(r0 - r1) / s0))
        report["residual_speedup"] = report["residual_python_s"] / report["residual_cython_s"]
        report["rs_gradients_speedup"] = (report["rs_gradients_python_s"]
                                          / report["rs_gradients_cython_s"])
    print(json.dumps(report, indent=2, sort_keys=True))


if __name__ == "__main__":
    main()
