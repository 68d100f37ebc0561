"""Time the compiled inner loop against the pure-Python fallback.

    python benchmarks/bench_kernel.py --iterations 20000 --dim 5

Both paths consume identical random draws, so the script also checks that
they produce the same trajectory.
"""

import argparse
import time

import numpy as np

from zorisk.core import RandomStreams, RiskProfile, RiskSpec
from zorisk.problems import newsvendor, piecewise_linear, quadratic_tracking
from zorisk.smoothing import SmoothingPlan, pair_constants
from zorisk.solver import RunOptions, Schedule, kernel, run


def _plan(problem, mu):
    if problem.cls == "lipschitz":
        return SmoothingPlan.from_report(mu, pair_constants("lipschitz", problem.dim))
    N = problem.dim
    return SmoothingPlan(mu, "smooth", 1.0, float(N), float(np.sqrt(N * (N + 2.0))), 3.0)


def _time(fn, repeat):
    best = float("inf")
    out = None
    for _ in range(repeat):
        t = time.perf_counter()
        out = fn()
        best = min(best, time.perf_counter() - t)
    return best, out


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--iterations", type=int, default=20_000)
    ap.add_argument("--dim", type=int, default=5)
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args()

    if not kernel.COMPILED:
        print("compiled kernel not available; timings below compare the fallback with itself")
    spec = RiskSpec(2.0, 0.5, RiskProfile("relu-shift", 0.1))
    sched = Schedule("convex-subharmonic", epsilon=0.1)
    eye = np.eye(args.dim)
    problems = [newsvendor(), quadratic_tracking(args.dim), piecewise_linear(np.vstack([eye, -eye]))]
    print(f"{'problem':<20} {'compiled s':>11} {'python s':>10} {'speedup':>8}  identical")
    for prob in problems:
        plan = _plan(prob, 0.05)
        opts = RunOptions(use_kernel=True, record="geometric")

        def go():
            return run(prob, spec, plan, sched, args.iterations, RandomStreams(1), opts)

        t_c, a = _time(go, args.repeat)
        compiled = kernel.run_block
        kernel.run_block = kernel.python_run_block
        try:
            t_p, b = _time(go, 1)
        finally:
            kernel.run_block = compiled
        same = a.x.tobytes() == b.x.tobytes() and a.y.tobytes() == b.y.tobytes()
        print(f"{prob.name:<20} {t_c:>11.4f} {t_p:>10.3f} {t_p / t_c:>7.1f}x  {same}")
    # reference: the per-iteration step path the kernel replaces
    prob = quadratic_tracking(args.dim)
    n = min(args.iterations, 5000)
    t_s, _ = _time(lambda: run(prob, spec, _plan(prob, 0.05), sched, n, RandomStreams(1),
                               RunOptions(use_kernel=False)), 1)
    print(f"step path, {n} iterations of {prob.name}: {t_s:.3f}s "
          f"({1e6 * t_s / n:.1f} us/iteration)")


if __name__ == "__main__":
    main()
