"""Compare the compiled and numpy stepping kernels.

Times a single batched direct step (kernel level) and a full multi-path
integration of the built-in example (end to end) under each backend.

    python benchmarks/bench_kernels.py [--paths 128] [--steps 4096] [--repeat 5]
"""

import argparse
import timeit

import numpy as np
import scipy.linalg

from semitamed import kernels, scheme
from semitamed.model import builtin_paper_example
from semitamed.wiener import generate


def kernel_case(paths, d=3, m=3, seed=0):
    rng = np.random.default_rng(seed)
    M = rng.standard_normal((d, d)) + d * np.eye(d)
    lu, piv = scipy.linalg.lu_factor(M)
    return (M, np.ascontiguousarray(lu), np.ascontiguousarray(piv, dtype=np.intc),
            rng.standard_normal((paths, d)), rng.standard_normal((paths, d)),
            rng.standard_normal((paths, d, m)), rng.standard_normal((paths, m)), 1e-3)


def best_of(fn, repeat):
    return min(timeit.repeat(fn, number=1, repeat=repeat))


def main(argv=None):
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--paths", type=int, default=128)
    parser.add_argument("--steps", type=int, default=4096)
    parser.add_argument("--repeat", type=int, default=5)
    args = parser.parse_args(argv)

    problem = builtin_paper_example()
    inc = np.stack([generate(0, k, problem.m, args.steps, problem.T).increments
                    for k in range(args.paths)])
    case = kernel_case(args.paths)

    previous = kernels.BACKEND
    timings = {}
    for name in ("python", "cython"):
        try:
            kernels.set_backend(name)
        except ImportError:
            print(f"{name}: not available")
            continue
        step = best_of(lambda: kernels.direct_step(*case), args.repeat * 20)
        run = {kind: best_of(lambda: scheme.integrate(problem, kind, inc), args.repeat)
               for kind in ("direct-tamed", "dual-tamed")}
        timings[name] = (step, run)
    kernels.set_backend(previous)

    print(f"{args.paths} paths, {args.steps} steps")
    print(f"{'backend':>8} {'direct_step':>14} {'direct-tamed':>14} {'dual-tamed':>14}")
    for name, (step, run) in timings.items():
        print(f"{name:>8} {step * 1e6:>12.1f}us {run['direct-tamed']:>13.3f}s {run['dual-tamed']:>13.3f}s")
    if len(timings) == 2:
        (ps, pr), (cs, cr) = timings["python"], timings["cython"]
        print(f"{'speedup':>8} {ps / cs:>13.1f}x {pr['direct-tamed'] / cr['direct-tamed']:>13.1f}x "
              f"{pr['dual-tamed'] / cr['dual-tamed']:>13.1f}x")


if __name__ == "__main__":
    main()
