"""Compare the compiled and numpy kernels on calibration-sized inputs.

    python benchmarks/bench_kernels.py [--models 17] [--samples 500] [--classes 10] [--temps 2000]

Prints the best-of-N wall time per backend, the speed-up, and the largest
absolute difference between backends.
"""
import argparse
import time

import numpy as np

from greatscore.kernels import backends
from greatscore.transform import inner_map


def best_time(fn, repeats):
    best = float("inf")
    for _ in range(repeats):
        start = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - start)
    return best


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--models", type=int, default=17)
    ap.add_argument("--samples", type=int, default=500)
    ap.add_argument("--classes", type=int, default=10)
    ap.add_argument("--temps", type=int, default=2000)
    ap.add_argument("--repeats", type=int, default=3)
    ap.add_argument("--mode", default="softmax-after-sigmoid")
    args = ap.parse_args()

    rng = np.random.default_rng(0)
    logits = rng.normal(0, 3, (args.models, args.samples, args.classes))
    labels = rng.integers(0, args.classes, args.samples)
    temps = np.linspace(1e-5, 2.0, args.temps)
    inner, outer = inner_map(logits, args.mode)
    probs = rng.random((args.models * args.samples * 20, args.classes))
    flat_labels = rng.integers(0, args.classes, probs.shape[0])

    impls = backends()
    results, timings = {}, {}
    for name, mod in sorted(impls.items()):
        results[name] = mod.grid_means(inner, labels, temps, outer)
        timings[name] = (best_time(lambda: mod.grid_means(inner, labels, temps, outer), args.repeats),
                         best_time(lambda: mod.local_scores(probs, flat_labels), args.repeats))

    cells = args.models * args.samples * args.temps
    print(f"grid_means: {args.models} models x {args.samples} samples x {args.classes} classes x {args.temps} temperatures")
    for name, (grid_s, local_s) in timings.items():
        print(f"  {name:7s} grid {grid_s:8.3f}s ({cells / grid_s / 1e6:7.2f} M rows/s)   "
              f"local_scores {local_s * 1e3:8.2f} ms")
    if {"cython", "python"} <= set(timings):
        print(f"  speed-up grid {timings['python'][0] / timings['cython'][0]:.1f}x, "
              f"local_scores {timings['python'][1] / timings['cython'][1]:.1f}x")
        print(f"  max |cython - python| = {np.max(np.abs(results['cython'] - results['python'])):.3g}")
    else:
        print("  compiled extension not available; only the fallback was timed")


if __name__ == "__main__":
    main()
