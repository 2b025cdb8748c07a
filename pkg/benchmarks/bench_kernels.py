"""Benchmark the compiled search kernels against the numpy fallback.

Covers the three hot loops: exact balanced-bipartition enumeration, pair-swap
local search, and sign-pattern maximization. Run from the repository root:

    python benchmarks/bench_kernels.py [--full]

--full includes the 24-atom enumeration (about 1.35M candidates).
"""

import argparse
import time

import numpy as np

from narrowops.kernels import available_backends


def time_call(fn, *args, repeat=3):
    best = float("inf")
    result = None
    for _ in range(repeat):
        t0 = time.perf_counter()
        result = fn(*args)
        best = min(best, time.perf_counter() - t0)
    return best, result


def main():
    parser = argparse.ArgumentParser()
    parser.add_argument("--full", action="store_true", help="include the 24-atom enumeration")
    args = parser.parse_args()

    backends = available_backends()
    if "compiled" not in backends:
        print("compiled backend not built; nothing to compare "
              "(install with `pip install -e . --no-build-isolation`)")
    rng = np.random.default_rng(0)
    rows = []

    sizes = [14, 18, 20, 22] + ([24] if args.full else [])
    for n in sizes:
        images = rng.standard_normal((n, 8))
        w = np.ones(8)
        for q in (1.0, 2.0):
            entry = {"kernel": f"balanced_min n={n} q={q:g}"}
            for name, mod in backends.items():
                t, (val, _, evals) = time_call(mod.balanced_min, images, w, q,
                                               repeat=1 if n >= 22 else 3)
                entry[name] = t
                entry["evals"] = evals
            rows.append(entry)

    for n in (64, 256):
        images = rng.standard_normal((n, 16))
        w = np.ones(16)
        s0 = -np.ones(n, dtype=np.int8)
        s0[rng.permutation(n)[: n // 2]] = 1
        entry = {"kernel": f"swap_descent n={n}"}
        for name, mod in backends.items():
            t, (val, _, evals) = time_call(mod.swap_descent, images, w, 1.0, s0)
            entry[name] = t
            entry["evals"] = evals
        rows.append(entry)

    for N in (16, 20):
        blocks = rng.standard_normal((N, 8))
        w = np.ones(8)
        entry = {"kernel": f"signed_max N={N}"}
        for name, mod in backends.items():
            t, (val, _, evals) = time_call(mod.signed_max, blocks, w, 1.0,
                                           repeat=1 if N >= 20 else 3)
            entry[name] = t
            entry["evals"] = evals
        rows.append(entry)

    width = max(len(r["kernel"]) for r in rows)
    have_both = "compiled" in backends
    header = f"{'kernel':<{width}}  {'evals':>9}  {'pure':>9}"
    if have_both:
        header += f"  {'compiled':>9}  {'speedup':>8}"
    print(header)
    print("-" * len(header))
    for r in rows:
        line = f"{r['kernel']:<{width}}  {r['evals']:>9}  {r['pure']:>8.4f}s"
        if have_both:
            speed = r["pure"] / r["compiled"] if r["compiled"] > 0 else float("inf")
            line += f"  {r['compiled']:>8.4f}s  {speed:>7.1f}x"
        print(line)


if __name__ == "__main__":
    main()
