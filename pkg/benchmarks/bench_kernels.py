"""Compare the compiled and pure-numpy kernels on the hot paths.

    python benchmarks/bench_kernels.py [--repeat 5]

Both backends produce bitwise-identical results, so only time is reported.
"""

import argparse
import timeit

import numpy as np

from crashsma import _backend
from crashsma.haar import decompose, reconstruct
from crashsma.sma import sma_estimate
from crashsma.synthetic import preset, sample_counts
from crashsma.threshold import pure_profile, threshold_grid


def cases():
    rng = np.random.default_rng(0)
    y4k = rng.poisson(rng.uniform(0.1, 6, 4096))
    d = decompose(y4k)
    s1, d1 = d.sums[:, 0], d.diffs[:, 0]
    grid = threshold_grid(s1, 40)
    fig2 = sample_counts(preset("figure2"), 1, 20).draws
    return {
        "decompose n=4096": lambda b: decompose(y4k, backend=b),
        "pure profile n=4096 x 40": lambda b: pure_profile(s1, d1, grid, backend=b),
        "reconstruct n=4096": lambda b: reconstruct(d.coarse_sums, d.diffs, backend=b),
        "sma n=4096": lambda b: sma_estimate(y4k, backend=b),
        "sma figure2 x 20": lambda b: [sma_estimate(y, backend=b) for y in fig2],
    }


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()
    backends = ["python"] + (["compiled"] if _backend.available() else [])
    print(f"{'case':<28}" + "".join(f"{b + ' ms':>14}" for b in backends) + ("   speedup" if len(backends) == 2 else ""))
    for name, fn in cases().items():
        times = []
        for b in backends:
            number = 3
            best = min(timeit.repeat(lambda: fn(b), number=number, repeat=args.repeat)) / number
            times.append(best * 1e3)
        line = f"{name:<28}" + "".join(f"{t:>14.3f}" for t in times)
        if len(times) == 2:
            line += f"{times[0] / times[1]:>10.2f}x"
        print(line)


if __name__ == "__main__":
    main()
