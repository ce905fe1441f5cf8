"""Compare the compiled and numpy photon-sampling kernels.

    python benchmarks/bench_sampling.py [--repeat 5]

Both backends must produce identical counts; the script checks that before
reporting timings.
"""
import argparse
import time

import numpy as np

from fbsim import sampling
from fbsim.chain import Absorbing, ChainConfig, simulate

WORKLOADS = {
    # name: (pixels, photons per pixel)
    "image 32x32, m=10": (1024, 10),
    "image 256x256, m=10": (65536, 10),
    "calibration 1 x 1e6": (1, 1_000_000),
    "fine 4096 x 1000": (4096, 1000),
}


def best_of(fn, repeat):
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn()
        times.append(time.perf_counter() - t0)
    return min(times), out


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()

    dist = simulate(ChainConfig.uniform(0.5, 20, coherent=False), Absorbing())
    cdf = sampling.cdf_from_probs(dist.as_vector())
    backends = sorted(sampling.BACKENDS)
    print(f"backends: {', '.join(backends)} (default: {sampling.BACKEND})")
    print(f"{'workload':<24}" + "".join(f"{b:>14}" for b in backends) + f"{'speedup':>10}")
    for name, (pixels, m) in WORKLOADS.items():
        keys = np.array([sampling.pixel_key(1, i) for i in range(pixels)], dtype=np.uint64)
        row, results = {}, {}
        for b in backends:
            row[b], results[b] = best_of(lambda: sampling.sample_counts(cdf, keys, m, backend=b), args.repeat)
        ref = results[backends[0]]
        if any(not np.array_equal(ref, r) for r in results.values()):
            raise SystemExit(f"{name}: backends disagree")
        speed = row["python"] / row["compiled"] if "compiled" in row else float("nan")
        cells = "".join(f"{row[b] * 1e3:>11.2f} ms" for b in backends)
        print(f"{name:<24}{cells}{speed:>9.1f}x")


if __name__ == "__main__":
    main()
