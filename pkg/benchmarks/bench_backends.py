"""Compiled kernel core against the numpy fallback on the same inputs.

    python3 benchmarks/bench_backends.py --sizes 20000 100000 --reps 5

Prints median wall time per kernel and backend, the speedup, and whether
the two backends returned identical arrays.
"""
import argparse
import csv
import sys
import time

import numpy as np

from efficientlo import kernels
from efficientlo.harness.bench import bench_cloud
from efficientlo.pointops import stride_sample
from efficientlo.projection import ProjectionConfig, projection_bins


def median_time(fn, reps):
    times, out = [], None
    for _ in range(reps):
        t0 = time.perf_counter()
        out = fn()
        times.append(time.perf_counter() - t0)
    return float(np.median(times)), out


def jobs(be, n, seed):
    proj = ProjectionConfig()
    cloud = bench_cloud(n, seed, proj)
    pts = cloud.points
    rows, cols, r, fov = projection_bins(pts, proj)
    cells = np.where(fov, rows * proj.W + cols, -1)
    s = stride_sample(cloud, 4, 8)
    return cloud.count, {
        "scatter_min_range": lambda: be.scatter_min_range(cells, r, proj.H * proj.W),
        "window_group_random": lambda: be.window_group(cloud.coords, cloud.valid, s.centers_rc, s.xyz,
                                                       9, 15, 0.75, 32, kernels.MODE_RANDOM, seed, 0),
        "window_group_knn": lambda: be.window_group(cloud.coords, cloud.valid, s.centers_rc, s.xyz,
                                                    9, 15, 0.75, 32, kernels.MODE_KNN, seed, 0),
        "full_group_random": lambda: be.full_group(pts, cloud.flat_valid, s.xyz, 0.75, 32,
                                                   kernels.MODE_RANDOM, seed, 0),
    }


def same(a, b):
    if isinstance(a, tuple):
        return all(np.array_equal(x, y) for x, y in zip(a, b))
    return np.array_equal(a, b)


def main(argv=None):
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--sizes", type=int, nargs="+", default=[20_000, 100_000])
    p.add_argument("--reps", type=int, default=5)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--skip-full", action="store_true", help="skip the slow all-points kernel")
    p.add_argument("--out", help="CSV file for the rows")
    args = p.parse_args(argv)
    if kernels.BACKEND != "compiled":
        print("compiled backend not built (pip install -e . --no-build-isolation)", file=sys.stderr)
        return 1
    backends = {name: kernels.get_backend(name) for name in ("compiled", "python")}
    rows = []
    print(f"{'points':>8}  {'kernel':<20} {'compiled ms':>12} {'python ms':>10} {'speedup':>8}  identical")
    for n in args.sizes:
        results = {}
        for name, be in backends.items():
            count, work = jobs(be, n, args.seed)
            for kname, fn in work.items():
                if args.skip_full and kname.startswith("full"):
                    continue
                results[(name, kname)] = median_time(fn, args.reps)
        for kname in dict.fromkeys(k for _, k in results):
            (tc, oc), (tp, op) = results[("compiled", kname)], results[("python", kname)]
            row = {"points": count, "kernel": kname, "compiled_ms": tc * 1e3, "python_ms": tp * 1e3,
                   "speedup": tp / tc, "identical": same(oc, op)}
            rows.append(row)
            print(f"{count:>8}  {kname:<20} {tc * 1e3:>12.2f} {tp * 1e3:>10.2f} {tp / tc:>7.1f}x  {row['identical']}")
    if args.out:
        with open(args.out, "w", newline="") as fh:
            w = csv.DictWriter(fh, fieldnames=list(rows[0]))
            w.writeheader()
            w.writerows(rows)
    return 0 if all(r["identical"] for r in rows) else 1


if __name__ == "__main__":
    sys.exit(main())
