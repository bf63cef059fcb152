"""Timing of projection-aware grouping against unrestricted neighbor search."""
from __future__ import annotations

import csv
import time
from dataclasses import dataclass

import numpy as np

from .. import kernels
from ..pointops import stride_sample
from ..projection import ProjectionConfig, project
from .synth import SynthConfig, synth_scene

METHODS = ("projection_aware", "all_points_filter", "global_knn")


@dataclass(frozen=True)
class BenchConfig:
    sizes: tuple[int, ...] = (100_000,)
    repetitions: int = 20
    stride: tuple[int, int] = (4, 8)
    kernel: tuple[int, int] = (9, 15)
    K: int = 32
    radius: float = 0.75
    seed: int = 0
    backend: str | None = None


def bench_cloud(n: int, seed: int = 0, proj: ProjectionConfig | None = None):
    """A projected ray-cast scene with about ``n`` points on a 64 x 1800 grid."""
    proj = proj or ProjectionConfig()
    rng = np.random.default_rng(seed)
    rays_w = max(1, int(np.ceil(n / proj.H)))
    scene = synth_scene(SynthConfig(seed=seed, rays_h=proj.H, rays_w=rays_w, max_rotation_deg=0,
                                    max_translation=0), rng)
    pts = scene.frame1
    if len(pts) > n:
        pts = pts[rng.choice(len(pts), n, replace=False)]
    return project(pts, proj)


def _median_time(fn, reps: int) -> tuple[float, object]:
    out = None
    times = []
    for _ in range(reps):
        t0 = time.perf_counter()
        out = fn()
        times.append(time.perf_counter() - t0)
    return float(np.median(times)), out


def bench_grouping(cfg: BenchConfig, progress=None) -> list[dict]:
    """Median wall time per method, size and selection mode.

    ``projection_aware`` groups inside kernel windows on the grid then
    filters by radius; ``all_points_filter`` filters every point of the
    cloud by radius; ``global_knn`` takes the K nearest of all points.
    """
    be = kernels.get_backend(cfg.backend)
    rows = []
    for n in cfg.sizes:
        if n <= 0:
            continue
        cloud = bench_cloud(n, cfg.seed)
        centers = stride_sample(cloud, *cfg.stride)
        crc, cxyz = centers.centers_rc, centers.xyz
        pts, ids = cloud.points, cloud.flat_valid
        kh, kw = cfg.kernel
        jobs = []
        for mode_name, mode in (("random", kernels.MODE_RANDOM), ("knn", kernels.MODE_KNN)):
            jobs.append(("projection_aware", mode_name, lambda m=mode: be.window_group(
                cloud.coords, cloud.valid, crc, cxyz, kh, kw, cfg.radius, cfg.K, m, cfg.seed, 0)))
            jobs.append(("all_points_filter", mode_name, lambda m=mode: be.full_group(
                pts, ids, cxyz, cfg.radius, cfg.K, m, cfg.seed, 0)))
        jobs.append(("global_knn", "knn", lambda: be.full_group(
            pts, ids, cxyz, np.inf, cfg.K, kernels.MODE_KNN, cfg.seed, 0)))
        for method, mode_name, fn in jobs:
            med, _ = _median_time(fn, cfg.repetitions)
            row = {"size": cloud.count, "centers": len(centers), "method": method, "mode": mode_name,
                   "median_s": med, "repetitions": cfg.repetitions, "backend": be.name}
            rows.append(row)
            if progress is not None:
                progress(row)
    return rows


def write_bench_csv(path, rows) -> None:
    fields = ["size", "centers", "method", "mode", "median_s", "repetitions", "backend"]
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=fields)
        w.writeheader()
        w.writerows(rows)


def summarize(rows) -> str:
    """One line per size: speedup of the window prior and random-vs-KNN ratio."""
    lines = []
    for size in sorted({r["size"] for r in rows}):
        t = {(r["method"], r["mode"]): r["median_s"] for r in rows if r["size"] == size}
        pa = t[("projection_aware", "random")]
        lines.append(
            f"{size} points: projection-aware {pa * 1e3:.2f} ms, "
            f"all-points filter {t[('all_points_filter', 'random')] * 1e3:.2f} ms "
            f"({t[('all_points_filter', 'random')] / pa:.1f}x), "
            f"global KNN {t[('global_knn', 'knn')] * 1e3:.2f} ms; "
            f"random/knn = {pa / t[('projection_aware', 'knn')]:.2f}"
        )
    return "\n".join(lines)
