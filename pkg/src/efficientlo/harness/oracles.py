"""Brute-force reference implementations and the checks built on them.

Used by ``efficientlo selftest`` with small sizes and by the acceptance
suite at full size. Each check returns ``(ok, detail)``.
"""
from __future__ import annotations

import math

import numpy as np

from .. import kernels
from ..geometry import (
    compose_matrices,
    pose_compose,
    pose_to_matrix,
    pose_warp_point,
    quat_normalize,
)
from ..pointops import distance_filter_select, group, kernel_group, stride_sample
from ..projection import ProjectionConfig, project, projection_bins
from .metrics import ate, kitti_metrics, rpe


def random_cloud(rng, n: int, cfg: ProjectionConfig, duplicates: float = 0.05) -> np.ndarray:
    """Points around the sensor, a few beyond the FOV, some exact duplicates and origins."""
    az = rng.uniform(-math.pi, math.pi, n)
    lo, hi = math.radians(cfg.fov_down - 2), math.radians(cfg.fov_up + 2)
    el = rng.uniform(lo, hi, n)
    r = rng.uniform(0.5, 80.0, n)
    pts = np.stack([r * np.cos(el) * np.cos(az), r * np.cos(el) * np.sin(az), r * np.sin(el)], 1)
    k = int(n * duplicates)
    if k and n > 1:
        pts[rng.choice(n, k)] = pts[rng.choice(n, k)]
    if n > 2:
        pts[rng.integers(n)] = 0.0
    return pts


def brute_force_projection(points, cfg: ProjectionConfig):
    """Owner index per cell by explicit min-range search, ties to the lowest index."""
    pts = np.asarray(points, dtype=np.float64)
    owner = np.full(cfg.H * cfg.W, -1, dtype=np.int64)
    best = np.full(cfg.H * cfg.W, np.inf)
    for i, (x, y, z) in enumerate(pts):
        r = math.sqrt(x * x + y * y + z * z)
        if r == 0:
            continue
        col = (math.floor(math.atan2(y, x) / cfg.d_theta) + cfg.W // 2) % cfg.W
        row = math.floor((cfg.phi_max - math.asin(max(-1.0, min(1.0, z / r)))) / cfg.d_phi)
        if not 0 <= row < cfg.H:
            continue
        c = row * cfg.W + col
        if r < best[c]:
            best[c] = r
            owner[c] = i
    return owner


def _owners_are_nearest(pts, pc, cfg: ProjectionConfig) -> bool:
    """Every in-FOV point's cell is valid and owned by a point no farther (lower index on ties)."""
    rows, cols, r, fov = projection_bins(pts, cfg)
    cells = (rows * cfg.W + cols)[fov]
    r, idx = r[fov], np.flatnonzero(fov)
    best = np.full(cfg.H * cfg.W, np.inf)
    np.minimum.at(best, cells, r)
    first = np.full(cfg.H * cfg.W, np.iinfo(np.int64).max)
    tie = r == best[cells]
    np.minimum.at(first, cells[tie], idx[tie])
    src = pc.source.reshape(-1)
    valid = pc.valid.reshape(-1)
    used = np.isfinite(best)
    return bool(np.array_equal(valid, used) and np.array_equal(src[used], first[used]))


def check_projection(n_clouds: int = 1000, max_points: int = 50_000, seed: int = 0,
                     oracle_clouds: int = 20, oracle_points: int = 3000):
    """Re-projection of stored XYZ lands in its own cell; collisions match the oracle."""
    rng = np.random.default_rng(seed)
    cfg = ProjectionConfig()
    for k in range(n_clouds):
        n = int(rng.integers(1, max_points + 1))
        pts = random_cloud(rng, n, cfg)
        pc = project(pts, cfg)
        rows, cols, _, fov = projection_bins(pc.points, cfg)
        if not fov.all() or not np.array_equal(np.stack([rows, cols], 1), pc.cell_rc):
            return False, f"cloud {k}: stored point re-projects to another cell"
        if not np.array_equal(pc.points, pts[pc.source.reshape(-1)[pc.flat_valid]]):
            return False, f"cloud {k}: stored XYZ differs from its source point"
        if not _owners_are_nearest(pts, pc, cfg):
            return False, f"cloud {k}: a cell is not owned by its nearest point"
    for k in range(oracle_clouds):
        pts = random_cloud(rng, oracle_points, cfg, duplicates=0.2)
        owner = project(pts, cfg).source.reshape(-1)
        if not np.array_equal(owner, brute_force_projection(pts, cfg)):
            return False, f"oracle cloud {k}: collision owners differ"
    return True, (f"{n_clouds} clouds round-trip with nearest-point owners, "
                  f"{oracle_clouds} match the brute-force min-range oracle")


def brute_force_window_knn(cloud, center_rc, center_xyz, kernel, radius, K):
    """Window-restricted KNN by explicit loops: sort by (d^2, flat id), pad cyclically."""
    kh, kw = kernel
    H, W = cloud.H, cloud.W
    if kw >= W:
        cols = range(-(W // 2), W - W // 2)
    else:
        cols = range(-(kw // 2), kw // 2 + 1)
    r, c = int(center_rc[0]), int(center_rc[1])
    cand = []
    for dr in range(-(kh // 2), kh // 2 + 1):
        rr = r + dr
        if not 0 <= rr < H:
            continue
        for dc in cols:
            cc = (c + dc) % W
            if not cloud.valid[rr, cc]:
                continue
            p = cloud.coords[rr, cc]
            dx, dy, dz = p[0] - center_xyz[0], p[1] - center_xyz[1], p[2] - center_xyz[2]
            d2 = dx * dx + dy * dy + dz * dz
            if d2 <= radius * radius:
                cand.append((d2, rr * W + cc))
    cand.sort()
    if not cand:
        return []
    return [cand[k][1] if k < len(cand) else cand[k % len(cand)][1] for k in range(K)]


def check_neighbors(n_clouds: int = 500, max_points: int = 2000, seed: int = 0):
    """KNN selection equals the brute-force window KNN; random picks stay in radius and window."""
    rng = np.random.default_rng(seed)
    cfg = ProjectionConfig(H=16, W=64)
    for k in range(n_clouds):
        pts = random_cloud(rng, int(rng.integers(1, max_points + 1)), cfg)
        pc = project(pts, cfg)
        if pc.count == 0:
            continue
        s = stride_sample(pc, 2, 2)
        kernel = (int(rng.choice([1, 3, 5])), int(rng.choice([3, 9, 65])))
        radius = float(rng.uniform(0.5, 20.0))
        K = int(rng.integers(1, 12))
        knn = group(pc, s.centers_rc, s.xyz, kernel, radius, K, "knn")
        rnd = group(pc, s.centers_rc, s.xyz, kernel, radius, K, "random", seed=k, stream=7)
        windows = kernel_group(pc, s.centers_rc, *kernel)
        flat_xyz = pc.coords.reshape(-1, 3)
        for i in range(len(s)):
            ref = brute_force_window_knn(pc, s.centers_rc[i], s.xyz[i], kernel, radius, K)
            got = knn.idx[i]
            if not ref:
                if knn.nsurv[i] != 0 or (got != -1).any():
                    return False, f"cloud {k} center {i}: expected empty neighborhood"
                continue
            if list(got) != ref:
                return False, f"cloud {k} center {i}: knn {list(got)} != oracle {ref}"
            sel = distance_filter_select(s.xyz[i], windows[i], flat_xyz[windows[i]], radius, K, "knn")
            if list(sel) != ref:
                return False, f"cloud {k} center {i}: distance_filter_select differs from oracle"
            pick = rnd.idx[i]
            d = np.linalg.norm(flat_xyz[pick] - s.xyz[i], axis=1)
            if (d > radius * (1 + 1e-12)).any() or not np.isin(pick, windows[i]).all():
                return False, f"cloud {k} center {i}: random pick outside radius or window"
            m = int(rnd.nsurv[i])
            if len(set(pick[: min(m, K)].tolist())) != min(m, K):
                return False, f"cloud {k} center {i}: random picks repeat before survivors run out"
    return True, f"{n_clouds} clouds: knn equals oracle, random picks in radius and window"


def _random_quat(rng):
    return quat_normalize(rng.normal(size=4))


def check_rigid(n_pairs: int = 10_000, seed: int = 0):
    """Warp preserves distances; residual composition matches matrices; identity residual is exact."""
    rng = np.random.default_rng(seed)
    worst_d = worst_c = 0.0
    for _ in range(n_pairs):
        q, dq = _random_quat(rng), _random_quat(rng)
        t, dt = rng.normal(scale=10, size=3), rng.normal(scale=10, size=3)
        p = rng.normal(scale=20, size=(2, 3))
        w = pose_warp_point(q, t, p)
        worst_d = max(worst_d, abs(np.linalg.norm(w[0] - w[1]) - np.linalg.norm(p[0] - p[1])))
        qn, tn = pose_compose(dq, dt, q, t)
        M = compose_matrices(pose_to_matrix(dq, dt), pose_to_matrix(q, t))
        worst_c = max(worst_c, np.abs(pose_to_matrix(qn / np.linalg.norm(qn), tn) - M).max())
        qi, ti = pose_compose(np.array([1.0, 0, 0, 0]), np.zeros(3), q, t)
        if not (np.array_equal(qi, q) and np.array_equal(ti, t)):
            return False, "identity residual changed the pose"
    ok = bool(worst_d < 1e-9 and worst_c < 1e-9)
    return ok, f"distance err {worst_d:.2e}, composition err {worst_c:.2e}"


def _yaw(a):
    c, s = math.cos(a), math.sin(a)
    return np.array([[c, -s, 0], [s, c, 0], [0, 0, 1.0]])


def straight_line(n: int, speed: float = 1.0) -> np.ndarray:
    T = np.zeros((n, 3, 4))
    T[:, :, :3] = np.eye(3)
    T[:, 0, 3] = np.arange(n) * speed
    return T


def check_metrics(d_deg: float = 0.7, slip: float = 0.03, seed: int = 0):
    """Closed-form drift, alignment and slip oracles."""
    rng = np.random.default_rng(seed)
    gt = straight_line(1001)
    scaled = gt.copy()
    scaled[:, :, 3] *= 1.01
    t_rel, _, _ = kitti_metrics(scaled, gt)
    yawed = gt.copy()
    for k in range(len(gt)):
        yawed[k, :, :3] = _yaw(math.radians(d_deg) * k / 100.0)
    _, r_rel, _ = kitti_metrics(yawed, gt)
    curvy = np.zeros((300, 3, 4))
    for k in range(300):
        curvy[k, :, :3] = _yaw(0.02 * k)
        curvy[k, :, 3] = [10 * math.sin(0.02 * k), 10 * (1 - math.cos(0.02 * k)), 0.01 * k]
    G = pose_to_matrix(_random_quat(rng), rng.normal(scale=50, size=3))
    moved = np.array([compose_matrices(G, T) for T in curvy])
    a = ate(moved, curvy)
    slipped = curvy.copy()
    slipped[:, :, :3] = np.eye(3)
    gt_flat = slipped.copy()
    step = np.array([slip, -slip / 2, slip / 3])
    slipped[:, :, 3] += np.arange(300)[:, None] * step
    r = rpe(slipped, gt_flat)
    checks = {
        "t_rel": abs(t_rel - 1.0) <= 1e-6,
        "r_rel": abs(r_rel - d_deg) <= 1e-6,
        "ate": a <= 1e-9,
        "rpe": abs(r - np.linalg.norm(step)) <= 1e-9,
    }
    detail = (f"t_rel {t_rel:.9f}, r_rel {r_rel:.9f} (want {d_deg}), ATE {a:.2e}, "
              f"RPE {r:.12f} (want {np.linalg.norm(step):.12f})")
    return all(checks.values()), detail


def check_backends(n_clouds: int = 20, seed: int = 0):
    """Compiled and numpy kernels give identical outputs (skipped if not compiled)."""
    if kernels.BACKEND != "compiled":
        return True, "compiled backend not built; nothing to compare"
    py, cc = kernels.get_backend("python"), kernels.get_backend("compiled")
    rng = np.random.default_rng(seed)
    cfg = ProjectionConfig(H=16, W=64)
    for k in range(n_clouds):
        pts = random_cloud(rng, int(rng.integers(10, 1500)), cfg)
        rows, cols, r, fov = projection_bins(pts, cfg)
        cells = np.where(fov, rows * cfg.W + cols, -1)
        if not np.array_equal(py.scatter_min_range(cells, r, cfg.H * cfg.W),
                              cc.scatter_min_range(cells, r, cfg.H * cfg.W)):
            return False, f"cloud {k}: scatter differs"
        pc = project(pts, cfg)
        s = stride_sample(pc, 2, 2)
        for mode in (kernels.MODE_RANDOM, kernels.MODE_KNN):
            a = py.window_group(pc.coords, pc.valid, s.centers_rc, s.xyz, 3, 9, 5.0, 8, mode, k, 3)
            b = cc.window_group(pc.coords, pc.valid, s.centers_rc, s.xyz, 3, 9, 5.0, 8, mode, k, 3)
            c = py.full_group(pc.points, pc.flat_valid, s.xyz, 5.0, 8, mode, k, 3)
            d = cc.full_group(pc.points, pc.flat_valid, s.xyz, 5.0, 8, mode, k, 3)
            if not all(np.array_equal(x, y) for x, y in zip(a + c, b + d)):
                return False, f"cloud {k}: grouping differs (mode {mode})"
    return True, f"{n_clouds} clouds identical across backends"
