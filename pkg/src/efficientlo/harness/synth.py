"""Ray-cast synthetic LiDAR pairs: a ground plane, static boxes and an optional moving box.

Poses follow the network's convention: ``(q_gt, t_gt)`` warps frame-1
coordinates into frame 2, so a static point ``p1`` is seen in frame 2 at
``R(q_gt) p1 + t_gt``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.spatial.transform import Rotation

from ..geometry import invert_pose, pose_to_matrix, rotmat_to_quat, transform_points


@dataclass(frozen=True)
class SynthConfig:
    seed: int = 0
    rays_h: int = 16
    rays_w: int = 500
    fov_up: float = 2.0
    fov_down: float = -24.8
    max_range: float = 80.0
    sensor_height: float = 1.73
    walls: tuple[float, float] = (18.0, 30.0)
    wall_height: float = 8.0
    n_boxes: int = 10
    box_distance: tuple[float, float] = (4.0, 22.0)
    box_size: tuple[float, float] = (1.0, 6.0)
    box_height: tuple[float, float] = (1.5, 5.0)
    max_rotation_deg: float = 3.0
    max_translation: float = 1.5
    dynamic_box: bool = False
    dynamic_factor: float = 5.0
    dynamic_distance: tuple[float, float] = (6.0, 10.0)

    def __post_init__(self):
        if self.max_rotation_deg < 0 or self.max_translation < 0:
            raise ValueError("motion ranges must be nonnegative")
        if self.n_boxes < 0 or self.rays_h < 1 or self.rays_w < 1:
            raise ValueError("ray grid and box count must be positive")
        if not 0 <= self.walls[0] <= self.walls[1]:
            raise ValueError("walls must be an ordered (near, far) distance pair")
        if not self.max_range > 0:
            raise ValueError("max_range must be positive")

    @property
    def points_per_frame(self) -> int:
        return self.rays_h * self.rays_w


@dataclass
class SynthPair:
    frame1: np.ndarray
    frame2: np.ndarray
    q_gt: np.ndarray
    t_gt: np.ndarray
    dynamic1: np.ndarray
    dynamic2: np.ndarray
    dynamic_box: tuple | None = None

    @property
    def warp(self) -> np.ndarray:
        """3x4 matrix taking frame-1 coordinates to frame 2."""
        return pose_to_matrix(self.q_gt, self.t_gt)


def _ray_directions(cfg: SynthConfig, rng) -> np.ndarray:
    up, down = math.radians(cfg.fov_up), math.radians(cfg.fov_down)
    dphi = (up - down) / cfg.rays_h
    elev = up - (np.arange(cfg.rays_h) + 0.5) * dphi
    az = (np.arange(cfg.rays_w) + rng.uniform(0.0, 1.0)) * (2 * math.pi / cfg.rays_w)
    E, A = np.meshgrid(elev, az, indexing="ij")
    return np.stack([np.cos(E) * np.cos(A), np.cos(E) * np.sin(A), np.sin(E)], -1).reshape(-1, 3)


def _hit_boxes(origin, dirs, boxes) -> np.ndarray:
    """Distance along each ray to the nearest box (slab test), inf for misses."""
    best = np.full(dirs.shape[0], np.inf)
    with np.errstate(divide="ignore", invalid="ignore"):
        inv = 1.0 / dirs
    for lo, hi in boxes:
        t1 = (lo - origin) * inv
        t2 = (hi - origin) * inv
        tmin = np.nanmax(np.minimum(t1, t2), axis=1)
        tmax = np.nanmin(np.maximum(t1, t2), axis=1)
        hit = (tmax >= np.maximum(tmin, 0.0)) & (tmin > 1e-6)
        best = np.where(hit & (tmin < best), tmin, best)
    return best


def _cast(origin, R, dirs_local, boxes, ground_z, max_range):
    """World-frame hits of rays from a sensor at ``(R, origin)``; returns (points_world, box_id)."""
    dirs = dirs_local @ R.T
    d_box = np.full(dirs.shape[0], np.inf)
    owner = np.full(dirs.shape[0], -1)
    for i, b in enumerate(boxes):
        d = _hit_boxes(origin, dirs, [b])
        closer = d < d_box
        d_box = np.where(closer, d, d_box)
        owner = np.where(closer, i, owner)
    with np.errstate(divide="ignore", invalid="ignore"):
        d_ground = np.where(dirs[:, 2] < 0, (ground_z - origin[2]) / dirs[:, 2], np.inf)
    d = np.minimum(d_box, d_ground)
    owner = np.where(d_ground < d_box, -1, owner)
    keep = d <= max_range
    return origin + dirs[keep] * d[keep, None], owner[keep]


def _random_box(rng, cfg: SynthConfig, dist_range, ground_z):
    r = rng.uniform(*dist_range)
    a = rng.uniform(0, 2 * math.pi)
    cx, cy = r * math.cos(a), r * math.sin(a)
    sx, sy = rng.uniform(*cfg.box_size, size=2)
    h = rng.uniform(*cfg.box_height)
    lo = np.array([cx - sx / 2, cy - sy / 2, ground_z])
    hi = np.array([cx + sx / 2, cy + sy / 2, ground_z + h])
    return lo, hi


def _walls(rng, cfg: SynthConfig, ground_z):
    """Four thin slabs enclosing the scene so every ray returns."""
    d = rng.uniform(*cfg.walls, size=4)
    top = ground_z + cfg.wall_height
    big = max(d) + 1.0
    return [
        (np.array([d[0], -big, ground_z]), np.array([d[0] + 0.5, big, top])),
        (np.array([-d[1] - 0.5, -big, ground_z]), np.array([-d[1], big, top])),
        (np.array([-big, d[2], ground_z]), np.array([big, d[2] + 0.5, top])),
        (np.array([-big, -d[3] - 0.5, ground_z]), np.array([big, -d[3], top])),
    ]


def random_motion(rng, max_rotation_deg: float, max_translation: float) -> np.ndarray:
    """Sensor motion (frame-2 pose in frame 1) as a 3x4 matrix.

    Rotation is mostly yaw with total angle at most ``max_rotation_deg``;
    translation is mostly forward with norm at most ``max_translation``.
    """
    axis = rng.normal(size=3) * np.array([0.3, 0.3, 1.0])
    axis /= np.linalg.norm(axis)
    angle = math.radians(rng.uniform(-max_rotation_deg, max_rotation_deg))
    R = Rotation.from_rotvec(axis * angle).as_matrix()
    t = rng.normal(size=3) * np.array([1.0, 0.3, 0.05])
    t *= rng.uniform(0, max_translation) / np.linalg.norm(t)
    return np.hstack([R, t[:, None]])


def synth_scene(cfg: SynthConfig, rng: np.random.Generator | None = None) -> SynthPair:
    """Two scans of one random scene from sensor poses a random rigid motion apart."""
    rng = np.random.default_rng(cfg.seed) if rng is None else rng
    ground_z = -cfg.sensor_height
    boxes = [_random_box(rng, cfg, cfg.box_distance, ground_z) for _ in range(cfg.n_boxes)]
    if cfg.walls[1] > 0:
        boxes += _walls(rng, cfg, ground_z)
    if cfg.max_rotation_deg == 0 and cfg.max_translation == 0:
        motion = np.hstack([np.eye(3), np.zeros((3, 1))])
    else:
        motion = random_motion(rng, cfg.max_rotation_deg, cfg.max_translation)
    dyn1 = dyn2 = None
    if cfg.dynamic_box:
        lo, hi = _random_box(rng, cfg, cfg.dynamic_distance, ground_z)
        step = max(np.linalg.norm(motion[:, 3]), 0.1) * cfg.dynamic_factor
        a = rng.uniform(0, 2 * math.pi)
        shift = np.array([math.cos(a), math.sin(a), 0.0]) * step
        dyn1, dyn2 = (lo, hi), (lo + shift, hi + shift)
    dirs1 = _ray_directions(cfg, rng)
    dirs2 = _ray_directions(cfg, rng)
    b1 = boxes + ([dyn1] if dyn1 else [])
    b2 = boxes + ([dyn2] if dyn2 else [])
    p1, o1 = _cast(np.zeros(3), np.eye(3), dirs1, b1, ground_z, cfg.max_range)
    w2, o2 = _cast(motion[:, 3], motion[:, :3], dirs2, b2, ground_z, cfg.max_range)
    warp = invert_pose(motion)
    p2 = transform_points(warp, w2)
    dyn_id = len(boxes) if cfg.dynamic_box else -2
    return SynthPair(
        frame1=p1,
        frame2=p2,
        q_gt=rotmat_to_quat(warp[:, :3]),
        t_gt=warp[:, 3].copy(),
        dynamic1=o1 == dyn_id,
        dynamic2=o2 == dyn_id,
        dynamic_box=dyn1,
    )
