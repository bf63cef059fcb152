"""Cylindrical projection of LiDAR scans onto an ordered H x W grid of raw XYZ."""
from __future__ import annotations

import math
import struct
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path

import numpy as np

from . import kernels


@dataclass(frozen=True)
class ProjectionConfig:
    """Grid geometry. Angles are stored in degrees; radian views are properties."""

    H: int = 64
    W: int = 1800
    fov_up: float = 2.0
    fov_down: float = -24.8

    def __post_init__(self):
        if self.H < 1 or self.W < 1:
            raise ValueError(f"grid must be at least 1x1, got {self.H}x{self.W}")
        if not self.fov_up > self.fov_down:
            raise ValueError("fov_up must exceed fov_down")

    @property
    def phi_max(self) -> float:
        return math.radians(self.fov_up)

    @property
    def phi_min(self) -> float:
        return math.radians(self.fov_down)

    @property
    def d_theta(self) -> float:
        return 2.0 * math.pi / self.W

    @property
    def d_phi(self) -> float:
        return (self.phi_max - self.phi_min) / self.H

    def downsample(self, s_h: int, s_w: int) -> "ProjectionConfig":
        """Geometry of the grid produced by stride sampling with ``(s_h, s_w)``.

        Rows keep their angular pitch times ``s_h``; a trailing remainder of
        rows is cut from the bottom of the field of view.
        """
        H = self.H // s_h
        W = self.W // s_w
        if H < 1 or W < 1:
            raise ValueError(f"strides ({s_h},{s_w}) too large for {self.H}x{self.W}")
        down = self.fov_up - (self.fov_up - self.fov_down) * (H * s_h) / self.H
        return ProjectionConfig(H=H, W=W, fov_up=self.fov_up, fov_down=down)


@dataclass
class ProjectedCloud:
    """H x W grid of XYZ (float64) with a validity mask.

    ``source`` holds, per valid cell, the index of the input point stored
    there (-1 elsewhere). For grids that were not produced by ``project``
    it is the row-major rank of the cell.
    """

    coords: np.ndarray
    valid: np.ndarray
    source: np.ndarray | None = None
    stats: dict = field(default_factory=dict)

    def __post_init__(self):
        self.coords = np.asarray(self.coords, dtype=np.float64)
        self.valid = np.asarray(self.valid, dtype=bool)
        if self.coords.shape != self.valid.shape + (3,):
            raise ValueError(f"coords {self.coords.shape} do not match mask {self.valid.shape}")
        if self.source is None:
            src = np.full(self.valid.shape, -1, dtype=np.int64)
            src[self.valid] = np.arange(int(self.valid.sum()))
            self.source = src

    @property
    def H(self) -> int:
        return self.valid.shape[0]

    @property
    def W(self) -> int:
        return self.valid.shape[1]

    @property
    def count(self) -> int:
        return int(self.valid.sum())

    @cached_property
    def flat_valid(self) -> np.ndarray:
        """Flat cell indices of valid cells, row-major."""
        return np.flatnonzero(self.valid.reshape(-1))

    @cached_property
    def points(self) -> np.ndarray:
        """Valid XYZ in row-major cell order, shape (count, 3)."""
        return self.coords.reshape(-1, 3)[self.flat_valid]

    @cached_property
    def cell_rc(self) -> np.ndarray:
        """(row, col) of each valid cell, row-major, shape (count, 2)."""
        f = self.flat_valid
        return np.stack([f // self.W, f % self.W], axis=1)

    @cached_property
    def rank(self) -> np.ndarray:
        """Flat cell index -> row in :attr:`points` (-1 for invalid cells)."""
        r = np.full(self.H * self.W, -1, dtype=np.int64)
        r[self.flat_valid] = np.arange(self.flat_valid.size)
        return r

    @classmethod
    def empty(cls, H: int, W: int) -> "ProjectedCloud":
        return cls(np.zeros((H, W, 3)), np.zeros((H, W), dtype=bool))


def wrap_column(j, W: int):
    """Column index modulo ``W`` with a non-negative result."""
    if W < 1:
        raise ValueError("W must be >= 1")
    return np.mod(j, W) if isinstance(j, np.ndarray) else int(j) % W


def crop_square(points, half_side: float) -> np.ndarray:
    """Keep points with ``max(|x|, |y|) <= half_side``."""
    if not half_side > 0:
        raise ValueError("half_side must be positive")
    pts = np.asarray(points, dtype=np.float64).reshape(-1, 3)
    if math.isinf(half_side):
        return pts
    keep = np.maximum(np.abs(pts[:, 0]), np.abs(pts[:, 1])) <= half_side
    return pts[keep]


def projection_bins(points, cfg: ProjectionConfig):
    """Grid row/column of each point.

    Returns ``(rows, cols, ranges, in_fov)``. Points at the origin get
    ``in_fov=False``. Rows of out-of-FOV points are left unclamped.
    """
    pts = np.asarray(points, dtype=np.float64).reshape(-1, 3)
    x, y, z = pts[:, 0], pts[:, 1], pts[:, 2]
    r = np.sqrt(x * x + y * y + z * z)
    nonzero = r > 0
    rs = np.where(nonzero, r, 1.0)
    cols = np.floor(np.arctan2(y, x) / cfg.d_theta).astype(np.int64) + cfg.W // 2
    cols = np.mod(cols, cfg.W)
    elev = np.arcsin(np.clip(z / rs, -1.0, 1.0))
    rows = np.floor((cfg.phi_max - elev) / cfg.d_phi).astype(np.int64)
    in_fov = nonzero & (rows >= 0) & (rows < cfg.H)
    return rows, cols, r, in_fov


def project(points, cfg: ProjectionConfig) -> ProjectedCloud:
    """Project points onto the grid, keeping the nearest point per cell."""
    pts = np.asarray(points, dtype=np.float64).reshape(-1, 3)
    rows, cols, r, in_fov = projection_bins(pts, cfg)
    cells = np.where(in_fov, rows * cfg.W + cols, -1)
    owner = kernels.scatter_min_range(cells, r, cfg.H * cfg.W)
    valid = owner >= 0
    coords = np.zeros((cfg.H * cfg.W, 3))
    coords[valid] = pts[owner[valid]]
    n_origin = int(np.count_nonzero(r == 0))
    stats = {
        "n_input": int(pts.shape[0]),
        "n_origin": n_origin,
        "n_out_of_fov": int(pts.shape[0] - n_origin - np.count_nonzero(in_fov)),
        "n_occluded": int(np.count_nonzero(in_fov) - np.count_nonzero(valid)),
    }
    return ProjectedCloud(
        coords.reshape(cfg.H, cfg.W, 3),
        valid.reshape(cfg.H, cfg.W),
        owner.reshape(cfg.H, cfg.W),
        stats,
    )


_CELL = np.dtype([("xyz", "<f4", (3,)), ("valid", "u1")])


def write_grid(path, cloud: ProjectedCloud) -> None:
    """Binary dump: ``<u32 H><u32 W>`` then H*W cells of 3 LE float32 + 1 validity byte."""
    cells = np.zeros(cloud.H * cloud.W, dtype=_CELL)
    cells["xyz"] = cloud.coords.reshape(-1, 3)
    cells["valid"] = cloud.valid.reshape(-1)
    with open(path, "wb") as fh:
        fh.write(struct.pack("<II", cloud.H, cloud.W))
        fh.write(cells.tobytes())


def read_grid(path) -> ProjectedCloud:
    data = Path(path).read_bytes()
    if len(data) < 8:
        raise ValueError(f"{path}: truncated grid header")
    H, W = struct.unpack_from("<II", data)
    expected = 8 + H * W * _CELL.itemsize
    if len(data) != expected:
        raise ValueError(f"{path}: expected {expected} bytes for {H}x{W} grid, got {len(data)}")
    cells = np.frombuffer(data, dtype=_CELL, offset=8)
    return ProjectedCloud(
        cells["xyz"].astype(np.float64).reshape(H, W, 3), cells["valid"].astype(bool).reshape(H, W)
    )
