"""Projection-aware grouping: kernel windows on the grid plus 3D distance filtering."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .. import _pykernels, kernels
from ..errors import EmptyNeighborhood
from ..projection import ProjectedCloud

MODES = {"random": kernels.MODE_RANDOM, "knn": kernels.MODE_KNN}


def mode_id(mode) -> int:
    if isinstance(mode, str):
        try:
            return MODES[mode]
        except KeyError:
            raise ValueError(f"unknown selection mode {mode!r}") from None
    return int(mode)


@dataclass
class NeighborSet:
    """K neighbor cells per center (flat indices into the grid)."""

    idx: np.ndarray
    nsurv: np.ndarray
    mode: str

    def xyz(self, cloud: ProjectedCloud) -> np.ndarray:
        return cloud.coords.reshape(-1, 3)[self.idx]


def _check_kernel(k_h: int, k_w: int) -> None:
    if k_h < 1 or k_w < 1 or k_h % 2 == 0 or k_w % 2 == 0:
        raise ValueError(f"kernel extents must be odd and positive, got ({k_h}, {k_w})")


def kernel_group(cloud: ProjectedCloud, centers_rc, k_h: int, k_w: int) -> list[np.ndarray]:
    """Valid cells inside each center's window, in window scan order.

    Rows are clipped to the grid; columns wrap around the azimuth seam.
    """
    _check_kernel(k_h, k_w)
    centers_rc = np.asarray(centers_rc, dtype=np.int64).reshape(-1, 2)
    dr, dc = _pykernels.window_offsets(k_h, k_w, cloud.W)
    validf = cloud.valid.reshape(-1)
    out = []
    for r, c in centers_rc:
        rows = r + dr
        cols = np.mod(c + dc, cloud.W)
        ok = (rows >= 0) & (rows < cloud.H)
        flat = rows[ok] * cloud.W + cols[ok]
        out.append(flat[validf[flat]])
    return out


def distance_filter_select(center_xyz, cand_ids, cand_xyz, radius: float, K: int,
                           mode="random", seed: int = 0, stream: int = 0,
                           center_index: int = 0) -> np.ndarray:
    """Drop candidates farther than ``radius``, then pick exactly K.

    ``random`` draws without replacement (padding with repeats when fewer
    than K survive); ``knn`` takes the K nearest, ties to the lower id.
    Raises :class:`EmptyNeighborhood` when nothing survives.
    """
    if not radius > 0 or K < 1:
        raise ValueError("radius must be positive and K >= 1")
    cand_ids = np.asarray(cand_ids, dtype=np.int64).reshape(1, -1)
    cand_xyz = np.asarray(cand_xyz, dtype=np.float64).reshape(-1, 3)
    c = np.asarray(center_xyz, dtype=np.float64).reshape(3)
    dx = cand_xyz[:, 0] - c[0]
    dy = cand_xyz[:, 1] - c[1]
    dz = cand_xyz[:, 2] - c[2]
    d2 = (dx * dx + dy * dy + dz * dz).reshape(1, -1)
    surv = d2 <= radius * radius
    if not surv.any():
        raise EmptyNeighborhood(f"no candidate within {radius} m of center {c}")
    idx, _ = _pykernels._select(cand_ids, d2, surv, K, mode_id(mode), seed, stream, center_index)
    return idx[0]


def group(cloud: ProjectedCloud, centers_rc, centers_xyz, kernel, radius: float, K: int,
          mode="random", seed: int = 0, stream: int = 0) -> NeighborSet:
    """Batched kernel grouping + distance filtering + selection (active backend)."""
    k_h, k_w = kernel
    _check_kernel(k_h, k_w)
    idx, nsurv = kernels.window_group(
        cloud.coords, cloud.valid, centers_rc, centers_xyz, k_h, k_w, radius, K,
        mode_id(mode), seed, stream,
    )
    return NeighborSet(idx=idx, nsurv=nsurv, mode=mode if isinstance(mode, str) else str(mode))


def group_all(cloud: ProjectedCloud, centers_xyz, radius: float, K: int, mode="random",
              seed: int = 0, stream: int = 0) -> NeighborSet:
    """Distance filtering over every valid point, without the kernel prior."""
    idx, nsurv = kernels.full_group(
        cloud.points, cloud.flat_valid, centers_xyz, radius, K, mode_id(mode), seed, stream
    )
    return NeighborSet(idx=idx, nsurv=nsurv, mode=mode if isinstance(mode, str) else str(mode))
