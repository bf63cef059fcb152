"""Stride-based sampling of kernel centers on a projected grid."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..projection import ProjectedCloud


@dataclass
class SampledSet:
    """Centers picked at fixed strides.

    ``grid`` is the sampled level as its own (H//s_h) x (W//s_w) cloud;
    ``centers_rc`` are the centers' cells in the *source* grid, in the
    row-major order of ``grid``'s valid slots.
    """

    grid: ProjectedCloud
    centers_rc: np.ndarray
    stride: tuple[int, int]

    @property
    def xyz(self) -> np.ndarray:
        return self.grid.points

    @property
    def slots(self) -> np.ndarray:
        return self.grid.cell_rc

    def __len__(self) -> int:
        return self.grid.count


def stride_sample(cloud: ProjectedCloud, s_h: int, s_w: int) -> SampledSet:
    if s_h < 1 or s_w < 1:
        raise ValueError(f"strides must be >= 1, got ({s_h}, {s_w})")
    Hs, Ws = cloud.H // s_h, cloud.W // s_w
    coords = cloud.coords[: Hs * s_h : s_h, : Ws * s_w : s_w]
    valid = cloud.valid[: Hs * s_h : s_h, : Ws * s_w : s_w]
    grid = ProjectedCloud(coords.copy(), valid.copy())
    centers_rc = grid.cell_rc * np.array([s_h, s_w], dtype=np.int64)
    return SampledSet(grid=grid, centers_rc=centers_rc, stride=(s_h, s_w))
