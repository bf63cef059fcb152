"""Set conv, set upconv and the attentive cost volume on projected grids.

Layer weights are lists of ``(W, b)`` tensor pairs. Coordinates enter the
MLPs as float constants except where they are tensors (warped clouds), in
which case gradients flow back to the pose.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..errors import EmptyLevel
from ..numeric import Tensor, concat, gather, linear, max_reduce, relu, reshape, softmax, sub, sum_
from ..projection import ProjectedCloud
from .grouping import group
from .sampling import SampledSet, stride_sample

Layers = list  # list[tuple[Tensor, Tensor]]


@dataclass(frozen=True)
class LevelConfig:
    """One set conv layer: sampling stride, window, neighbor count, filter radius, MLP."""

    stride: tuple[int, int] = (2, 2)
    kernel: tuple[int, int] = (7, 11)
    K: int = 16
    radius: float = 3.0
    mlp: tuple[int, ...] = (16, 16, 32)
    mode: str = "random"

    def __post_init__(self):
        kh, kw = self.kernel
        if kh % 2 == 0 or kw % 2 == 0 or kh < 1 or kw < 1:
            raise ValueError(f"kernel extents must be odd, got {self.kernel}")
        if self.K < 1 or not self.radius > 0:
            raise ValueError("K must be >= 1 and radius > 0")
        if min(self.stride) < 1:
            raise ValueError("strides must be >= 1")


@dataclass(frozen=True)
class UpconvConfig:
    kernel: tuple[int, int] = (5, 9)
    K: int = 8
    radius: float = 6.0
    mlp1: tuple[int, ...] = (128, 64)
    mlp2: tuple[int, ...] = (64,)
    mode: str = "random"


@dataclass(frozen=True)
class CostVolumeConfig:
    """Two-stage attentive cost volume. ``mlp1``/``mlp2`` are the u/v widths per stage."""

    K1: int = 4
    K2: int = 6
    kernel1: tuple[int, int] = (5, 9)
    kernel2: tuple[int, int] = (5, 9)
    radius: float = 6.0
    mlp1: tuple[int, ...] = (128, 64, 64)
    mlp2: tuple[int, ...] = (128, 64)
    mode2: str = "random"


def glorot(rng: np.random.Generator, fan_in: int, fan_out: int, dtype=np.float32) -> np.ndarray:
    a = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-a, a, size=(fan_in, fan_out)).astype(dtype)


def init_mlp(rng, in_dim: int, widths, dtype=np.float32) -> Layers:
    layers = []
    for w in widths:
        layers.append(
            (Tensor(glorot(rng, in_dim, w, dtype), requires_grad=True),
             Tensor(np.zeros(w, dtype=dtype), requires_grad=True))
        )
        in_dim = w
    return layers


def apply_mlp(x: Tensor, layers: Layers, final_relu: bool = True) -> Tensor:
    for i, (W, b) in enumerate(layers):
        x = linear(x, W, b)
        if final_relu or i < len(layers) - 1:
            x = relu(x)
    return x


def _dtype(layers: Layers):
    return layers[0][0].dtype


def _const(a, dtype) -> Tensor:
    return Tensor(np.asarray(a, dtype=dtype))


def set_conv(cloud: ProjectedCloud, feats: Tensor | None, cfg: LevelConfig, layers: Layers,
             seed: int = 0, stream: int = 0):
    """Stride-sample centers, group in kernel windows, filter, aggregate with MLP + max.

    ``feats`` rows follow ``cloud.points`` order (None at the first level).
    Returns ``(SampledSet, features)``; features follow ``sampled.grid.points``.
    """
    sampled = stride_sample(cloud, *cfg.stride)
    if len(sampled) == 0:
        raise EmptyLevel("stride sampling produced no valid centers")
    nb = group(cloud, sampled.centers_rc, sampled.xyz, cfg.kernel, cfg.radius, cfg.K,
               cfg.mode, seed, stream)
    return sampled, aggregate(cloud, feats, sampled.centers_rc, sampled.xyz, nb.idx, layers)


def aggregate(cloud: ProjectedCloud, feats: Tensor | None, centers_rc, centers_xyz, idx,
              layers: Layers) -> Tensor:
    """``MAX_k MLP((x_k - x) + f_k + f_center)`` over a fixed neighbor index table."""
    dtype = _dtype(layers)
    nbr = cloud.coords.reshape(-1, 3)[idx]
    parts = [_const(nbr - np.asarray(centers_xyz)[:, None, :], dtype)]
    if feats is not None:
        rows = cloud.rank[idx]
        flat_c = centers_rc[:, 0] * cloud.W + centers_rc[:, 1]
        crow = np.repeat(cloud.rank[flat_c][:, None], idx.shape[1], axis=1)
        parts.append(gather(feats, rows))
        parts.append(gather(feats, crow))
    h = apply_mlp(concat(parts, axis=-1), layers)
    out, _ = max_reduce(h, axis=1)
    return out


def _sparse_window_center(dense_rc: np.ndarray, stride, sparse: ProjectedCloud) -> np.ndarray:
    rows = np.minimum(dense_rc[:, 0] // stride[0], sparse.H - 1)
    cols = np.mod(dense_rc[:, 1] // stride[1], sparse.W)
    return np.stack([rows, cols], axis=1)


def upconv_neighbors(dense: ProjectedCloud, sparse: ProjectedCloud, stride, cfg: UpconvConfig,
                     seed: int = 0, stream: int = 0):
    """Neighbor table (flat cells of ``sparse``) for every valid dense cell.

    Centers whose window has no point within the radius fall back to their
    nearest window cell; an empty window falls back to the global nearest.
    """
    if sparse.count == 0:
        raise EmptyLevel("sparse level has no valid points")
    wc = _sparse_window_center(dense.cell_rc, stride, sparse)
    xyz = dense.points
    nb = group(sparse, wc, xyz, cfg.kernel, cfg.radius, cfg.K, cfg.mode, seed, stream)
    idx = nb.idx
    empty = np.flatnonzero(nb.nsurv == 0)
    fallbacks = int(empty.size)
    if empty.size:
        nn = group(sparse, wc[empty], xyz[empty], cfg.kernel, np.inf, 1, "knn").idx[:, 0]
        missing = nn < 0
        if missing.any():
            d = ((xyz[empty[missing], None, :] - sparse.points[None, :, :]) ** 2).sum(-1)
            nn[missing] = sparse.flat_valid[np.argmin(d, axis=1)]
        idx[empty] = nn[:, None]
    return idx, fallbacks


def set_upconv(dense: ProjectedCloud, sparse: ProjectedCloud, sparse_feats: Tensor, stride,
               cfg: UpconvConfig, layers1: Layers, layers2: Layers, seed: int = 0,
               stream: int = 0) -> Tensor:
    """Propagate sparse-level features onto every valid dense cell."""
    idx, _ = upconv_neighbors(dense, sparse, stride, cfg, seed, stream)
    dtype = _dtype(layers1)
    rel = sparse.coords.reshape(-1, 3)[idx] - dense.points[:, None, :]
    x = concat([_const(rel, dtype), gather(sparse_feats, sparse.rank[idx])], axis=-1)
    h, _ = max_reduce(apply_mlp(x, layers1), axis=1)
    return apply_mlp(h, layers2)


@dataclass
class CostVolumeStats:
    row_scan_fallbacks: int = 0
    global_fallbacks: int = 0
    stage2_self_fallbacks: int = 0
    extra: dict = field(default_factory=dict)


def _stage1_neighbors(cloud2: ProjectedCloud, cells, xyz, cfg: CostVolumeConfig, stats):
    nb = group(cloud2, cells, xyz, cfg.kernel1, np.inf, cfg.K1, "knn")
    idx = nb.idx
    empty = np.flatnonzero(nb.nsurv == 0)
    if empty.size:
        stats.row_scan_fallbacks += int(empty.size)
        kh = cfg.kernel1[0]
        full_w = cloud2.W if cloud2.W % 2 == 1 else cloud2.W + 1
        rows = group(cloud2, cells[empty], xyz[empty], (kh, full_w), np.inf, cfg.K1, "knn")
        idx[empty] = rows.idx
        still = empty[rows.nsurv == 0]
        if still.size:
            stats.global_fallbacks += int(still.size)
            allc = group(cloud2, cells[still], xyz[still], (2 * cloud2.H + 1, full_w), np.inf,
                         cfg.K1, "knn")
            idx[still] = allc.idx
    return idx


def attentive_cost_volume(x1: Tensor, cells1, grid1: ProjectedCloud, F1: Tensor,
                          cloud2: ProjectedCloud, F2: Tensor, cfg: CostVolumeConfig,
                          weights: dict, seed: int = 0, stream: int = 0):
    """Embedding features located at the points of frame 1.

    ``x1`` (n, 3) holds frame-1 points (a tensor when warped, so the pose
    receives gradients); ``cells1`` their cells on the shared level grid;
    ``grid1`` the frame-1 grid whose ``source`` maps cells to rows of
    ``x1``. ``F2`` rows follow ``cloud2.points``. ``weights`` holds layer
    lists ``u1``, ``v1``, ``u2``, ``v2``. Returns ``(E, stats)``.
    """
    if cloud2.count == 0:
        raise EmptyLevel("frame-2 level has no valid points")
    stats = CostVolumeStats()
    dtype = _dtype(weights["v1"])
    n = x1.shape[0]
    xnum = np.asarray(x1.data, dtype=np.float64)
    cells1 = np.asarray(cells1, dtype=np.int64)
    cells1 = np.stack([np.clip(cells1[:, 0], 0, cloud2.H - 1), np.mod(cells1[:, 1], cloud2.W)], 1)
    x3 = reshape(x1, (n, 1, 3))

    # stage 1: K1 nearest frame-2 points inside the window on frame 2's grid
    idx1 = _stage1_neighbors(cloud2, cells1, xnum, cfg, stats)
    y = _const(cloud2.coords.reshape(-1, 3)[idx1], dtype)
    self_rows1 = np.repeat(np.arange(n)[:, None], cfg.K1, axis=1)
    in1 = concat([sub(y, x3), gather(F1, self_rows1), gather(F2, cloud2.rank[idx1])], axis=-1)
    w1 = softmax(apply_mlp(in1, weights["u1"], final_relu=False), axis=1)
    pe = sum_(w1 * apply_mlp(in1, weights["v1"]), axis=1)

    # stage 2: random-in-ball regrouping of the first embeddings within frame 1
    nb2 = group(grid1, cells1, xnum, cfg.kernel2, cfg.radius, cfg.K2, cfg.mode2, seed, stream)
    rows2 = grid1.source.reshape(-1)[np.where(nb2.idx >= 0, nb2.idx, 0)]
    empty = nb2.nsurv == 0
    if empty.any():
        stats.stage2_self_fallbacks += int(empty.sum())
        rows2[empty] = np.arange(n)[empty, None]
    self_rows2 = np.repeat(np.arange(n)[:, None], cfg.K2, axis=1)
    in2 = concat([sub(gather(x1, rows2), x3), gather(pe, self_rows2), gather(pe, rows2)], axis=-1)
    w2 = softmax(apply_mlp(in2, weights["u2"], final_relu=False), axis=1)
    e = sum_(w2 * apply_mlp(in2, weights["v2"]), axis=1)
    return e, stats


def init_cost_volume(rng, c1: int, c2: int, cfg: CostVolumeConfig, dtype=np.float32) -> dict:
    c_pe = cfg.mlp1[-1]
    return {
        "u1": init_mlp(rng, 3 + c1 + c2, cfg.mlp1, dtype),
        "v1": init_mlp(rng, 3 + c1 + c2, cfg.mlp1, dtype),
        "u2": init_mlp(rng, 3 + 2 * c_pe, cfg.mlp2, dtype),
        "v2": init_mlp(rng, 3 + 2 * c_pe, cfg.mlp2, dtype),
    }
