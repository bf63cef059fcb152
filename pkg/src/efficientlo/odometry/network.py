"""Siamese projection-aware pyramid with coarse-to-fine pose warp-refinement.

The pose ``(q, t)`` predicted at every level maps frame-1 coordinates into
frame 2: ``x2 = R(q) x1 + t``. Warping frame 1 by it brings it onto frame 2.
"""
from __future__ import annotations

import dataclasses
import zlib
from dataclasses import dataclass, field

import numpy as np

from ..errors import EmptyLevel
from ..numeric import (
    Tensor,
    concat,
    linear,
    matmul,
    mul,
    norm2,
    quat_mul,
    quat_to_rotmat,
    reshape,
    softmax,
    sum_,
)
from ..pointops import (
    apply_mlp,
    attentive_cost_volume,
    glorot,
    init_cost_volume,
    init_mlp,
    set_conv,
    set_upconv,
)
from ..projection import ProjectedCloud, ProjectionConfig, project, projection_bins
from .config import NetworkConfig

_CONJ = np.array([1.0, -1.0, -1.0, -1.0])


def _stream(name: str) -> int:
    return zlib.crc32(name.encode("ascii"))


def normalize_quat(q: Tensor) -> Tensor:
    """``q / |q|``; a near-zero quaternion is replaced by the identity."""
    n = float(np.linalg.norm(q.data.astype(np.float64)))
    if n <= 1e-12:
        return Tensor(np.array([1.0, 0.0, 0.0, 0.0], dtype=q.dtype))
    return q / norm2(q)


def rotation_transposed(q: Tensor) -> Tensor:
    """``R(q)^T`` as a tensor, so that ``points @ R^T`` rotates row vectors."""
    return quat_to_rotmat(mul(q, Tensor(_CONJ.astype(q.dtype))))


def warp_points(points, q: Tensor, t: Tensor) -> Tensor:
    """Rotate then translate (n, 3) points by a unit quaternion pose."""
    P = points if isinstance(points, Tensor) else Tensor(np.asarray(points, dtype=q.dtype))
    return matmul(P, rotation_transposed(q)) + reshape(t, (1, 3))


def compose(dq: Tensor, dt: Tensor, q: Tensor, t: Tensor) -> tuple[Tensor, Tensor]:
    """``q' = dq q`` and ``t' = R(dq) t + dt``."""
    q_new = quat_mul(dq, q)
    t_new = reshape(matmul(reshape(t, (1, 3)), rotation_transposed(dq)), (3,)) + dt
    return q_new, t_new


@dataclass
class PyramidLevel:
    grid: ProjectedCloud
    feats: Tensor


@dataclass
class LevelState:
    """Per-level outputs aligned with the frame-1 points of that level."""

    level: int
    grid: ProjectedCloud
    feats: Tensor
    embedding: Tensor
    mask: Tensor
    q: Tensor
    t: Tensor


@dataclass
class ForwardResult:
    states: dict[int, LevelState]
    pyramid1: list[PyramidLevel]
    pyramid2: list[PyramidLevel]
    stats: dict = field(default_factory=dict)

    def pose(self, level: int = 0) -> tuple[np.ndarray, np.ndarray]:
        s = self.states[level]
        return s.q.data.astype(np.float64), s.t.data.astype(np.float64)

    @property
    def poses(self) -> list[tuple[Tensor, Tensor]]:
        return [(self.states[l].q, self.states[l].t) for l in sorted(self.states)]


class EfficientLONet:
    """Parameters plus the forward pass. ``params`` is a flat, ordered name -> Tensor dict."""

    def __init__(self, cfg: NetworkConfig, seed: int = 0, dtype=np.float32):
        self.cfg = cfg
        self.dtype = np.dtype(dtype)
        self.params: dict[str, Tensor] = {}
        self._init(np.random.default_rng(seed))

    # -- parameter bookkeeping -------------------------------------------
    def _add_mlp(self, prefix: str, rng, in_dim: int, widths) -> None:
        for i, (W, b) in enumerate(init_mlp(rng, in_dim, widths, self.dtype)):
            self.params[f"{prefix}.{i}.W"] = W
            self.params[f"{prefix}.{i}.b"] = b

    def _add_cv(self, prefix: str, rng, c1: int, c2: int, cv_cfg) -> None:
        for part, layers in init_cost_volume(rng, c1, c2, cv_cfg, self.dtype).items():
            for i, (W, b) in enumerate(layers):
                self.params[f"{prefix}.{part}.{i}.W"] = W
                self.params[f"{prefix}.{part}.{i}.b"] = b

    def _add_heads(self, prefix: str, rng, c: int) -> None:
        s = self.cfg.head_init_scale
        self.params[f"{prefix}.q.W"] = Tensor(glorot(rng, c, 4, self.dtype) * s, requires_grad=True)
        self.params[f"{prefix}.q.b"] = Tensor(np.array([1, 0, 0, 0], dtype=self.dtype), requires_grad=True)
        self.params[f"{prefix}.t.W"] = Tensor(glorot(rng, c, 3, self.dtype) * s, requires_grad=True)
        self.params[f"{prefix}.t.b"] = Tensor(np.zeros(3, dtype=self.dtype), requires_grad=True)

    def mlp(self, prefix: str) -> list:
        layers = []
        i = 0
        while f"{prefix}.{i}.W" in self.params:
            layers.append((self.params[f"{prefix}.{i}.W"], self.params[f"{prefix}.{i}.b"]))
            i += 1
        if not layers:
            raise KeyError(f"no layers under {prefix!r}")
        return layers

    def cv_weights(self, prefix: str) -> dict:
        return {part: self.mlp(f"{prefix}.{part}") for part in ("u1", "v1", "u2", "v2")}

    def _init(self, rng) -> None:
        cfg = self.cfg
        L = cfg.n_levels
        c = [lc.mlp[-1] for lc in cfg.levels]
        c_e = cfg.initial_cv.mlp2[-1]
        in_dim = 3
        for l, lc in enumerate(cfg.levels):
            self._add_mlp(f"pyr.{l}", rng, in_dim + (2 * c[l - 1] if l else 0), lc.mlp)
        top = L - 1
        self._add_cv(f"cv.{top - 1}", rng, c[top - 1], c[top - 1], cfg.initial_cv)
        self._add_mlp("embed", rng, 3 + 2 * c_e, cfg.embed_conv.mlp)
        self._add_mlp(f"mask.{top}", rng, c_e + c[top], cfg.mask_mlp)
        self._add_heads(f"head.{top}", rng, c_e)
        for l in range(top - 1, -1, -1):
            self._add_mlp(f"upce.{l}.a", rng, 3 + c_e, cfg.upconv.mlp1)
            self._add_mlp(f"upce.{l}.b", rng, cfg.upconv.mlp1[-1], cfg.upconv.mlp2)
            self._add_mlp(f"upcm.{l}.a", rng, 3 + c_e, cfg.upconv.mlp1)
            self._add_mlp(f"upcm.{l}.b", rng, cfg.upconv.mlp1[-1], cfg.upconv.mlp2)
            self._add_cv(f"rcv.{l}", rng, c[l], c[l], cfg.refine_cv)
            self._add_mlp(f"emb.{l}", rng, 2 * c_e + c[l], cfg.embed_mlp)
            self._add_mlp(f"mask.{l}", rng, 2 * c_e + c[l], cfg.mask_mlp)
            self._add_heads(f"head.{l}", rng, c_e)
        self.params["loss.s_x"] = Tensor(np.array(cfg.s_x0, dtype=self.dtype), requires_grad=True)
        self.params["loss.s_q"] = Tensor(np.array(cfg.s_q0, dtype=self.dtype), requires_grad=True)

    def load_state(self, state: dict) -> None:
        missing = set(self.params) - set(state)
        if missing:
            raise KeyError(f"checkpoint lacks parameters: {sorted(missing)[:5]}")
        for k, t in self.params.items():
            arr = np.asarray(state[k])
            if arr.shape != t.shape:
                raise ValueError(f"{k}: checkpoint shape {arr.shape} != model {t.shape}")
            t.data = arr.astype(self.dtype)

    def state(self) -> dict:
        return {k: t.data for k, t in self.params.items()}

    def astype(self, dtype) -> "EfficientLONet":
        """Copy of the network with parameters cast to ``dtype``."""
        other = object.__new__(EfficientLONet)
        other.cfg = self.cfg
        other.dtype = np.dtype(dtype)
        other.params = {k: Tensor(t.data.astype(dtype), requires_grad=True) for k, t in self.params.items()}
        return other

    # -- building blocks ----------------------------------------------------
    def feature_pyramid(self, cloud: ProjectedCloud, seed: int = 0) -> list[PyramidLevel]:
        levels = []
        grid, feats = cloud, None
        for l, lc in enumerate(self.cfg.levels):
            sampled, feats = set_conv(grid, feats, lc, self.mlp(f"pyr.{l}"), seed, _stream(f"pyr.{l}"))
            grid = sampled.grid
            levels.append(PyramidLevel(grid=grid, feats=feats))
        return levels

    def mask_and_pose(self, E: Tensor, mask_in: Tensor, level: int):
        """Mask = softmax over points of a shared MLP; pose from the masked sum of ``E``."""
        logits = apply_mlp(mask_in, self.mlp(f"mask.{level}"), final_relu=False)
        M = softmax(logits, axis=0)
        pooled = reshape(sum_(E * M, axis=0), (1, -1))
        p = f"head.{level}"
        q_raw = reshape(linear(pooled, self.params[f"{p}.q.W"], self.params[f"{p}.q.b"]), (4,))
        t = reshape(linear(pooled, self.params[f"{p}.t.W"], self.params[f"{p}.t.b"]), (3,))
        return M, normalize_quat(q_raw), t

    def forward(self, pc1: ProjectedCloud, pc2: ProjectedCloud, seed: int = 0) -> ForwardResult:
        cfg = self.cfg
        L = cfg.n_levels
        top = L - 1
        pyr1 = self.feature_pyramid(pc1, seed)
        pyr2 = self.feature_pyramid(pc2, seed)
        for l in range(L):
            if pyr1[l].grid.count == 0 or pyr2[l].grid.count == 0:
                raise EmptyLevel(f"pyramid level {l} is empty")
        stats: dict = {"cv": {}, "upconv_fallbacks": 0}

        # initial embedding at the penultimate level
        g1 = pyr1[top - 1].grid
        cv_cfg = dataclasses.replace(cfg.initial_cv, radius=cfg.grid_radii[top - 1])
        E, st = attentive_cost_volume(
            Tensor(g1.points.astype(self.dtype)), g1.cell_rc, g1, pyr1[top - 1].feats,
            pyr2[top - 1].grid, pyr2[top - 1].feats, cv_cfg, self.cv_weights(f"cv.{top - 1}"),
            seed, _stream(f"cv.{top - 1}"),
        )
        stats["cv"][top - 1] = st
        _, E = set_conv(g1, E, cfg.embed_conv, self.mlp("embed"), seed, _stream("embed"))
        F = pyr1[top].feats
        M, q, t = self.mask_and_pose(E, concat([E, F], axis=-1), top)
        states = {top: LevelState(top, pyr1[top].grid, F, E, M, q, t)}

        for l in range(top - 1, -1, -1):
            states[l] = self.warp_refine_level(states[l + 1], pyr1[l], pyr2[l], l, seed, stats)
        return ForwardResult(states=states, pyramid1=pyr1, pyramid2=pyr2, stats=stats)

    def warp_refine_level(self, coarse: LevelState, lvl1: PyramidLevel, lvl2: PyramidLevel,
                          l: int, seed: int, stats: dict) -> LevelState:
        cfg = self.cfg
        dense, sparse = lvl1.grid, coarse.grid
        stride = cfg.levels[l + 1].stride
        up_cfg = dataclasses.replace(cfg.upconv, radius=cfg.grid_radii[l + 1])
        up_stream = _stream(f"up.{l}")
        CE = set_upconv(dense, sparse, coarse.embedding, stride, up_cfg, self.mlp(f"upce.{l}.a"),
                        self.mlp(f"upce.{l}.b"), seed, up_stream)
        CM = set_upconv(dense, sparse, coarse.mask, stride, up_cfg, self.mlp(f"upcm.{l}.a"),
                        self.mlp(f"upcm.{l}.b"), seed, up_stream)

        warped, wgrid, cells = pose_warp_level(dense.points, coarse.q, coarse.t,
                                               cfg.level_projection(l))
        cv_cfg = dataclasses.replace(cfg.refine_cv, radius=cfg.grid_radii[l])
        RE, st = attentive_cost_volume(warped, cells, wgrid, lvl1.feats, lvl2.grid, lvl2.feats,
                                       cv_cfg, self.cv_weights(f"rcv.{l}"), seed, _stream(f"rcv.{l}"))
        stats["cv"][l] = st

        E = apply_mlp(concat([CE, RE, lvl1.feats], axis=-1), self.mlp(f"emb.{l}"))
        M, dq, dt = self.mask_and_pose(E, concat([E, CM, lvl1.feats], axis=-1), l)
        q, t = compose(dq, dt, coarse.q, coarse.t)
        return LevelState(l, dense, lvl1.feats, E, M, q, t)

    def predict(self, pc1: ProjectedCloud, pc2: ProjectedCloud, seed: int = 0, level: int = 0):
        """Finest-level ``(q, t)`` as float64 arrays, without recording gradients."""
        return self.forward(pc1, pc2, seed).pose(level)


def pose_warp_level(points, q: Tensor, t: Tensor, proj: ProjectionConfig):
    """Warp level points by ``(q, t)`` and re-project them onto the level grid.

    Returns ``(warped tensor, grid, cells)``: the grid keeps the nearest
    warped point per cell (its ``source`` indexes ``points``); ``cells`` is
    every warped point's (row, col), rows clamped into the grid.
    """
    warped = warp_points(points, q, t)
    xyz = warped.data.astype(np.float64)
    grid = project(xyz, proj)
    rows, cols, _, _ = projection_bins(xyz, proj)
    cells = np.stack([np.clip(rows, 0, proj.H - 1), cols], axis=1)
    return warped, grid, cells
