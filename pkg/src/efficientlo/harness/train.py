"""Training loop, sequence inference and the datasets they consume."""
from __future__ import annotations

import csv
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..errors import DatasetEmpty, NonFiniteError, NonFiniteLoss
from ..geometry import (
    AugmentConfig,
    apply_augmentation,
    invert_pose,
    make_augmentation,
    pose_to_matrix,
    quat_to_rotmat,
    rotation_angle,
    rotmat_to_quat,
)
from ..numeric import Adam, LRSchedule, Tape, backward, load_checkpoint, save_checkpoint
from ..odometry import EfficientLONet, NetworkConfig, total_loss
from ..projection import ProjectedCloud, project
from .io import accumulate, load_scan, relative_pose
from .synth import SynthConfig, synth_scene


@dataclass
class Pair:
    """Two scans and the warp ``(q, t)`` taking frame-1 coordinates to frame 2."""

    frame1: np.ndarray
    frame2: np.ndarray
    q_gt: np.ndarray
    t_gt: np.ndarray
    dynamic1: np.ndarray | None = None
    dynamic_box: tuple | None = None


def synthetic_pairs(cfg: SynthConfig, n: int) -> list[Pair]:
    """``n`` independent scenes with seeds ``cfg.seed, cfg.seed + 1, ...``."""
    from dataclasses import replace

    out = []
    for i in range(n):
        p = synth_scene(replace(cfg, seed=cfg.seed + i))
        out.append(Pair(p.frame1, p.frame2, p.q_gt, p.t_gt, p.dynamic1, p.dynamic_box))
    return out


def sequence_pairs(scan_paths, poses, half_side: float = np.inf) -> list[Pair]:
    """Consecutive-scan pairs from a sequence with LiDAR-frame absolute poses."""
    scan_paths = list(scan_paths)
    if len(scan_paths) != len(poses):
        raise ValueError(f"{len(scan_paths)} scans but {len(poses)} poses")
    pairs = []
    for k in range(1, len(scan_paths)):
        motion = relative_pose(poses[k - 1], poses[k])
        warp = invert_pose(motion)
        pairs.append(Pair(load_scan(scan_paths[k - 1], half_side), load_scan(scan_paths[k], half_side),
                          rotmat_to_quat(warp[:, :3]), warp[:, 3].copy()))
    return pairs


@dataclass(frozen=True)
class TrainConfig:
    steps: int = 2000
    batch_size: int = 8
    lr: float = 1e-3
    lr_decay: float = 0.7
    lr_interval: int = 200_000
    lr_floor: float = 1e-5
    seed: int = 0
    augment: bool = False
    fixed_grouping: bool = True
    log_every: int = 10
    checkpoint_every: int = 0

    def __post_init__(self):
        if self.steps < 0 or self.batch_size < 1:
            raise ValueError("steps must be >= 0 and batch_size >= 1")


def pose_errors(q, t, q_gt, t_gt) -> tuple[float, float]:
    """Rotation error (degrees) and translation error (meters) of a predicted warp."""
    R = quat_to_rotmat(np.asarray(q, dtype=np.float64) / np.linalg.norm(q))
    dR = R @ quat_to_rotmat(q_gt).T
    return float(np.degrees(rotation_angle(dR))), float(np.linalg.norm(np.asarray(t) - t_gt))


@dataclass
class TrainResult:
    net: EfficientLONet
    history: list = field(default_factory=list)
    checkpoint: Path | None = None


class Trainer:
    """Adam over the network and loss parameters, one averaged batch gradient per step."""

    def __init__(self, net: EfficientLONet, pairs: list[Pair], cfg: TrainConfig,
                 augment: AugmentConfig | None = None):
        if not pairs:
            raise DatasetEmpty("no training pairs")
        self.net = net
        self.pairs = pairs
        self.cfg = cfg
        self.augment = augment or AugmentConfig()
        self.rng = np.random.default_rng(cfg.seed)
        sched = LRSchedule(cfg.lr, cfg.lr_decay, cfg.lr_interval, cfg.lr_floor)
        self.opt = Adam(net.params, sched)
        self.step = 0
        self._order: list[int] = []
        self._cache: dict[int, tuple[ProjectedCloud, ProjectedCloud]] = {}

    def _projected(self, i: int):
        proj = self.net.cfg.projection
        if i not in self._cache:
            p = self.pairs[i]
            self._cache[i] = (project(p.frame1, proj), project(p.frame2, proj))
        return self._cache[i]

    def sample(self, i: int):
        """Projected pair and target warp, augmented when enabled."""
        p = self.pairs[i]
        if not self.cfg.augment:
            pc1, pc2 = self._projected(i)
            return pc1, pc2, p.q_gt, p.t_gt
        motion = invert_pose(pose_to_matrix(p.q_gt, p.t_gt))
        T_aug = make_augmentation(self.rng, self.augment)
        pts1, motion = apply_augmentation(p.frame1, motion, T_aug)
        warp = invert_pose(motion)
        _, pc2 = self._projected(i)
        return project(pts1, self.net.cfg.projection), pc2, rotmat_to_quat(warp[:, :3]), warp[:, 3]

    def _next_batch(self) -> list[int]:
        batch = []
        while len(batch) < self.cfg.batch_size:
            if not self._order:
                self._order = list(self.rng.permutation(len(self.pairs)))
            batch.append(int(self._order.pop()))
        return batch

    def train_step(self) -> dict:
        net, cfg = self.net, self.cfg
        batch = self._next_batch()
        grads = None
        total = 0.0
        n_levels = net.cfg.n_levels
        rot = np.zeros(n_levels)
        trans = np.zeros(n_levels)
        gseed = 0 if cfg.fixed_grouping else cfg.seed * 1_000_003 + self.step
        for i in batch:
            pc1, pc2, q_gt, t_gt = self.sample(i)
            try:
                with Tape() as tape:
                    res = net.forward(pc1, pc2, seed=gseed)
                    loss, _ = total_loss(res.poses, q_gt, t_gt, net.params["loss.s_x"],
                                         net.params["loss.s_q"], net.cfg.alphas)
                g = backward(tape, loss, net.params)
            except NonFiniteError as exc:
                raise NonFiniteLoss(f"step {self.step}, pair {i}: {exc}") from exc
            if not np.isfinite(loss.data):
                raise NonFiniteLoss(f"step {self.step}, pair {i}: loss {float(loss.data)}")
            total += float(loss.data)
            for l in range(n_levels):
                r, t = pose_errors(res.states[l].q.data, res.states[l].t.data, q_gt, t_gt)
                rot[l] += r
                trans[l] += t
            if grads is None:
                grads = {k: v.astype(np.float64) for k, v in g.items()}
            else:
                for k, v in g.items():
                    grads[k] += v
        n = len(batch)
        for k in grads:
            grads[k] /= n
            if not np.all(np.isfinite(grads[k])):
                raise NonFiniteLoss(f"step {self.step}: non-finite gradient for {k}")
        lr = self.opt.lr
        self.opt.step(grads)
        self.step += 1
        row = {"step": self.step - 1, "loss": total / n, "lr": lr,
               "s_x": float(net.params["loss.s_x"].data), "s_q": float(net.params["loss.s_q"].data)}
        for l in range(n_levels):
            row[f"rot_deg_{l}"] = rot[l] / n
            row[f"trans_m_{l}"] = trans[l] / n
        return row

    def evaluate(self, indices=None, seed: int = 0) -> np.ndarray:
        """Per-pair finest-level (rotation deg, translation m) without augmentation."""
        out = []
        for i in range(len(self.pairs)) if indices is None else indices:
            pc1, pc2 = self._projected(i)
            q, t = self.net.predict(pc1, pc2, seed=seed)
            out.append(pose_errors(q, t, self.pairs[i].q_gt, self.pairs[i].t_gt))
        return np.array(out).reshape(-1, 2)

    def fit(self, out_dir=None, progress=None) -> TrainResult:
        cfg = self.cfg
        out = Path(out_dir) if out_dir is not None else None
        log = None
        if out is not None:
            out.mkdir(parents=True, exist_ok=True)
            log = open(out / "train_log.csv", "w", newline="")
        history = []
        writer = None
        try:
            for _ in range(cfg.steps):
                row = self.train_step()
                history.append(row)
                if log is not None and (row["step"] % cfg.log_every == 0 or self.step == cfg.steps):
                    if writer is None:
                        writer = csv.DictWriter(log, fieldnames=list(row))
                        writer.writeheader()
                    writer.writerow(row)
                    log.flush()
                if progress is not None:
                    progress(row)
                if out is not None and cfg.checkpoint_every and self.step % cfg.checkpoint_every == 0:
                    save_checkpoint(out / f"ckpt_{self.step:07d}.bin", self.net.params)
        finally:
            if log is not None:
                log.close()
        ckpt = None
        if out is not None:
            ckpt = out / "final.ckpt"
            save_checkpoint(ckpt, self.net.params)
        return TrainResult(self.net, history, ckpt)


def train(net_cfg: NetworkConfig, pairs: list[Pair], cfg: TrainConfig,
          augment: AugmentConfig | None = None, out_dir=None, progress=None) -> TrainResult:
    net = EfficientLONet(net_cfg, seed=cfg.seed)
    return Trainer(net, pairs, cfg, augment).fit(out_dir, progress)


def load_network(net_cfg: NetworkConfig, checkpoint) -> EfficientLONet:
    net = EfficientLONet(net_cfg)
    net.load_state(load_checkpoint(checkpoint))
    return net


@dataclass
class InferenceResult:
    trajectory: np.ndarray
    timings: list = field(default_factory=list)

    def timing_summary(self) -> dict:
        if not self.timings:
            return {}
        t = np.array([(r["prep_ms"], r["infer_ms"]) for r in self.timings])
        return {"pairs": len(t), "prep_ms_mean": float(t[:, 0].mean()),
                "infer_ms_mean": float(t[:, 1].mean()), "hz": float(1000.0 / t.sum(1).mean())}


def infer_sequence(net: EfficientLONet, scans, half_side: float = np.inf, seed: int = 0,
                   pose_fn=None) -> InferenceResult:
    """Accumulate finest-level estimates over consecutive scans.

    ``scans`` holds paths or (n, 3) arrays. The network predicts the warp from
    frame k-1 to frame k; its inverse is the sensor motion, so
    ``T_k = T_{k-1} warp^-1`` with ``T_0 = I``. ``pose_fn(k)`` may replace the
    network with a given relative motion (used to check the accumulation).
    """
    scans = list(scans)
    if len(scans) < 2:
        raise ValueError("need at least two scans")
    proj = net.cfg.projection
    relatives = []
    timings = []
    prev = None
    for k, s in enumerate(scans):
        t0 = time.perf_counter()
        pts = load_scan(s, half_side) if isinstance(s, (str, Path)) else np.asarray(s, dtype=np.float64)
        cur = project(pts, proj)
        t1 = time.perf_counter()
        if prev is not None:
            if pose_fn is not None:
                relatives.append(np.asarray(pose_fn(k), dtype=np.float64)[:3])
            else:
                q, t = net.predict(prev, cur, seed=seed)
                relatives.append(invert_pose(pose_to_matrix(q / np.linalg.norm(q), t)))
            t2 = time.perf_counter()
            timings.append({"pair": k, "prep_ms": (t1 - t0) * 1e3, "infer_ms": (t2 - t1) * 1e3})
        prev = cur
    return InferenceResult(accumulate(relatives), timings)
