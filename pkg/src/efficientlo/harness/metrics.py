"""KITTI drift metrics and ATE/RPE for trajectories of 3x4 poses."""
from __future__ import annotations

from dataclasses import asdict, dataclass, field

import numpy as np

from ..errors import TrajectoryTooShort
from ..geometry import rotation_angle, to_homogeneous

KITTI_LENGTHS = (100, 200, 300, 400, 500, 600, 700, 800)


@dataclass
class MetricsReport:
    t_rel: float
    r_rel: float
    ate: float
    rpe: float
    per_length: dict = field(default_factory=dict)

    def as_dict(self) -> dict:
        return asdict(self)


def _stack(traj) -> np.ndarray:
    traj = np.asarray(traj, dtype=np.float64)
    if traj.ndim != 3 or traj.shape[1:] not in ((3, 4), (4, 4)):
        raise ValueError(f"trajectory must be (N, 3, 4) or (N, 4, 4), got {traj.shape}")
    return np.array([to_homogeneous(T) for T in traj])


def _check_pair(pred, gt):
    P, G = _stack(pred), _stack(gt)
    if len(P) != len(G):
        raise ValueError(f"trajectory lengths differ: {len(P)} vs {len(G)}")
    if len(G) < 2:
        raise TrajectoryTooShort("need at least two poses")
    return P, G


def arc_lengths(traj) -> np.ndarray:
    """Cumulative distance travelled along the trajectory positions."""
    p = _stack(traj)[:, :3, 3]
    steps = np.linalg.norm(np.diff(p, axis=0), axis=1)
    return np.concatenate([[0.0], np.cumsum(steps)])


def kitti_errors(pred, gt, lengths=KITTI_LENGTHS, step: int = 10):
    """Per-subsequence ``(start, length, t_err, r_err)`` with errors per meter.

    Start frames advance by ``step``; a subsequence ends at the first frame
    whose arc length from the start reaches the target length.
    """
    P, G = _check_pair(pred, gt)
    dist = arc_lengths(G)
    out = []
    for first in range(0, len(G), step):
        for L in lengths:
            ends = np.flatnonzero(dist >= dist[first] + L)
            if ends.size == 0:
                continue
            last = int(ends[0])
            dg = np.linalg.inv(G[first]) @ G[last]
            dp = np.linalg.inv(P[first]) @ P[last]
            E = np.linalg.inv(dp) @ dg
            out.append((first, L, np.linalg.norm(E[:3, 3]) / L, rotation_angle(E[:3, :3]) / L))
    return out


def kitti_metrics(pred, gt, lengths=KITTI_LENGTHS, step: int = 10):
    """``(t_rel %, r_rel deg/100 m, per-length breakdown)`` averaged over all subsequences."""
    errs = kitti_errors(pred, gt, lengths, step)
    if not errs:
        raise TrajectoryTooShort(f"no subsequence of {min(lengths)} m exists")
    e = np.array([(L, t, r) for _, L, t, r in errs])
    per_length = {}
    for L in lengths:
        sel = e[e[:, 0] == L]
        if len(sel):
            per_length[int(L)] = (float(sel[:, 1].mean() * 100), float(np.degrees(sel[:, 2].mean()) * 100))
    return float(e[:, 1].mean() * 100), float(np.degrees(e[:, 2].mean()) * 100), per_length


def umeyama(src, dst, with_scale: bool = False):
    """``(R, t, s)`` minimizing ``|dst - (s R src + t)|`` over point sets (N, 3)."""
    src = np.asarray(src, dtype=np.float64)
    dst = np.asarray(dst, dtype=np.float64)
    mu_s, mu_d = src.mean(0), dst.mean(0)
    xs, xd = src - mu_s, dst - mu_d
    U, S, Vt = np.linalg.svd(xd.T @ xs / len(src))
    D = np.eye(3)
    if np.linalg.det(U) * np.linalg.det(Vt) < 0:
        D[2, 2] = -1
    R = U @ D @ Vt
    s = float(np.trace(np.diag(S) @ D) / (xs ** 2).sum(1).mean()) if with_scale else 1.0
    t = mu_d - s * R @ mu_s
    return R, t, s


def ate(pred, gt) -> float:
    """RMSE of position residuals after rigid alignment of ``pred`` onto ``gt``."""
    P, G = _check_pair(pred, gt)
    R, t, _ = umeyama(P[:, :3, 3], G[:, :3, 3])
    res = G[:, :3, 3] - (P[:, :3, 3] @ R.T + t)
    return float(np.sqrt((res ** 2).sum(1).mean()))


def rpe(pred, gt, delta: int = 1) -> float:
    """RMSE of the translation of the per-step relative-pose error."""
    P, G = _check_pair(pred, gt)
    res = []
    for i in range(len(G) - delta):
        dg = np.linalg.inv(G[i]) @ G[i + delta]
        dp = np.linalg.inv(P[i]) @ P[i + delta]
        res.append(np.linalg.norm((np.linalg.inv(dg) @ dp)[:3, 3]))
    return float(np.sqrt(np.mean(np.square(res))))


def ate_rpe(pred, gt) -> tuple[float, float]:
    return ate(pred, gt), rpe(pred, gt)


def evaluate(pred, gt, lengths=KITTI_LENGTHS, step: int = 10) -> MetricsReport:
    """All metrics; drift metrics are NaN when the trajectory is shorter than 100 m."""
    try:
        t_rel, r_rel, per_length = kitti_metrics(pred, gt, lengths, step)
    except TrajectoryTooShort:
        t_rel = r_rel = float("nan")
        per_length = {}
    a, r = ate_rpe(pred, gt)
    return MetricsReport(t_rel=t_rel, r_rel=r_rel, ate=a, rpe=r, per_length=per_length)
