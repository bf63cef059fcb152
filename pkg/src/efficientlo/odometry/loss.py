"""Multi-scale pose loss with learnable translation/rotation balance."""
from __future__ import annotations

import numpy as np

from ..numeric import Tensor, abs_, exp, norm2, sum_


def canonical_q_gt(q_gt, q_pred) -> np.ndarray:
    """``q_gt`` or ``-q_gt``, whichever lies closer to the prediction."""
    q_gt = np.asarray(q_gt, dtype=np.float64)
    q_pred = np.asarray(q_pred, dtype=np.float64)
    if np.linalg.norm(q_gt - q_pred) > np.linalg.norm(-q_gt - q_pred):
        return -q_gt
    return q_gt


def level_loss(q: Tensor, t: Tensor, q_gt, t_gt, s_x: Tensor, s_q: Tensor) -> Tensor:
    """``|t_gt - t|_1 exp(-s_x) + s_x + |q_gt - q/|q||_2 exp(-s_q) + s_q``."""
    q_hat = q / norm2(q)
    q_ref = canonical_q_gt(q_gt, q_hat.data)
    t_err = sum_(abs_(Tensor(np.asarray(t_gt, dtype=t.dtype)) - t))
    q_err = norm2(Tensor(q_ref.astype(q.dtype)) - q_hat)
    return t_err * exp(-s_x) + s_x + q_err * exp(-s_q) + s_q


def total_loss(poses, q_gt, t_gt, s_x: Tensor, s_q: Tensor, alphas) -> tuple[Tensor, list[float]]:
    """``sum_l alpha_l * loss_l``. ``poses`` and ``alphas`` are both ordered finest first.

    Returns the total and the per-level values.
    """
    if len(poses) != len(alphas):
        raise ValueError(f"{len(poses)} pose levels but {len(alphas)} loss weights")
    total = None
    parts = []
    for (q, t), a in zip(poses, alphas):
        ll = level_loss(q, t, q_gt, t_gt, s_x, s_q)
        parts.append(float(ll.data))
        total = ll * float(a) if total is None else total + ll * float(a)
    return total, parts
