"""Quaternion and rigid-transform helpers.

Quaternions are Hamilton, scalar-first ``(w, x, y, z)`` numpy arrays. Pose
matrices are 3x4 ``[R | t]`` arrays; 4x4 homogeneous forms are used
internally where composition is needed.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import NonRigidMatrix, NonUnitQuaternion, ZeroQuaternion

IDENTITY_QUAT = np.array([1.0, 0.0, 0.0, 0.0])
_UNIT_TOL = 1e-6
_RIGID_TOL = 1e-6


def _as_quat(q) -> np.ndarray:
    q = np.asarray(q, dtype=np.float64)
    if q.shape != (4,):
        raise ValueError(f"quaternion must have shape (4,), got {q.shape}")
    return q


def _check_unit(q: np.ndarray, tol: float = _UNIT_TOL) -> None:
    n = np.linalg.norm(q)
    if abs(n - 1.0) > tol:
        raise NonUnitQuaternion(f"|q| = {n!r} is not 1 within {tol}")


def quat_normalize(q) -> np.ndarray:
    q = _as_quat(q)
    n = np.linalg.norm(q)
    if not n > 1e-12:
        raise ZeroQuaternion(f"cannot normalize quaternion with norm {n!r}")
    return q / n


def quat_mul(a, b) -> np.ndarray:
    """Hamilton product ``a * b``."""
    w1, x1, y1, z1 = _as_quat(a)
    w2, x2, y2, z2 = _as_quat(b)
    return np.array(
        [
            w1 * w2 - x1 * x2 - y1 * y2 - z1 * z2,
            w1 * x2 + x1 * w2 + y1 * z2 - z1 * y2,
            w1 * y2 - x1 * z2 + y1 * w2 + z1 * x2,
            w1 * z2 + x1 * y2 - y1 * x2 + z1 * w2,
        ]
    )


def quat_conj(q) -> np.ndarray:
    q = _as_quat(q)
    return np.array([q[0], -q[1], -q[2], -q[3]])


def quat_to_rotmat(q) -> np.ndarray:
    """Rotation matrix of a unit quaternion (no normalization performed)."""
    w, x, y, z = _as_quat(q)
    return np.array(
        [
            [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
            [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
            [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)],
        ]
    )


def rotmat_to_quat(R) -> np.ndarray:
    """Shepperd's method; result canonicalized to ``w >= 0``."""
    R = np.asarray(R, dtype=np.float64)
    tr = R[0, 0] + R[1, 1] + R[2, 2]
    if tr > 0:
        s = 2.0 * np.sqrt(tr + 1.0)
        q = np.array(
            [0.25 * s, (R[2, 1] - R[1, 2]) / s, (R[0, 2] - R[2, 0]) / s, (R[1, 0] - R[0, 1]) / s]
        )
    elif R[0, 0] > R[1, 1] and R[0, 0] > R[2, 2]:
        s = 2.0 * np.sqrt(1.0 + R[0, 0] - R[1, 1] - R[2, 2])
        q = np.array(
            [(R[2, 1] - R[1, 2]) / s, 0.25 * s, (R[0, 1] + R[1, 0]) / s, (R[0, 2] + R[2, 0]) / s]
        )
    elif R[1, 1] > R[2, 2]:
        s = 2.0 * np.sqrt(1.0 + R[1, 1] - R[0, 0] - R[2, 2])
        q = np.array(
            [(R[0, 2] - R[2, 0]) / s, (R[0, 1] + R[1, 0]) / s, 0.25 * s, (R[1, 2] + R[2, 1]) / s]
        )
    else:
        s = 2.0 * np.sqrt(1.0 + R[2, 2] - R[0, 0] - R[1, 1])
        q = np.array(
            [(R[1, 0] - R[0, 1]) / s, (R[0, 2] + R[2, 0]) / s, (R[1, 2] + R[2, 1]) / s, 0.25 * s]
        )
    q = q / np.linalg.norm(q)
    if q[0] < 0:
        q = -q
    return q


def quat_rotate(q, p) -> np.ndarray:
    """Rotate a point (3,) or points (n, 3) by unit quaternion ``q``."""
    q = _as_quat(q)
    _check_unit(q)
    p = np.asarray(p, dtype=np.float64)
    # v' = v + 2w(u x v) + 2 u x (u x v), the expanded form of q [0,v] q^-1
    u = q[1:]
    uv = np.cross(u, p)
    return p + 2.0 * q[0] * uv + 2.0 * np.cross(u, uv)


def pose_warp_point(q, t, p) -> np.ndarray:
    return quat_rotate(q, p) + np.asarray(t, dtype=np.float64)


def pose_compose(dq, dt, q, t) -> tuple[np.ndarray, np.ndarray]:
    """Apply residual ``(dq, dt)`` on top of ``(q, t)``.

    Returns ``q' = dq q`` and ``t' = dq t dq^-1 + dt``. The product of unit
    quaternions is left as is, so an identity residual returns ``(q, t)``
    bit for bit.
    """
    dq = _as_quat(dq)
    q = _as_quat(q)
    _check_unit(dq)
    _check_unit(q)
    q_new = quat_mul(dq, q)
    t_new = quat_rotate(dq, t) + np.asarray(dt, dtype=np.float64)
    return q_new, t_new


def pose_to_matrix(q, t) -> np.ndarray:
    q = _as_quat(q)
    _check_unit(q)
    T = np.zeros((3, 4))
    T[:, :3] = quat_to_rotmat(q)
    T[:, 3] = np.asarray(t, dtype=np.float64)
    return T


def check_rigid(T, tol: float = _RIGID_TOL) -> np.ndarray:
    T = np.asarray(T, dtype=np.float64)
    if T.shape == (4, 4):
        if not np.allclose(T[3], [0, 0, 0, 1], atol=tol):
            raise NonRigidMatrix("bottom row of homogeneous matrix is not [0 0 0 1]")
        T = T[:3]
    if T.shape != (3, 4):
        raise NonRigidMatrix(f"pose matrix must be 3x4 or 4x4, got {T.shape}")
    if not np.all(np.isfinite(T)):
        raise NonRigidMatrix("pose matrix has non-finite entries")
    R = T[:, :3]
    err = np.abs(R @ R.T - np.eye(3)).max()
    if err > tol:
        raise NonRigidMatrix(f"rotation block not orthonormal (max err {err:.3g})")
    det = np.linalg.det(R)
    if abs(det - 1.0) > tol:
        raise NonRigidMatrix(f"rotation determinant {det:.9g} != +1")
    return T


def matrix_to_pose(T) -> tuple[np.ndarray, np.ndarray]:
    T = check_rigid(T)
    return rotmat_to_quat(T[:, :3]), T[:, 3].copy()


def to_homogeneous(T) -> np.ndarray:
    T = np.asarray(T, dtype=np.float64)
    if T.shape == (4, 4):
        return T.copy()
    H = np.eye(4)
    H[:3] = T
    return H


def invert_pose(T) -> np.ndarray:
    """Inverse of a rigid 3x4 (or 4x4) transform, returned as 3x4."""
    T = np.asarray(T, dtype=np.float64)
    R = T[:3, :3]
    t = T[:3, 3]
    out = np.zeros((3, 4))
    out[:, :3] = R.T
    out[:, 3] = -R.T @ t
    return out


def compose_matrices(A, B) -> np.ndarray:
    """``A @ B`` for 3x4 rigid transforms."""
    return (to_homogeneous(A) @ to_homogeneous(B))[:3]


def transform_points(T, points) -> np.ndarray:
    T = np.asarray(T, dtype=np.float64)
    pts = np.asarray(points, dtype=np.float64)
    return pts @ T[:3, :3].T + T[:3, 3]


def orthonormalize(R) -> np.ndarray:
    """Closest rotation matrix in the Frobenius sense."""
    U, _, Vt = np.linalg.svd(np.asarray(R, dtype=np.float64))
    D = np.eye(3)
    D[2, 2] = np.sign(np.linalg.det(U @ Vt))
    return U @ D @ Vt


def rotation_angle(R) -> float:
    """Rotation angle in radians, stable for small angles."""
    R = np.asarray(R, dtype=np.float64)
    axis = np.array([R[2, 1] - R[1, 2], R[0, 2] - R[2, 0], R[1, 0] - R[0, 1]])
    return float(np.arctan2(np.linalg.norm(axis), np.trace(R) - 1.0))


def euler_to_rotmat(yaw: float, pitch: float, roll: float) -> np.ndarray:
    """Intrinsic z-y-x rotation, angles in radians: ``Rz(yaw) Ry(pitch) Rx(roll)``."""
    cy, sy = np.cos(yaw), np.sin(yaw)
    cp, sp = np.cos(pitch), np.sin(pitch)
    cr, sr = np.cos(roll), np.sin(roll)
    Rz = np.array([[cy, -sy, 0.0], [sy, cy, 0.0], [0.0, 0.0, 1.0]])
    Ry = np.array([[cp, 0.0, sp], [0.0, 1.0, 0.0], [-sp, 0.0, cp]])
    Rx = np.array([[1.0, 0.0, 0.0], [0.0, cr, -sr], [0.0, sr, cr]])
    return Rz @ Ry @ Rx


@dataclass(frozen=True)
class AugmentConfig:
    """Gaussian augmentation std-devs (degrees / meters), truncated at ``truncation`` sigma."""

    std_yaw: float = 0.05
    std_pitch: float = 0.01
    std_roll: float = 0.01
    std_tx: float = 0.5
    std_ty: float = 0.1
    std_tz: float = 0.05
    truncation: float = 2.0

    def __post_init__(self):
        stds = (self.std_yaw, self.std_pitch, self.std_roll, self.std_tx, self.std_ty, self.std_tz)
        if any(s < 0 for s in stds):
            raise ValueError("augmentation std-devs must be non-negative")
        if not self.truncation > 0:
            raise ValueError("truncation must be positive")


def _truncated_normal(rng: np.random.Generator, sigma: float, truncation: float) -> float:
    if sigma == 0:
        return 0.0
    bound = truncation * sigma
    while True:
        x = rng.normal(0.0, sigma)
        if abs(x) <= bound:
            return float(x)


def make_augmentation(rng: np.random.Generator, cfg: AugmentConfig) -> np.ndarray:
    """Sample a rigid 3x4 augmentation transform."""
    yaw, pitch, roll = (
        np.deg2rad(_truncated_normal(rng, s, cfg.truncation))
        for s in (cfg.std_yaw, cfg.std_pitch, cfg.std_roll)
    )
    t = [_truncated_normal(rng, s, cfg.truncation) for s in (cfg.std_tx, cfg.std_ty, cfg.std_tz)]
    T = np.zeros((3, 4))
    T[:, :3] = euler_to_rotmat(yaw, pitch, roll)
    T[:, 3] = t
    return T


def apply_augmentation(pc1, T_p, T_aug) -> tuple[np.ndarray, np.ndarray]:
    """Return ``(T_aug . PC1, T_aug . T_p)``."""
    pc1_aug = transform_points(T_aug, pc1)
    return pc1_aug, compose_matrices(T_aug, T_p)
