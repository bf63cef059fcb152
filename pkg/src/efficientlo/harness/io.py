"""Scan and pose-file I/O in the KITTI odometry formats, plus trajectory algebra."""
from __future__ import annotations

import math
from pathlib import Path

import numpy as np

from ..errors import MalformedScan, NonRigidMatrix, ParseError
from ..geometry import check_rigid, compose_matrices, invert_pose, orthonormalize
from ..projection import crop_square

_ORTHO_TOL = 1e-4


def load_scan(path, half_side: float = math.inf) -> np.ndarray:
    """XYZ of a Velodyne ``.bin`` file (little-endian float32 x, y, z, reflectance)."""
    data = Path(path).read_bytes()
    if len(data) % 16:
        raise MalformedScan(f"{path}: {len(data)} bytes is not a multiple of 16")
    pts = np.frombuffer(data, dtype="<f4").reshape(-1, 4)[:, :3].astype(np.float64)
    if not np.all(np.isfinite(pts)):
        raise MalformedScan(f"{path}: non-finite coordinates")
    return crop_square(pts, half_side)


def write_scan(path, points, reflectance=None) -> None:
    pts = np.asarray(points, dtype=np.float64).reshape(-1, 3)
    out = np.zeros((pts.shape[0], 4), dtype="<f4")
    out[:, :3] = pts
    if reflectance is not None:
        out[:, 3] = reflectance
    Path(path).write_bytes(out.tobytes())


def parse_pose_line(line: str, lineno: int | None = None, path=None) -> np.ndarray:
    fields = line.split()
    if len(fields) != 12:
        raise ParseError(f"expected 12 numbers, got {len(fields)}", lineno, path)
    try:
        T = np.array([float(f) for f in fields]).reshape(3, 4)
    except ValueError as exc:
        raise ParseError(f"not a number: {exc}", lineno, path) from None
    if not np.all(np.isfinite(T)):
        raise ParseError("non-finite entry", lineno, path)
    try:
        check_rigid(T, tol=_ORTHO_TOL)
    except NonRigidMatrix as exc:
        raise ParseError(str(exc), lineno, path) from None
    T[:, :3] = orthonormalize(T[:, :3])
    return T


def load_poses(path) -> np.ndarray:
    """(N, 3, 4) rigid poses, one row-major 3x4 matrix per non-blank line."""
    poses = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            if line.strip():
                poses.append(parse_pose_line(line, lineno, path))
    return np.array(poses).reshape(-1, 3, 4)


def write_poses(path, poses) -> None:
    with open(path, "w") as fh:
        for T in np.asarray(poses, dtype=np.float64).reshape(-1, 3, 4):
            fh.write(" ".join(f"{v:.12e}" for v in T.reshape(-1)) + "\n")


def load_calib_extrinsic(path) -> np.ndarray:
    """The ``Tr:`` (LiDAR to camera) 3x4 matrix from a KITTI ``calib.txt``."""
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            if line.startswith("Tr:"):
                return parse_pose_line(line[3:], lineno, path)
    raise ParseError("no 'Tr:' entry", None, path)


def to_lidar_frame(poses, extrinsic) -> np.ndarray:
    """Camera-frame trajectory to LiDAR frame: ``Tr^-1 T Tr``."""
    Tr_inv = invert_pose(extrinsic)
    return np.array([compose_matrices(Tr_inv, compose_matrices(T, extrinsic)) for T in poses])


def relative_pose(T_i, T_j) -> np.ndarray:
    """``T_i^-1 T_j``: the motion from frame i to frame j."""
    return compose_matrices(invert_pose(check_rigid(T_i)), check_rigid(T_j))


def relative_poses(traj) -> np.ndarray:
    traj = np.asarray(traj)
    return np.array([relative_pose(traj[k - 1], traj[k]) for k in range(1, len(traj))]).reshape(-1, 3, 4)


def accumulate(relatives, start=None) -> np.ndarray:
    """``T_0 = start`` (identity by default), ``T_k = T_{k-1} rel_k``."""
    T = np.hstack([np.eye(3), np.zeros((3, 1))]) if start is None else np.asarray(start, dtype=np.float64)[:3]
    out = [T]
    for rel in relatives:
        T = compose_matrices(T, rel)
        out.append(T)
    return np.array(out)
