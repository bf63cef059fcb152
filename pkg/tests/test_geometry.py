import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from efficientlo.errors import NonRigidMatrix, NonUnitQuaternion, ZeroQuaternion
from efficientlo.geometry import (
    AugmentConfig,
    apply_augmentation,
    check_rigid,
    compose_matrices,
    euler_to_rotmat,
    invert_pose,
    make_augmentation,
    matrix_to_pose,
    orthonormalize,
    pose_compose,
    pose_to_matrix,
    pose_warp_point,
    quat_conj,
    quat_mul,
    quat_normalize,
    quat_rotate,
    quat_to_rotmat,
    rotation_angle,
    rotmat_to_quat,
    transform_points,
)

unit = st.lists(st.floats(-1, 1), min_size=4, max_size=4).filter(
    lambda v: np.linalg.norm(v) > 1e-3).map(lambda v: np.array(v) / np.linalg.norm(v))


def test_quat_mul_basis():
    i = np.array([0.0, 1, 0, 0])
    j = np.array([0.0, 0, 1, 0])
    k = np.array([0.0, 0, 0, 1])
    np.testing.assert_array_equal(quat_mul(i, j), k)
    np.testing.assert_array_equal(quat_mul(j, i), -k)
    np.testing.assert_array_equal(quat_mul(i, i), [-1, 0, 0, 0])


def test_rotate_z_quarter_turn():
    q = np.array([math.cos(math.pi / 4), 0, 0, math.sin(math.pi / 4)])
    np.testing.assert_allclose(quat_rotate(q, [1.0, 0, 0]), [0, 1, 0], atol=1e-15)


def test_normalize_zero_raises():
    with pytest.raises(ZeroQuaternion):
        quat_normalize([0, 0, 0, 0])


def test_rotate_rejects_non_unit():
    with pytest.raises(NonUnitQuaternion):
        quat_rotate([2.0, 0, 0, 0], [1, 2, 3])


@settings(max_examples=200, deadline=None)
@given(unit)
def test_rotmat_roundtrip(q):
    R = quat_to_rotmat(q)
    np.testing.assert_allclose(R @ R.T, np.eye(3), atol=1e-12)
    q2 = rotmat_to_quat(R)
    assert q2[0] >= 0
    assert min(np.abs(q2 - q).max(), np.abs(q2 + q).max()) < 1e-9


@settings(max_examples=200, deadline=None)
@given(unit, st.lists(st.floats(-50, 50), min_size=3, max_size=3))
def test_rotate_matches_matrix(q, p):
    np.testing.assert_allclose(quat_rotate(q, p), quat_to_rotmat(q) @ np.array(p), atol=1e-10)


@settings(max_examples=200, deadline=None)
@given(unit, unit)
def test_compose_matches_matrices(q, dq):
    t, dt = np.array([1.0, -2, 3]), np.array([0.5, 0.1, -4])
    qn, tn = pose_compose(dq, dt, q, t)
    M = compose_matrices(pose_to_matrix(dq, dt), pose_to_matrix(q, t))
    np.testing.assert_allclose(pose_to_matrix(qn / np.linalg.norm(qn), tn), M, atol=1e-12)


def test_identity_residual_is_exact(rng):
    q = quat_normalize(rng.normal(size=4))
    t = rng.normal(size=3)
    qn, tn = pose_compose([1.0, 0, 0, 0], [0.0, 0, 0], q, t)
    assert np.array_equal(qn, q) and np.array_equal(tn, t)


def test_warp_is_rigid(rng):
    q = quat_normalize(rng.normal(size=4))
    p = rng.normal(size=(50, 3)) * 30
    w = pose_warp_point(q, [3.0, 1, -2], p)
    d0 = np.linalg.norm(p[:, None] - p[None], axis=-1)
    d1 = np.linalg.norm(w[:, None] - w[None], axis=-1)
    assert np.abs(d0 - d1).max() < 1e-9


def test_conj_inverts():
    q = quat_normalize([0.3, -0.2, 0.9, 0.1])
    np.testing.assert_allclose(quat_mul(q, quat_conj(q)), [1, 0, 0, 0], atol=1e-15)


def test_check_rigid_rejects():
    with pytest.raises(NonRigidMatrix):
        check_rigid(np.hstack([2 * np.eye(3), np.zeros((3, 1))]))
    with pytest.raises(NonRigidMatrix):
        check_rigid(np.hstack([np.diag([1.0, 1, -1]), np.zeros((3, 1))]))
    with pytest.raises(NonRigidMatrix):
        check_rigid(np.zeros((2, 4)))
    bad = np.eye(4)
    bad[3, 0] = 1
    with pytest.raises(NonRigidMatrix):
        check_rigid(bad)


def test_invert_and_matrix_pose(rng):
    q = quat_normalize(rng.normal(size=4))
    T = pose_to_matrix(q, [1.0, 2, 3])
    np.testing.assert_allclose(compose_matrices(T, invert_pose(T)), np.hstack([np.eye(3), np.zeros((3, 1))]),
                               atol=1e-14)
    q2, t2 = matrix_to_pose(T)
    np.testing.assert_allclose(pose_to_matrix(q2, t2), T, atol=1e-14)
    pts = rng.normal(size=(5, 3))
    np.testing.assert_allclose(transform_points(T, pts), pose_warp_point(q, [1.0, 2, 3], pts), atol=1e-13)


def test_orthonormalize_and_angle():
    R = euler_to_rotmat(0.3, 0, 0) + 1e-6
    Ro = orthonormalize(R)
    np.testing.assert_allclose(Ro @ Ro.T, np.eye(3), atol=1e-14)
    assert abs(rotation_angle(euler_to_rotmat(0.3, 0, 0)) - 0.3) < 1e-14
    assert rotation_angle(np.eye(3)) == 0.0
    assert abs(rotation_angle(euler_to_rotmat(1e-9, 0, 0)) - 1e-9) < 1e-20


def test_euler_order():
    # yaw applied last: a pure pitch then yaw keeps the z-y-x intrinsic order
    R = euler_to_rotmat(math.pi / 2, 0, math.pi / 2)
    np.testing.assert_allclose(R @ [0, 1, 0], [0, 0, 1], atol=1e-15)


def test_augmentation_bounds(rng):
    cfg = AugmentConfig()
    for _ in range(200):
        T = make_augmentation(rng, cfg)
        check_rigid(T)
        assert abs(T[0, 3]) <= 2 * cfg.std_tx
        assert abs(T[1, 3]) <= 2 * cfg.std_ty
        assert abs(T[2, 3]) <= 2 * cfg.std_tz
        assert np.degrees(rotation_angle(T[:, :3])) <= 2 * (cfg.std_yaw + cfg.std_pitch + cfg.std_roll)


def test_augmentation_zero_std_is_identity(rng):
    T = make_augmentation(rng, AugmentConfig(0, 0, 0, 0, 0, 0))
    np.testing.assert_array_equal(T, np.hstack([np.eye(3), np.zeros((3, 1))]))


def test_apply_augmentation(rng):
    T_aug = make_augmentation(rng, AugmentConfig())
    T_p = pose_to_matrix(quat_normalize([1, 0.01, 0, 0.02]), [1.0, 0, 0])
    pc = rng.normal(size=(10, 3))
    pc_aug, T = apply_augmentation(pc, T_p, T_aug)
    np.testing.assert_allclose(pc_aug, transform_points(T_aug, pc))
    np.testing.assert_allclose(T, compose_matrices(T_aug, T_p))


def test_augment_config_validation():
    with pytest.raises(ValueError):
        AugmentConfig(std_yaw=-1)
    with pytest.raises(ValueError):
        AugmentConfig(truncation=0)
