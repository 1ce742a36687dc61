import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.spatial.transform import Rotation

from radleg.geom import (GimbalLockError, YprAngles, geodesic_angle, quat_to_rot, rot_to_quat, rot_x, rot_z,
                         skew, slerp_rot, so3_exp, so3_log, vee, wrap_angle, ypr_compose, ypr_decompose)

finite = st.floats(-10.0, 10.0, allow_nan=False)
vec3 = st.tuples(finite, finite, finite).map(np.array)
angle = st.floats(-np.pi, np.pi, allow_nan=False)


def test_skew_examples():
    assert np.array_equal(skew((0, 0, 0)), np.zeros((3, 3)))
    assert np.allclose(skew((0, 0, 1)) @ [1, 0, 0], [0, 1, 0])


@given(vec3, vec3)
def test_skew_is_cross_product_and_antisymmetric(a, b):
    S = skew(a)
    assert np.array_equal(S.T, -S)
    assert np.allclose(S @ b, np.cross(a, b), atol=1e-12)
    assert np.allclose(vee(S), a)


def test_exp_examples():
    assert np.array_equal(so3_exp([0, 0, 0]), np.eye(3))
    assert np.allclose(so3_exp([0, 0, np.pi / 2]) @ [1, 0, 0], [0, 1, 0], atol=1e-15)


@given(vec3)
def test_exp_matches_scipy(v):
    assert np.allclose(so3_exp(v), Rotation.from_rotvec(v).as_matrix(), atol=1e-12)


@given(vec3)
def test_exp_inverse(v):
    assert np.allclose(so3_exp(v) @ so3_exp(-v), np.eye(3), atol=1e-12)


def test_exp_small_angle_series():
    v = np.array([3e-9, -1e-9, 2e-9])
    assert np.allclose(so3_exp(v), Rotation.from_rotvec(v).as_matrix(), atol=1e-17)


def test_log_examples():
    assert np.array_equal(so3_log(np.eye(3)), np.zeros(3))
    w, degraded = so3_log(rot_x(np.pi), with_flag=True)
    assert np.allclose(np.abs(w), [np.pi, 0, 0])
    assert degraded


@given(st.tuples(finite, finite, finite).filter(lambda v: 1e-6 < np.linalg.norm(v) < np.pi - 1e-3))
def test_log_exp_roundtrip(v):
    v = np.array(v)
    assert np.allclose(so3_log(so3_exp(v)), v, atol=1e-9)


@settings(max_examples=200)
@given(vec3)
def test_exp_log_roundtrip_any_rotation(v):
    R = so3_exp(v)
    assert np.linalg.norm(so3_exp(so3_log(R)) - R) < 1e-9


def test_log_near_pi_branch():
    for theta in (np.pi - 1e-3, np.pi - 1e-7):
        axis = np.array([1.0, 2.0, -0.5]) / np.linalg.norm([1.0, 2.0, -0.5])
        R = so3_exp(theta * axis)
        w = so3_log(R)
        assert np.allclose(w, Rotation.from_matrix(R).as_rotvec(), atol=1e-6)


def test_wrap_angle_range():
    assert wrap_angle(np.pi) == pytest.approx(np.pi)
    assert wrap_angle(-np.pi) == pytest.approx(np.pi)
    assert wrap_angle(3 * np.pi / 2) == pytest.approx(-np.pi / 2)
    assert YprAngles(0.0, 0.0, 2 * np.pi + 0.1).yaw == pytest.approx(0.1)


def test_compose_examples():
    assert np.array_equal(ypr_compose(YprAngles()), np.eye(3))
    R = ypr_compose(YprAngles(0, 0, 0.7))
    assert np.allclose(R, rot_z(0.7))
    assert np.array_equal(R[:, 2], [0, 0, 1])


def test_compose_matches_scipy_intrinsic_zyx():
    a = YprAngles(0.1, -0.2, 0.3)
    ref = Rotation.from_euler("ZYX", [0.3, -0.2, 0.1]).as_matrix()
    assert np.allclose(ypr_compose(a), ref, atol=1e-14)


@given(angle, st.floats(-1.5, 1.5), angle)
def test_compose_orthonormal_and_roundtrip(r, p, y):
    R = ypr_compose(YprAngles(r, p, y))
    assert np.allclose(R.T @ R, np.eye(3), atol=1e-12)
    assert np.linalg.det(R) == pytest.approx(1.0, abs=1e-12)
    back = ypr_decompose(R)
    assert np.allclose(ypr_compose(back), R, atol=1e-12)


def test_decompose_example_and_gimbal_lock():
    a = ypr_decompose(ypr_compose(YprAngles(0.1, -0.2, 0.3)))
    assert np.allclose(a.as_array(), [0.1, -0.2, 0.3], atol=1e-14)
    with pytest.raises(GimbalLockError):
        ypr_decompose(ypr_compose(YprAngles(0.0, np.pi / 2, 0.0)))


@given(vec3)
def test_quaternion_roundtrip(v):
    R = so3_exp(v)
    q = rot_to_quat(R)
    assert q[3] >= 0
    assert np.allclose(quat_to_rot(q), R, atol=1e-12)


def test_slerp_and_geodesic():
    R0, R1 = rot_z(0.2), rot_z(1.0)
    assert np.allclose(slerp_rot(R0, R1, 0.5), rot_z(0.6))
    assert geodesic_angle(R0, R1) == pytest.approx(0.8)
