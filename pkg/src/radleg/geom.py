"""Rotation kernel: skew operator, SO(3) exp/log and the yaw-pitch-roll factorisation.

Rotations are plain 3x3 numpy arrays throughout the package.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.spatial.transform import Rotation

SMALL_ANGLE = 1e-8
GIMBAL_GUARD = 1e-6


class GimbalLockError(ValueError):
    pass


def wrap_angle(a: float) -> float:
    """Wrap an angle to (-pi, pi]."""
    a = float(np.fmod(a + np.pi, 2.0 * np.pi))
    if a <= 0.0:
        a += 2.0 * np.pi
    return a - np.pi


@dataclass(frozen=True)
class YprAngles:
    roll: float = 0.0
    pitch: float = 0.0
    yaw: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "roll", wrap_angle(self.roll))
        object.__setattr__(self, "pitch", wrap_angle(self.pitch))
        object.__setattr__(self, "yaw", wrap_angle(self.yaw))

    def as_array(self) -> np.ndarray:
        return np.array([self.roll, self.pitch, self.yaw])


def skew(v) -> np.ndarray:
    x, y, z = v
    return np.array([[0.0, -z, y],
                     [z, 0.0, -x],
                     [-y, x, 0.0]])


def vee(W: np.ndarray) -> np.ndarray:
    return 0.5 * np.array([W[2, 1] - W[1, 2], W[0, 2] - W[2, 0], W[1, 0] - W[0, 1]])


def so3_exp(omega) -> np.ndarray:
    """Rodrigues' formula; second-order series below SMALL_ANGLE."""
    omega = np.asarray(omega, dtype=float)
    theta = np.linalg.norm(omega)
    K = skew(omega)
    if theta < SMALL_ANGLE:
        return np.eye(3) + K + 0.5 * K @ K
    return (np.eye(3) + np.sin(theta) / theta * K
            + (1.0 - np.cos(theta)) / theta**2 * K @ K)


def so3_log(R: np.ndarray, with_flag: bool = False):
    """Rotation vector of R, norm in [0, pi].

    With ``with_flag=True`` returns ``(omega, degraded)`` where ``degraded`` marks
    rotations within 1e-6 rad of pi, where the axis sign is ambiguous and the
    result carries reduced precision.
    """
    R = np.asarray(R, dtype=float)
    s = vee(R)  # sin(theta) * axis
    sin_t = np.linalg.norm(s)
    cos_t = 0.5 * (np.trace(R) - 1.0)
    theta = np.arctan2(sin_t, cos_t)
    degraded = False
    if theta < SMALL_ANGLE:
        omega = s * (1.0 + sin_t**2 / 6.0)
    elif cos_t < -0.99:
        # trace-based branch: R + R^T = 2 cos I + 2 (1 - cos) a a^T
        B = 0.5 * (R + R.T) - cos_t * np.eye(3)
        k = int(np.argmax(np.diag(B)))
        axis = B[:, k] / np.linalg.norm(B[:, k])
        if np.dot(s, axis) < 0.0:
            axis = -axis
        omega = theta * axis
        degraded = (np.pi - theta) < GIMBAL_GUARD
    else:
        omega = theta / sin_t * s
    if with_flag:
        return omega, degraded
    return omega


def rot_x(a: float) -> np.ndarray:
    c, s = np.cos(a), np.sin(a)
    return np.array([[1.0, 0.0, 0.0], [0.0, c, -s], [0.0, s, c]])


def rot_y(a: float) -> np.ndarray:
    c, s = np.cos(a), np.sin(a)
    return np.array([[c, 0.0, s], [0.0, 1.0, 0.0], [-s, 0.0, c]])


def rot_z(a: float) -> np.ndarray:
    c, s = np.cos(a), np.sin(a)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


def ypr_compose(a: YprAngles) -> np.ndarray:
    """R(yaw) R(pitch) R(roll), each factor an exponential about one body axis."""
    return rot_z(a.yaw) @ rot_y(a.pitch) @ rot_x(a.roll)


def ypr_decompose(R: np.ndarray) -> YprAngles:
    R = np.asarray(R, dtype=float)
    pitch = np.arctan2(-R[2, 0], np.hypot(R[0, 0], R[1, 0]))
    if abs(pitch) > np.pi / 2 - GIMBAL_GUARD:
        raise GimbalLockError(f"pitch {pitch:.9f} rad is within {GIMBAL_GUARD} of +-pi/2")
    roll = np.arctan2(R[2, 1], R[2, 2])
    yaw = np.arctan2(R[1, 0], R[0, 0])
    return YprAngles(roll, pitch, yaw)


def yaw_of(R: np.ndarray) -> float:
    return float(np.arctan2(R[1, 0], R[0, 0]))


def rot_to_quat(R: np.ndarray) -> np.ndarray:
    """Unit quaternion (qx, qy, qz, qw) with qw >= 0."""
    q = Rotation.from_matrix(R).as_quat()
    if q[3] < 0.0:
        q = -q
    return q


def quat_to_rot(q) -> np.ndarray:
    """Rotation from (qx, qy, qz, qw); the quaternion is renormalised."""
    return Rotation.from_quat(np.asarray(q, dtype=float)).as_matrix()


def slerp_rot(R0: np.ndarray, R1: np.ndarray, s: float) -> np.ndarray:
    return R0 @ so3_exp(s * so3_log(R0.T @ R1))


def geodesic_angle(R0: np.ndarray, R1: np.ndarray) -> float:
    return float(np.linalg.norm(so3_log(R0.T @ R1)))
