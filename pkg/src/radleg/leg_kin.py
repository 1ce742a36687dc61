"""Quadruped leg kinematics and body velocity from legs with round (rolling) feet.

Each leg is a 3-revolute chain: abduction about body x at the hip, a lateral
offset, hip flexion about y, thigh along -z, knee about y, shin along -z ending
at the centre of a spherical foot. The contact frame C is attached to the foot,
so ``R_BC`` is the product of the joint rotations.
"""
from __future__ import annotations

import configparser
from dataclasses import dataclass, field

import numpy as np

from .geom import skew, so3_log, slerp_rot

LEG_NAMES = ("FL", "FR", "HL", "HR")


class NoContactError(ValueError):
    pass


class DtTooSmallError(ValueError):
    pass


class InfeasibleIkError(ValueError):
    pass


def _default_offsets():
    return np.array([[0.29, 0.11, 0.0], [0.29, -0.11, 0.0],
                     [-0.29, 0.11, 0.0], [-0.29, -0.11, 0.0]])


def _default_axes():
    return np.tile(np.array([[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 1.0, 0.0]]), (4, 1, 1))


@dataclass
class LegModel:
    hip_offsets: np.ndarray = field(default_factory=_default_offsets)   # (4, 3)
    axes: np.ndarray = field(default_factory=_default_axes)             # (4, 3, 3), one row per joint
    link_lengths: tuple = (0.11, 0.35, 0.34)  # lateral, thigh, shin
    foot_radius: float = 0.03
    joint_lower: tuple = (-0.8, -2.5, -2.9)
    joint_upper: tuple = (0.8, 2.5, 0.0)

    def __post_init__(self):
        self.hip_offsets = np.asarray(self.hip_offsets, dtype=float).reshape(4, 3)
        self.axes = np.asarray(self.axes, dtype=float).reshape(4, 3, 3)
        norms = np.linalg.norm(self.axes, axis=2)
        if not np.allclose(norms, 1.0, atol=1e-9):
            raise ValueError("joint axes must be unit vectors")
        self.link_lengths = tuple(float(x) for x in self.link_lengths)
        if len(self.link_lengths) != 3 or min(self.link_lengths) <= 0:
            raise ValueError("need three positive link lengths")
        if self.foot_radius < 0:
            raise ValueError("foot_radius must be >= 0")
        # per-joint skew matrices for the closed-form unit-axis exponential
        self._K = np.array([[skew(a) for a in leg] for leg in self.axes])
        self._K2 = self._K @ self._K
        self._links = np.array([self.link_vectors(k) for k in range(4)])

    def lateral_sign(self, leg: int) -> float:
        return 1.0 if self.hip_offsets[leg, 1] >= 0 else -1.0

    def link_vectors(self, leg: int) -> np.ndarray:
        """Offsets from joint k to joint k+1 (last row: knee to foot centre), in the local frame."""
        l0, l1, l2 = self.link_lengths
        return np.array([[0.0, self.lateral_sign(leg) * l0, 0.0],
                         [0.0, 0.0, -l1],
                         [0.0, 0.0, -l2]])

    def within_limits(self, angles) -> bool:
        a = np.asarray(angles, dtype=float)
        return bool(np.all(a >= np.array(self.joint_lower) - 1e-9)
                    and np.all(a <= np.array(self.joint_upper) + 1e-9))

    def with_foot_radius(self, r: float) -> "LegModel":
        return LegModel(self.hip_offsets.copy(), self.axes.copy(), self.link_lengths, r,
                        self.joint_lower, self.joint_upper)


def _floats(text: str) -> list:
    return [float(x) for x in text.replace(",", " ").replace(";", " ").split()]


def load_leg_model(path) -> LegModel:
    """Read a ``[leg]`` section: foot_radius, link_lengths, hip_offsets (12 numbers),
    axes (36 numbers, optional), joint_lower, joint_upper."""
    cp = configparser.ConfigParser()
    if not cp.read(path):
        raise FileNotFoundError(path)
    return leg_model_from_section(cp["leg"] if cp.has_section("leg") else {})


def leg_model_from_section(sec) -> LegModel:
    kw = {}
    if "foot_radius" in sec:
        kw["foot_radius"] = float(sec["foot_radius"])
    if "link_lengths" in sec:
        kw["link_lengths"] = tuple(_floats(sec["link_lengths"]))
    if "hip_offsets" in sec:
        kw["hip_offsets"] = np.array(_floats(sec["hip_offsets"])).reshape(4, 3)
    if "axes" in sec:
        kw["axes"] = np.array(_floats(sec["axes"])).reshape(4, 3, 3)
    if "joint_lower" in sec:
        kw["joint_lower"] = tuple(_floats(sec["joint_lower"]))
    if "joint_upper" in sec:
        kw["joint_upper"] = tuple(_floats(sec["joint_upper"]))
    return LegModel(**kw)


def _cross_rows(a, b):
    """Row-wise cross product of (n, 3) arrays without numpy's generic overhead."""
    return np.stack([a[:, 1] * b[:, 2] - a[:, 2] * b[:, 1],
                     a[:, 2] * b[:, 0] - a[:, 0] * b[:, 2],
                     a[:, 0] * b[:, 1] - a[:, 1] * b[:, 0]], axis=1)


def _cross(a, b):
    return np.array([a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]])


def _chain(leg: int, angles, model: LegModel):
    """Joint frames along the chain: rotations R_0k, joint origins o_k and the foot position."""
    q = np.asarray(angles, dtype=float)
    K, K2, links = model._K[leg], model._K2[leg], model._links[leg]
    sq, cq = np.sin(q), np.cos(q)
    R = np.eye(3)
    o = model.hip_offsets[leg].copy()
    rots, origins, axes_b = [], np.empty((3, 3)), np.empty((3, 3))
    for k in range(3):
        axes_b[k] = R @ model.axes[leg, k]
        origins[k] = o
        R = R @ (np.eye(3) + sq[k] * K[k] + (1.0 - cq[k]) * K2[k])
        rots.append(R)
        o = o + R @ links[k]
    return rots, origins, axes_b, o


def fk_rot(leg: int, angles, model: LegModel) -> np.ndarray:
    """R_BC: contact-frame orientation in the body frame."""
    return _chain(leg, angles, model)[0][-1]


def fk_pos(leg: int, angles, model: LegModel) -> np.ndarray:
    """Foot-centre position in the body frame."""
    return _chain(leg, angles, model)[3]


def fk_jacobians(leg: int, angles, velocities, model: LegModel):
    """Contact-frame angular velocity relative to the body (in C) and foot-centre velocity (in B)."""
    rots, origins, axes_b, p = _chain(leg, angles, model)
    dq = np.asarray(velocities, dtype=float)
    omega_b = axes_b.T @ dq
    v = _cross_rows(axes_b, p - origins).T @ dq
    return rots[-1].T @ omega_b, v


def leg_ik(leg: int, p_foot, model: LegModel) -> np.ndarray:
    """Closed-form inverse kinematics for the default chain (abduction about x, then two y joints).

    Knee solution with q2 <= 0. Raises InfeasibleIkError outside reach or joint limits.
    """
    l0, l1, l2 = model.link_lengths
    s = model.lateral_sign(leg)
    px, py, pz = np.asarray(p_foot, dtype=float) - model.hip_offsets[leg]
    r2 = py * py + pz * pz - l0 * l0
    if r2 <= 0:
        raise InfeasibleIkError("target inside the abduction offset")
    c = -np.sqrt(r2)
    q0 = np.arctan2(pz, py) - np.arctan2(c, s * l0)
    q0 = (q0 + np.pi) % (2 * np.pi) - np.pi
    X, Z = -px, -c  # planar target: backward and downward components
    D = (X * X + Z * Z - l1 * l1 - l2 * l2) / (2 * l1 * l2)
    if abs(D) > 1.0:
        raise InfeasibleIkError(f"target out of reach (cos knee = {D:.3f})")
    q2 = -np.arccos(D)
    q1 = np.arctan2(X, Z) - np.arctan2(l2 * np.sin(q2), l1 + l2 * np.cos(q2))
    q = np.array([q0, q1, q2])
    if not model.within_limits(q):
        raise InfeasibleIkError(f"joint limits violated: {q}")
    return q


def contact_angular_velocity(prev: np.ndarray, cur: np.ndarray, dt: float) -> np.ndarray:
    """Body-fixed angular rate taking ``prev`` to ``cur`` over ``dt``: Log(prev^T cur) / dt."""
    if dt < 1e-6:
        raise DtTooSmallError(f"dt={dt} below 1e-6 s")
    return so3_log(prev.T @ cur) / dt


def body_velocity_rolling(R_WB: np.ndarray, leg: int, angles, velocities, omega_WC,
                          model: LegModel, up_world=(0.0, 0.0, 1.0), in_contact: bool = True):
    """Body angular rate (body frame) and linear velocity (world frame) from one stance leg.

    ``omega_WC`` is the contact frame's angular rate expressed in C. The foot
    centre of a ball rolling without slip moves with ``(R_WC omega_WC) x n_C``,
    ``n_C = foot_radius * up``. With foot_radius = 0 this is the fixed-contact formula.
    """
    if not in_contact:
        raise NoContactError(f"leg {leg} not in contact")
    omega_WC = np.asarray(omega_WC, dtype=float)
    rots, origins, axes_b, f_p = _chain(leg, angles, model)
    R_BC = rots[-1]
    dq = np.asarray(velocities, dtype=float)
    omega_BC = R_BC.T @ (axes_b.T @ dq)
    J_p = _cross_rows(axes_b, f_p - origins).T @ dq
    omega_WB = R_BC @ (omega_WC - omega_BC)
    up = np.asarray(up_world, dtype=float)
    n_C = model.foot_radius * up / np.linalg.norm(up)
    foot_rate_w = R_WB @ (R_BC @ omega_WC)
    v_WB = -R_WB @ (_cross(omega_WB, f_p) + J_p) + _cross(foot_rate_w, n_C)
    return omega_WB, v_WB


def fuse_leg_velocity(velocities, valid, sigma_v: float = 0.05, covariances=None):
    """Inverse-variance mean of per-foot velocities; the spread between feet is
    added to the covariance diagonal. Raises NoContactError if nothing is valid."""
    valid = np.asarray(valid, dtype=bool)
    if not valid.any():
        raise NoContactError("no foot in contact")
    V = np.asarray(velocities, dtype=float)[valid]
    if covariances is None:
        covs = np.repeat((sigma_v**2 * np.eye(3))[None], len(V), axis=0)
    else:
        covs = np.asarray(covariances, dtype=float)[valid]
    infos = np.linalg.inv(covs)
    info = infos.sum(axis=0)
    cov = np.linalg.inv(info)
    mean = cov @ np.einsum("kij,kj->i", infos, V)
    if len(V) > 1:
        cov = cov + np.diag(np.mean((V - mean) ** 2, axis=0))
    return mean, 0.5 * (cov + cov.T)


@dataclass
class LegVelocitySample:
    t0: float
    t1: float
    v: np.ndarray       # world frame, averaged over (t0, t1]
    cov: np.ndarray
    n_feet: int


class LegOdometry:
    """Turns a stream of joint samples into world-frame body velocities.

    Each sample covers the interval since the previous one. Contact-frame
    orientations are tracked per foot through a stance; the rolling rate comes
    from consecutive orientations and the kinematic terms are evaluated at the
    interval midpoint, which keeps the interval average accurate to second order.
    """

    def __init__(self, model: LegModel, sigma_v: float = 0.05, up_world=(0.0, 0.0, 1.0)):
        self.model = model
        self.sigma_v = sigma_v
        self.up = np.asarray(up_world, dtype=float)
        self._prev = None  # (t, q, dq, contacts, R_WB, R_WC per foot)

    def reset(self):
        self._prev = None

    def update(self, t: float, q, dq, contacts, R_WB: np.ndarray):
        """Feed one joint sample; returns a LegVelocitySample or None."""
        q = np.asarray(q, dtype=float).reshape(4, 3)
        dq = np.asarray(dq, dtype=float).reshape(4, 3)
        contacts = np.asarray(contacts, dtype=bool).reshape(4)
        R_WC = [R_WB @ fk_rot(k, q[k], self.model) for k in range(4)]
        prev, self._prev = self._prev, (t, q, dq, contacts, R_WB, R_WC)
        if prev is None:
            return None
        t0, q0, dq0, c0, R_WB0, R_WC0 = prev
        dt = t - t0
        if dt < 1e-6:
            return None
        R_mid = slerp_rot(R_WB0, R_WB, 0.5)
        q_mid, dq_mid = 0.5 * (q0 + q), 0.5 * (dq0 + dq)
        vels, ok = np.zeros((4, 3)), np.zeros(4, dtype=bool)
        for k in range(4):
            # stance must span the whole interval; touchdown restarts the track
            if not (c0[k] and contacts[k]):
                continue
            w = contact_angular_velocity(R_WC0[k], R_WC[k], dt)
            _, vels[k] = body_velocity_rolling(R_mid, k, q_mid[k], dq_mid[k], w, self.model, self.up)
            ok[k] = True
        if not ok.any():
            return None
        v, cov = fuse_leg_velocity(vels, ok, self.sigma_v)
        return LegVelocitySample(t0, t, v, cov, int(ok.sum()))
