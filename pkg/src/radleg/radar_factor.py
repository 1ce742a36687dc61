"""Preintegrated radar velocity factor with roll/pitch held fixed (x, y, z, yaw optimised).

Residual blocks, all evaluated at keyframes i and j::

    r_dp = R_i^T (p_j - p_i - v_i dt) - [dp_dev(b_lin) + d(dp_dev)/db (b_j - b_lin)]
    r_v  = v_j - [v_last(b_lin) + dv/db (b_j - b_lin)]
    r_db = b_j - b_i

``R_i = Rz(yaw_i) Ry(pitch_i) Rx(roll_i)``. ``dp_dev`` is the body-frame displacement
accumulated from ego-velocities minus ``v_ref * dt``, where ``v_ref`` is the
ego-velocity at keyframe i expressed in body frame i. Subtracting it makes the
``-v_i dt`` term of ``r_dp`` consistent with integrated velocities, so the
residual vanishes on noiseless trajectories.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .geom import YprAngles, rot_x, rot_y, rot_z, skew, ypr_compose
from .radar_ego import EgoVelEstimate
from .state import NavState


class EmptyWindowError(ValueError):
    pass


@dataclass
class PreintegratedRadar:
    delta_p: np.ndarray       # sum R_i^T R_k (v_k - b_lin) dt_k, body frame i
    d_dp_d_bias: np.ndarray   # -sum R_i^T R_k dt_k
    last_v: np.ndarray        # R_last (v_last - b_lin), world frame
    d_v_d_bias: np.ndarray    # -R_last
    v_ref: np.ndarray         # R_i^T R_ref (v_ref - b_lin), body frame i
    d_vref_d_bias: np.ndarray  # -R_i^T R_ref
    lin_bias: np.ndarray
    cov: np.ndarray           # 9x9 over (r_dp, r_v, r_db)
    dt_total: float
    yaw_delta: float = 0.0    # attitude-provider yaw change across the window

    def dp_dev(self, b: np.ndarray) -> np.ndarray:
        """Bias-corrected deviation-from-constant-velocity displacement."""
        db = np.asarray(b, dtype=float) - self.lin_bias
        return (self.delta_p - self.v_ref * self.dt_total
                + (self.d_dp_d_bias - self.d_vref_d_bias * self.dt_total) @ db)

    def v_last(self, b: np.ndarray) -> np.ndarray:
        return self.last_v + self.d_v_d_bias @ (np.asarray(b, dtype=float) - self.lin_bias)

    @property
    def d_dpdev_d_bias(self) -> np.ndarray:
        return self.d_dp_d_bias - self.d_vref_d_bias * self.dt_total


def _as_rot(att) -> np.ndarray:
    return ypr_compose(att) if isinstance(att, YprAngles) else np.asarray(att, dtype=float)


def _vel_cov(est, sigma_default: float):
    if isinstance(est, EgoVelEstimate):
        return np.asarray(est.v_hat, dtype=float), np.asarray(est.covariance, dtype=float)
    return np.asarray(est, dtype=float), sigma_default**2 * np.eye(3)


def radar_preintegrate(measurements, lin_bias=None, start_attitude=None, ref=None,
                       sigma_bias_rw: float = 1e-3, sigma_default: float = 0.1) -> PreintegratedRadar:
    """Accumulate ego-velocities between two keyframes.

    ``measurements`` is a sequence of ``(estimate, attitude, dt)``: ``estimate`` an
    EgoVelEstimate (or bare 3-vector), ``attitude`` the world attitude at the scan
    (YprAngles or rotation matrix), ``dt`` the time the scan's velocity covers.
    ``start_attitude`` is the attitude at keyframe i (defaults to the first
    measurement's). ``ref`` is ``(estimate, attitude)`` for the velocity at keyframe
    i; it defaults to the first measurement.
    """
    if len(measurements) == 0:
        raise EmptyWindowError("no radar measurements in window")
    b_lin = np.zeros(3) if lin_bias is None else np.asarray(lin_bias, dtype=float).reshape(3)
    Rs = [_as_rot(att) for _, att, _ in measurements]
    R_i = Rs[0] if start_attitude is None else _as_rot(start_attitude)
    if ref is None:
        ref = (measurements[0][0], measurements[0][1])
    v_r, cov_r = _vel_cov(ref[0], sigma_default)
    M_ref = R_i.T @ _as_rot(ref[1])

    delta_p = np.zeros(3)
    J = np.zeros((3, 3))
    G_list, cov_list = [], []
    dt_total = 0.0
    n = len(measurements)
    for k, ((est, _, dt), R_k) in enumerate(zip(measurements, Rs)):
        if not dt > 0.0:
            raise ValueError(f"non-positive dt {dt} at step {k}")
        v, c = _vel_cov(est, sigma_default)
        M = R_i.T @ R_k
        delta_p += M @ (v - b_lin) * dt
        J -= M * dt
        dt_total += dt
        G = np.zeros((9, 3))
        G[0:3] = M * dt
        if k == n - 1:
            G[3:6] = R_k
        G_list.append(G)
        cov_list.append(c)

    R_last = Rs[-1]
    v_last, _ = _vel_cov(measurements[-1][0], sigma_default)
    cov = np.zeros((9, 9))
    for G, c in zip(G_list, cov_list):
        cov += G @ c @ G.T
    cov[0:3, 0:3] += dt_total**2 * M_ref @ cov_r @ M_ref.T
    cov[6:9, 6:9] += sigma_bias_rw**2 * dt_total * np.eye(3)
    cov = 0.5 * (cov + cov.T)

    yaw_delta = float(np.arctan2((R_i.T @ R_last)[1, 0], (R_i.T @ R_last)[0, 0]))
    return PreintegratedRadar(
        delta_p=delta_p, d_dp_d_bias=J,
        last_v=R_last @ (v_last - b_lin), d_v_d_bias=-R_last,
        v_ref=M_ref @ (v_r - b_lin), d_vref_d_bias=-M_ref,
        lin_bias=b_lin.copy(), cov=cov, dt_total=dt_total, yaw_delta=yaw_delta)


@dataclass
class RadarResidual:
    r_dp: np.ndarray
    r_v: np.ndarray
    r_db: np.ndarray

    def stacked(self) -> np.ndarray:
        return np.concatenate([self.r_dp, self.r_v, self.r_db])


def radar_residual_4dof(state_i: NavState, state_j: NavState, preint: PreintegratedRadar) -> RadarResidual:
    R_i = state_i.R
    u = state_j.p - state_i.p - state_i.v * preint.dt_total
    r_dp = R_i.T @ u - preint.dp_dev(state_j.b_r)
    r_v = state_j.v - preint.v_last(state_j.b_r)
    r_db = state_j.b_r - state_i.b_r
    return RadarResidual(r_dp, r_v, r_db)


def radar_jacobian_4dof(state_i: NavState, state_j: NavState, preint: PreintegratedRadar) -> dict:
    """Jacobian blocks of the stacked 9-vector residual.

    Keys: ``p_i v_i gamma_i p_j v_j gamma_j b_i b_j`` plus the structurally
    zero ``alpha_i beta_i alpha_j beta_j`` columns (roll/pitch are not optimised).
    """
    dt = preint.dt_total
    Rx, Ry, Rz = rot_x(state_i.roll), rot_y(state_i.pitch), rot_z(state_i.yaw)
    RiT = (Rz @ Ry @ Rx).T
    u = state_j.p - state_i.p - state_i.v * dt
    I3, Z3 = np.eye(3), np.zeros((3, 3))

    d_gamma_i = np.zeros((9, 1))
    d_gamma_i[0:3, 0] = (Rx.T @ Ry.T @ skew(Rz.T @ u))[:, 2]

    blocks = {
        "p_i": np.vstack([-RiT, Z3, Z3]),
        "v_i": np.vstack([-RiT * dt, Z3, Z3]),
        "gamma_i": d_gamma_i,
        "p_j": np.vstack([RiT, Z3, Z3]),
        "v_j": np.vstack([Z3, I3, Z3]),
        "gamma_j": np.zeros((9, 1)),
        "b_i": np.vstack([Z3, Z3, -I3]),
        "b_j": np.vstack([-preint.d_dpdev_d_bias, -preint.d_v_d_bias, I3]),
    }
    for key in ("alpha_i", "beta_i", "alpha_j", "beta_j"):
        blocks[key] = np.zeros((9, 1))
    return blocks
