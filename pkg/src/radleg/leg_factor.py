"""Preintegrated leg-odometry translation factor with a slowly varying velocity bias.

Velocities are world-frame, so preintegration is a plain sum and the bias
enters linearly: the bias correction below is exact, not a first-order step.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .radar_factor import EmptyWindowError
from .state import NavState


@dataclass
class LegNoiseParams:
    sigma_v: float = 0.05     # m/s
    sigma_bl: float = 5e-4    # m/s/sqrt(s)

    def __post_init__(self):
        if self.sigma_v <= 0 or self.sigma_bl <= 0:
            raise ValueError("leg noise parameters must be positive")


@dataclass
class PreintegratedLeg:
    delta_p: np.ndarray
    d_dp_d_bias: np.ndarray
    lin_bias: np.ndarray
    cov: np.ndarray
    dt_total: float


def leg_preintegrate(velocities, lin_bias=None, noise: LegNoiseParams | None = None) -> PreintegratedLeg:
    """Sum ``(v_k - b_lin) dt_k`` over ``velocities = [(v_k, dt_k), ...]``."""
    if len(velocities) == 0:
        raise EmptyWindowError("no leg velocities in window")
    noise = noise or LegNoiseParams()
    b = np.zeros(3) if lin_bias is None else np.asarray(lin_bias, dtype=float).reshape(3)
    v = np.array([np.asarray(x, dtype=float).reshape(3) for x, _ in velocities])
    dt = np.array([float(d) for _, d in velocities])
    if np.any(dt <= 0):
        raise ValueError("non-positive dt in leg window")
    dt_total = float(dt.sum())
    delta_p = ((v - b) * dt[:, None]).sum(axis=0)
    cov = noise.sigma_v**2 * float(np.dot(dt, dt)) * np.eye(3)
    return PreintegratedLeg(delta_p, -dt_total * np.eye(3), b.copy(), cov, dt_total)


def leg_bias_correct(preint: PreintegratedLeg, new_bias) -> np.ndarray:
    return preint.delta_p + preint.d_dp_d_bias @ (np.asarray(new_bias, dtype=float) - preint.lin_bias)


def leg_residual(state_i: NavState, state_j: NavState, preint: PreintegratedLeg) -> np.ndarray:
    return state_j.p - state_i.p - leg_bias_correct(preint, state_j.b_l)


def leg_jacobian(state_i: NavState, state_j: NavState, preint: PreintegratedLeg) -> dict:
    I3 = np.eye(3)
    return {"p_i": -I3, "p_j": I3, "b_j": -preint.d_dp_d_bias}
