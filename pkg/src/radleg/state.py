from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .geom import YprAngles, wrap_angle, ypr_compose

# layout of one state in the optimiser's tangent vector
P, V, YAW, BR, BL = slice(0, 3), slice(3, 6), slice(6, 7), slice(7, 10), slice(10, 13)
STATE_DIM = 13


def _vec(x=None):
    return np.zeros(3) if x is None else np.asarray(x, dtype=float).reshape(3).copy()


@dataclass
class NavState:
    """Keyframe state. Roll and pitch are held from the attitude provider; only yaw is optimised."""

    timestamp: float = 0.0
    p: np.ndarray = field(default_factory=_vec)
    v: np.ndarray = field(default_factory=_vec)
    yaw: float = 0.0
    roll: float = 0.0
    pitch: float = 0.0
    b_r: np.ndarray = field(default_factory=_vec)
    b_l: np.ndarray = field(default_factory=_vec)

    def __post_init__(self):
        self.p, self.v = _vec(self.p), _vec(self.v)
        self.b_r, self.b_l = _vec(self.b_r), _vec(self.b_l)
        self.yaw = wrap_angle(self.yaw)
        self.roll = wrap_angle(self.roll)
        self.pitch = wrap_angle(self.pitch)

    @property
    def angles(self) -> YprAngles:
        return YprAngles(self.roll, self.pitch, self.yaw)

    @property
    def R(self) -> np.ndarray:
        return ypr_compose(self.angles)

    def to_vector(self) -> np.ndarray:
        return np.concatenate([self.p, self.v, [self.yaw], self.b_r, self.b_l])

    def retract(self, delta: np.ndarray) -> "NavState":
        """Additive update with yaw wrap; roll and pitch are untouched."""
        return replace(self, p=self.p + delta[P], v=self.v + delta[V],
                       yaw=wrap_angle(self.yaw + delta[YAW][0]),
                       b_r=self.b_r + delta[BR], b_l=self.b_l + delta[BL])

    def copy(self) -> "NavState":
        return replace(self)
