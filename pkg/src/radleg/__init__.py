"""Legged-robot odometry fusing chip-radar ego-velocity and rolling-contact leg kinematics."""

__version__ = "0.1.0"
