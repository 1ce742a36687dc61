"""Trajectory error metrics: posyaw alignment, absolute and relative trajectory error."""
from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from .geom import geodesic_angle, rot_z, yaw_of
from .io_dataset import Trajectory

CSV_HEADER = "ate_t,ate_r,rte_t,rte_r,ate_z,align,sub_length"


class InsufficientOverlap(ValueError):
    pass


class TooShort(ValueError):
    pass


@dataclass
class MetricsReport:
    ate_t: float
    ate_r: float
    rte_t: float
    rte_r: float
    ate_z: float
    align: str = "posyaw"
    sub_length: float = 10.0
    n_matched: int = 0
    n_unmatched: int = 0

    def csv_row(self) -> str:
        return (f"{self.ate_t:.6f},{self.ate_r:.6f},{self.rte_t:.6f},{self.rte_r:.6f},"
                f"{self.ate_z:.6f},{self.align},{self.sub_length:g}")

    def table(self) -> str:
        d = asdict(self)
        units = {"ate_t": "m", "ate_r": "deg", "rte_t": "m", "rte_r": "deg", "ate_z": "m", "sub_length": "m"}
        return "\n".join(f"{k:<12}{v:>14.6f} {units[k]}" if isinstance(v, float) else f"{k:<12}{v!s:>14}"
                         for k, v in d.items())


@dataclass
class PosYaw:
    yaw: float
    t: np.ndarray

    @property
    def R(self):
        return rot_z(self.yaw)

    def apply(self, traj: Trajectory) -> Trajectory:
        R = self.R
        return Trajectory(traj.t.copy(), traj.p @ R.T + self.t, R[None] @ traj.R)


def associate(est: Trajectory, ref: Trajectory, max_dt: float = 0.02):
    """Nearest-neighbour pairs (i_est, i_ref) with |dt| <= max_dt."""
    if len(est) == 0 or len(ref) == 0:
        return np.zeros(0, int), np.zeros(0, int)
    j = np.searchsorted(ref.t, est.t)
    j0 = np.clip(j - 1, 0, len(ref) - 1)
    j1 = np.clip(j, 0, len(ref) - 1)
    pick = np.where(np.abs(ref.t[j0] - est.t) <= np.abs(ref.t[j1] - est.t), j0, j1)
    ok = np.abs(ref.t[pick] - est.t) <= max_dt
    return np.flatnonzero(ok), pick[ok]


def _matched(est, ref, max_dt=0.02):
    ie, ir = associate(est, ref, max_dt)
    if len(ie) < 2:
        raise InsufficientOverlap(f"only {len(ie)} associated poses")
    return (Trajectory(est.t[ie], est.p[ie], est.R[ie]), Trajectory(ref.t[ir], ref.p[ir], ref.R[ir]),
            len(est) - len(ie))


def fit_posyaw(p_est: np.ndarray, p_ref: np.ndarray) -> PosYaw:
    """Least-squares yaw and translation mapping ``p_est`` onto ``p_ref``."""
    me, mr = p_est.mean(axis=0), p_ref.mean(axis=0)
    e, r = p_est - me, p_ref - mr
    s = np.sum(e[:, 0] * r[:, 1] - e[:, 1] * r[:, 0])
    c = np.sum(e[:, 0] * r[:, 0] + e[:, 1] * r[:, 1])
    yaw = float(np.arctan2(s, c)) if (abs(s) + abs(c)) > 0 else 0.0
    return PosYaw(yaw, mr - rot_z(yaw) @ me)


def align_posyaw(est: Trajectory, ref: Trajectory, max_dt: float = 0.02) -> PosYaw:
    e, r, _ = _matched(est, ref, max_dt)
    return fit_posyaw(e.p, r.p)


def ate(est: Trajectory, ref: Trajectory, alignment: str = "posyaw", max_dt: float = 0.02):
    """(ate_t m, ate_r deg, ate_z m) after the requested alignment."""
    e, r, _ = _matched(est, ref, max_dt)
    if alignment == "posyaw":
        e = fit_posyaw(e.p, r.p).apply(e)
    elif alignment != "none":
        raise ValueError(f"unknown alignment {alignment!r}")
    dp = e.p - r.p
    ang = np.array([geodesic_angle(a, b) for a, b in zip(e.R, r.R)])
    return (float(np.sqrt(np.mean(np.sum(dp**2, axis=1)))),
            float(np.degrees(np.sqrt(np.mean(ang**2)))),
            float(np.sqrt(np.mean(dp[:, 2] ** 2))))


def rte(est: Trajectory, ref: Trajectory, sub_length: float = 10.0, max_dt: float = 0.02):
    """(rte_t m, rte_r deg): end-pose error of every sub-trajectory of path length ``sub_length``,
    each aligned at its first pose by yaw and translation; RMSE over sub-trajectories."""
    e, r, _ = _matched(est, ref, max_dt)
    seg = np.linalg.norm(np.diff(r.p, axis=0), axis=1)
    dist = np.r_[0.0, np.cumsum(seg)]
    if dist[-1] < sub_length - 1e-9 * max(1.0, sub_length):
        raise TooShort(f"reference path {dist[-1]:.3f} m shorter than {sub_length} m")
    # small slack so summation round-off does not push an exact-length segment one sample further
    ends = np.searchsorted(dist, dist + sub_length - 1e-9 * max(1.0, sub_length), side="left")
    errs_t, errs_r = [], []
    for i, j in enumerate(ends):
        if j >= len(dist):
            break
        dyaw = yaw_of(r.R[i]) - yaw_of(e.R[i])
        A = rot_z(dyaw)
        p_end = A @ (e.p[j] - e.p[i]) + r.p[i]
        R_end = A @ e.R[j]
        errs_t.append(np.linalg.norm(p_end - r.p[j]))
        errs_r.append(geodesic_angle(R_end, r.R[j]))
    errs_t, errs_r = np.array(errs_t), np.array(errs_r)
    return float(np.sqrt(np.mean(errs_t**2))), float(np.degrees(np.sqrt(np.mean(errs_r**2))))


def evaluate(est: Trajectory, ref: Trajectory, alignment: str = "posyaw", sub_length: float = 10.0,
             max_dt: float = 0.02) -> MetricsReport:
    e, r, unmatched = _matched(est, ref, max_dt)
    at, ar, az = ate(est, ref, alignment, max_dt)
    try:
        rt, rr = rte(est, ref, sub_length, max_dt)
    except TooShort:
        rt, rr = float("nan"), float("nan")
    return MetricsReport(at, ar, rt, rr, az, alignment, sub_length, len(e), unmatched)
