"""Synthetic quadruped logs: trotting robot with round feet, chip radar, IMU.

Stance legs keep their spherical foot rolling without slip: joint angles are
integrated from the rolling constraint, so the leg measurement model holds by
construction. ``mode="consistent"`` additionally redefines the ground truth as
the integral of the leg pipeline's own velocity output and synthesises radar
scans from it, which makes every factor residual vanish at the truth.
"""
from __future__ import annotations

import configparser
from dataclasses import dataclass, field, fields

import numpy as np
from scipy.interpolate import CubicSpline
from scipy.spatial import cKDTree

from .geom import rot_to_quat, rot_z, so3_exp
from .io_dataset import ContactStream, ImuStream, JointStream, SensorLog, Trajectory
from .leg_kin import InfeasibleIkError, LegModel, LegOdometry, _chain, _cross, _cross_rows, fk_pos, leg_ik
from .radar_ego import RadarScan

GRAVITY = 9.80665
PHASE = np.array([0.0, 0.5, 0.5, 0.0])  # trot: FL+HR, FR+HL


@dataclass
class SynthScenario:
    duration: float = 10.0
    seed: int = 0
    mode: str = "physical"          # physical | consistent
    # path
    path: str = "line"              # line | loop | circle | still
    speed: float = 0.8
    still_time: float = 0.5
    accel_time: float = 1.0
    loop_straight: float = 15.0
    loop_radius: float = 3.2
    circle_radius: float = 5.0
    # terrain, measured along the path
    terrain: str = "flat"           # flat | stair | ramp | stair_loop
    stair_start: float = 3.0
    riser: float = 0.15
    tread: float = 0.35
    n_risers: int = 6
    ramp_start: float = 20.0
    ramp_length: float = 8.0
    # body and gait
    body_height: float = 0.5
    roll_amp: float = 0.02
    gait_period: float = 0.6
    duty: float = 0.6
    step_height: float = 0.08
    foot_radius: float = 0.03
    # rates
    radar_rate: float = 20.0
    joint_rate: float = 180.0
    imu_rate: float = 100.0
    # radar
    n_landmarks: int = 500          # per 30 m x 30 m of ground
    max_range: float = 15.0
    fov_az: float = 120.0           # degrees, full width
    fov_el: float = 30.0
    max_points: int = 200
    sigma_doppler: float = 0.0
    outlier_fraction: float = 0.0
    elev_fraction: float = 0.0
    elev_min: float = 0.5
    elev_max: float = 2.0
    elev_side: str = "both"         # both | up | down; multipath ghosts are typically below
    dynamic_segments: tuple = ()    # ((t0, t1), ...)
    dynamic_fraction: float = 0.7
    dynamic_velocity: tuple = (-1.0, 0.8, 0.0)
    # legs and IMU
    sigma_q: float = 0.0
    sigma_dq: float = 0.0
    leg_velocity_scale: float = 1.0
    sigma_gyro: float = 0.0
    sigma_accel: float = 0.0
    sigma_att: float = 0.0

    def __post_init__(self):
        if not self.duration > 0:
            raise ValueError("duration must be positive")
        for name in ("outlier_fraction", "elev_fraction", "dynamic_fraction", "duty"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1]")
        if self.mode not in ("physical", "consistent"):
            raise ValueError(f"unknown mode {self.mode!r}")
        if self.path not in ("line", "loop", "circle", "still"):
            raise ValueError(f"unknown path {self.path!r}")
        if not self.leg_velocity_scale > 0:
            raise ValueError("leg_velocity_scale must be positive")
        if self.elev_side not in ("both", "up", "down"):
            raise ValueError(f"unknown elev_side {self.elev_side!r}")
        if self.terrain not in ("flat", "stair", "ramp", "stair_loop"):
            raise ValueError(f"unknown terrain {self.terrain!r}")
        self.dynamic_segments = tuple(tuple(float(x) for x in seg) for seg in self.dynamic_segments)


def load_scenario(path, **overrides) -> SynthScenario:
    """INI file with a ``[scenario]`` section; keys are SynthScenario fields."""
    cp = configparser.ConfigParser()
    if not cp.read(path):
        raise FileNotFoundError(path)
    sec = cp["scenario"] if cp.has_section("scenario") else {}
    defaults = SynthScenario()
    kw = {}
    names = {f.name for f in fields(SynthScenario)}
    for key in sec:
        if key not in names:
            raise ValueError(f"unknown scenario key {key!r}")
        val, d = sec[key], getattr(defaults, key)
        if key == "dynamic_segments":
            segs = [s for s in val.replace(";", ",").split(",") if s.strip()]
            kw[key] = tuple(tuple(float(x) for x in s.split(":")) for s in segs)
        elif key == "dynamic_velocity":
            kw[key] = tuple(float(x) for x in val.split())
        elif isinstance(d, str):
            kw[key] = val.strip()
        elif isinstance(d, int):
            kw[key] = int(val)
        else:
            kw[key] = float(val)
    kw.update(overrides)
    return SynthScenario(**kw)


@dataclass
class SynthTruth:
    """Ground truth sampled at radar scan times (world frame of the generator)."""
    t: np.ndarray
    p: np.ndarray
    v: np.ndarray
    R: np.ndarray
    stair_height: float = 0.0
    extra: dict = field(default_factory=dict)


@dataclass
class SynthOutput:
    log: SensorLog
    truth: SynthTruth


# ---------------------------------------------------------------- geometry

class _Path:
    def __init__(self, sc: SynthScenario):
        self.sc = sc

    def eval(self, s):
        """(x, y, heading, curvature) at arc length ``s``."""
        sc = self.sc
        s = np.asarray(s, dtype=float)
        if sc.path in ("line", "still"):
            z = np.zeros_like(s)
            return s.copy(), z, z.copy(), z.copy()
        if sc.path == "circle":
            R = sc.circle_radius
            return R * np.sin(s / R), R * (1 - np.cos(s / R)), s / R, np.full_like(s, 1 / R)
        L, R = sc.loop_straight, sc.loop_radius
        total = 2 * L + 2 * np.pi * R
        lap, u = np.divmod(s, total)
        x, y, psi, k = (np.zeros_like(s) for _ in range(4))
        a = u < L
        x[a], y[a], psi[a] = u[a], 0.0, 0.0
        b = (u >= L) & (u < L + np.pi * R)
        th = (u[b] - L) / R
        x[b], y[b], psi[b], k[b] = L + R * np.sin(th), R - R * np.cos(th), th, 1 / R
        c = (u >= L + np.pi * R) & (u < 2 * L + np.pi * R)
        d = u[c] - L - np.pi * R
        x[c], y[c], psi[c] = L - d, 2 * R, np.pi
        e = u >= 2 * L + np.pi * R
        th = (u[e] - 2 * L - np.pi * R) / R
        x[e], y[e], psi[e], k[e] = -R * np.sin(th), R + R * np.cos(th), np.pi + th, 1 / R
        return x, y, psi + 2 * np.pi * lap, k


def _terrain_profile(sc: SynthScenario, s):
    """Ground height as a function of arc length."""
    s = np.asarray(s, dtype=float)
    h = np.zeros_like(s)
    if sc.terrain in ("stair", "stair_loop"):
        k = np.floor((s - sc.stair_start) / sc.tread) + 1
        h = sc.riser * np.clip(k, 0, sc.n_risers)
        if sc.terrain == "stair_loop":
            top = sc.riser * sc.n_risers
            frac = np.clip((s - sc.ramp_start) / sc.ramp_length, 0, 1)
            h = np.where(s >= sc.ramp_start, top * (1 - frac), h)
    elif sc.terrain == "ramp":
        top = sc.riser * sc.n_risers
        h = top * np.clip((s - sc.stair_start) / sc.ramp_length, 0, 1)
    return h


class _World:
    """Body trajectory and terrain. Everything is a smooth function of time."""

    def __init__(self, sc: SynthScenario):
        self.sc = sc
        self.path = _Path(sc)
        s_end = self.arc(np.array([sc.duration]))[0][0]
        ds = 0.01
        grid = np.arange(-3.0, s_end + 3.0 + ds, ds)
        self._grid = grid
        h = _terrain_profile(sc, grid)
        self._h_raw = h
        # body height follows a smoothed ground profile
        w = max(int(round(0.7 / ds)), 3)
        win = np.hanning(w)
        win /= win.sum()
        hp = np.pad(h, (w, w), mode="edge")
        hs = np.convolve(hp, win, mode="same")[w:-w]
        self._z = CubicSpline(grid, hs)
        self._dz = self._z.derivative()
        self._ddz = self._z.derivative(2)
        x, y, _, _ = self.path.eval(grid)
        self._tree = cKDTree(np.column_stack([x, y]))

    def arc(self, t):
        """Arc length, speed and acceleration along the path."""
        sc = self.sc
        t = np.asarray(t, dtype=float)
        if sc.path == "still" or sc.speed == 0.0:
            z = np.zeros_like(t)
            return z, z.copy(), z.copy()
        T = sc.accel_time
        x = np.clip((t - sc.still_time) / T, 0.0, 1.0)
        s = sc.speed * T * (x**3 - 0.5 * x**4)
        sd = sc.speed * (3 * x**2 - 2 * x**3)
        sdd = np.where((x > 0) & (x < 1), sc.speed / T * (6 * x - 6 * x**2), 0.0)
        lin = t > sc.still_time + T
        s = np.where(lin, sc.speed * T * 0.5 + sc.speed * (t - sc.still_time - T), s)
        return s, sd, sdd

    def ground(self, xy):
        """Terrain height at world xy (taken from the nearest path point)."""
        xy = np.atleast_2d(xy)
        _, idx = self._tree.query(xy)
        return self._h_raw[idx]

    def body(self, t):
        sc = self.sc
        t = np.asarray(t, dtype=float)
        s, sd, sdd = self.arc(t)
        x, y, psi, kap = self.path.eval(s)
        z, dz, ddz = self._z(s), self._dz(s), self._ddz(s)
        roll = sc.roll_amp * np.sin(2 * np.pi * t / sc.gait_period)
        droll = sc.roll_amp * 2 * np.pi / sc.gait_period * np.cos(2 * np.pi * t / sc.gait_period)
        if sc.path == "still":
            roll, droll = np.zeros_like(t), np.zeros_like(t)
        pitch = -np.arctan(dz)
        dpitch = -ddz * sd / (1 + dz**2)
        yaw = psi
        dyaw = kap * sd
        c, sn = np.cos(psi), np.sin(psi)
        p = np.column_stack([x, y, z + sc.body_height])
        v = np.column_stack([c * sd, sn * sd, dz * sd])
        a = np.column_stack([c * sdd - sn * kap * sd**2, sn * sdd + c * kap * sd**2, ddz * sd**2 + dz * sdd])
        cr, sr, cp, sp = np.cos(roll), np.sin(roll), np.cos(pitch), np.sin(pitch)
        w = np.column_stack([droll - dyaw * sp, dpitch * cr + dyaw * cp * sr, -dpitch * sr + dyaw * cp * cr])
        R = _ypr_batch(roll, pitch, yaw)
        return {"p": p, "v": v, "a": a, "w": w, "R": R, "yaw": yaw}


def _ypr_batch(roll, pitch, yaw):
    cr, sr = np.cos(roll), np.sin(roll)
    cp, sp = np.cos(pitch), np.sin(pitch)
    cy, sy = np.cos(yaw), np.sin(yaw)
    R = np.empty((len(roll), 3, 3))
    R[:, 0, 0] = cy * cp
    R[:, 0, 1] = cy * sp * sr - sy * cr
    R[:, 0, 2] = cy * sp * cr + sy * sr
    R[:, 1, 0] = sy * cp
    R[:, 1, 1] = sy * sp * sr + cy * cr
    R[:, 1, 2] = sy * sp * cr - cy * sr
    R[:, 2, 0] = -sp
    R[:, 2, 1] = cp * sr
    R[:, 2, 2] = cp * cr
    return R


# ---------------------------------------------------------------- legs

def _stance_rate(leg, q, R, v, w_b, model: LegModel):
    """Joint rates that keep the foot ball rolling without slip under body motion (R, v, w_b)."""
    _, origins, axes_b, f_p = _chain(leg, q, model)
    Jp = _cross_rows(axes_b, f_p - origins).T
    Jw = axes_b.T
    r = model.foot_radius
    n = np.array([0.0, 0.0, r])
    nx = np.array([[0.0, -r, 0.0], [r, 0.0, 0.0], [0.0, 0.0, 0.0]])
    M = R @ Jp + nx @ R @ Jw
    w_w = R @ w_b
    rhs = _cross(w_w, n) - v - R @ _cross(w_b, f_p)
    return np.linalg.solve(M, rhs)


def _gait_events(sc: SynthScenario, n: int, rate: float):
    """Per-leg boolean stance mask on the joint grid."""
    t = np.arange(n) / rate
    stance = np.ones((n, 4), dtype=bool)
    if sc.path == "still" or sc.speed == 0.0:
        return stance
    ph = ((t[:, None] - sc.still_time) / sc.gait_period + PHASE[None, :]) % 1.0
    walking = t[:, None] >= sc.still_time
    stance = ~walking | (ph < sc.duty)
    return stance


def _nominal_foot(world: _World, model: LegModel, leg: int, t: float):
    b = world.body(np.array([t]))
    l0 = model.link_lengths[0]
    off = model.hip_offsets[leg] + np.array([0.0, model.lateral_sign(leg) * l0, 0.0])
    xy = b["p"][0, :2] + (rot_z(b["yaw"][0]) @ off)[:2]
    z = world.ground(xy)[0] + model.foot_radius
    return np.array([xy[0], xy[1], z])


def _foot_to_joints(world_body, k, leg, c, model):
    R, p = world_body["R"][k], world_body["p"][k]
    return leg_ik(leg, R.T @ (c - p), model)


def _legs(sc: SynthScenario, world: _World, model: LegModel, n: int, rate: float):
    h = 1.0 / rate
    t = np.arange(n) / rate
    body = world.body(t)
    half = world.body(t + 0.5 * h)
    stance = _gait_events(sc, n, rate)
    q = np.zeros((n, 4, 3))
    dq = np.zeros((n, 4, 3))
    T_st = sc.duty * sc.gait_period
    for leg in range(4):
        st = stance[:, leg]
        edges = np.flatnonzero(np.diff(st.astype(int))) + 1
        bounds = np.r_[0, edges, n]
        foot_lo = None
        for a, b in zip(bounds[:-1], bounds[1:]):
            if st[a]:
                t_mid = min(t[a] + 0.5 * T_st, sc.duration) if a > 0 else 0.0
                c = _nominal_foot(world, model, leg, t_mid)
                try:
                    q[a, leg] = _foot_to_joints(body, a, leg, c, model)
                except InfeasibleIkError as exc:
                    raise InfeasibleIkError(f"touchdown leg {leg} at t={t[a]:.3f}: {exc}") from None
                for k in range(a, b):
                    f1 = _stance_rate(leg, q[k, leg], body["R"][k], body["v"][k], body["w"][k], model)
                    dq[k, leg] = f1
                    if k + 1 < b:
                        qm = q[k, leg] + 0.5 * h * f1
                        f2 = _stance_rate(leg, qm, half["R"][k], half["v"][k], half["w"][k], model)
                        q[k + 1, leg] = q[k, leg] + h * f2
                pk = fk_pos(leg, q[b - 1, leg], model)
                foot_lo = body["p"][b - 1] + body["R"][b - 1] @ pk
            else:
                if foot_lo is None:
                    foot_lo = _nominal_foot(world, model, leg, 0.0)
                t_td = t[b] if b < n else t[-1] + h
                c_td = _nominal_foot(world, model, leg, min(t_td + 0.5 * T_st, sc.duration + T_st))
                span = max(b - a + 1, 2)
                for k in range(a, b):
                    u = (k - a + 1) / span
                    sm = u * u * (3 - 2 * u)
                    c = foot_lo + sm * (c_td - foot_lo)
                    c[2] += (sc.step_height + 0.5 * abs(c_td[2] - foot_lo[2])) * np.sin(np.pi * u)
                    try:
                        q[k, leg] = _foot_to_joints(body, k, leg, c, model)
                    except InfeasibleIkError as exc:
                        raise InfeasibleIkError(f"swing leg {leg} at t={t[k]:.3f}: {exc}") from None
                seg = slice(a, b)
                if b - a >= 2:
                    dq[seg, leg] = np.gradient(q[seg, leg], h, axis=0)
    return t, q.reshape(n, 12), dq.reshape(n, 12), stance, body


# ---------------------------------------------------------------- radar

def _landmarks(sc: SynthScenario, pos: np.ndarray, rng):
    lo = pos.min(axis=0) - 8.0
    hi = pos.max(axis=0) + 8.0
    area = (hi[0] - lo[0]) * (hi[1] - lo[1])
    n = max(int(round(sc.n_landmarks * area / 900.0)), 50)
    z_lo, z_hi = lo[2] + 8.0 - 1.5, hi[2] - 8.0 + 3.0
    return np.column_stack([rng.uniform(lo[0], hi[0], n), rng.uniform(lo[1], hi[1], n),
                            rng.uniform(z_lo, z_hi, n)])


def _in_fov(sc, xb):
    r = np.linalg.norm(xb, axis=1)
    az = np.degrees(np.arctan2(xb[:, 1], xb[:, 0]))
    el = np.degrees(np.arcsin(np.clip(xb[:, 2] / np.maximum(r, 1e-12), -1, 1)))
    return (r > 0.5) & (r < sc.max_range) & (np.abs(az) <= sc.fov_az / 2) & (np.abs(el) <= sc.fov_el / 2)


def _radar_scan(sc, rng, t, p, R, v_w, L, v_body_override=None):
    xb = (L - p) @ R  # R^T (L - p) row-wise
    sel = np.flatnonzero(_in_fov(sc, xb))
    if len(sel) > sc.max_points:
        sel = np.sort(rng.choice(sel, sc.max_points, replace=False))
    xb = xb[sel]
    v_b = R.T @ v_w if v_body_override is None else v_body_override
    d = xb / np.linalg.norm(xb, axis=1, keepdims=True)
    dop = -d @ v_b
    n = len(xb)
    if sc.sigma_doppler > 0:
        dop = dop + rng.normal(0.0, sc.sigma_doppler, n)
    kind = np.zeros(n, dtype=int)  # 0 static, 1 random doppler, 2 bad elevation, 3 dynamic
    if n:
        u = rng.random(n)
        out = u < sc.outlier_fraction
        elev = (u >= sc.outlier_fraction) & (u < sc.outlier_fraction + sc.elev_fraction)
        dop = np.where(out, rng.uniform(-5.0, 5.0, n), dop)
        sign = {"both": rng.choice([-1.0, 1.0], n), "up": 1.0, "down": -1.0}[sc.elev_side]
        shift = rng.uniform(sc.elev_min, sc.elev_max, n) * sign
        xb = xb.copy()
        xb[elev, 2] += shift[elev]
        kind[out], kind[elev] = 1, 2
    if any(a <= t <= b for a, b in sc.dynamic_segments) and n:
        m = int(round(sc.dynamic_fraction / max(1.0 - sc.dynamic_fraction, 1e-3) * n))
        # one large rigid object ahead of the robot
        rr = rng.uniform(3.0, 8.0, m)
        az = np.radians(rng.uniform(-40.0, 40.0, m))
        el = np.radians(rng.uniform(-10.0, 10.0, m))
        xo = np.column_stack([rr * np.cos(el) * np.cos(az), rr * np.cos(el) * np.sin(az), rr * np.sin(el)])
        rel = R.T @ (np.asarray(sc.dynamic_velocity, float) - v_w)
        do = (xo / rr[:, None]) @ rel
        if sc.sigma_doppler > 0:
            do = do + rng.normal(0.0, sc.sigma_doppler, m)
        xb = np.vstack([xb, xo])
        dop = np.r_[dop, do]
        kind = np.r_[kind, np.full(m, 3)]
    return RadarScan(t, xb, dop, np.full(len(dop), -1.0)), kind


# ---------------------------------------------------------------- main

def synth_generate(sc: SynthScenario, model: LegModel | None = None) -> SynthOutput:
    model = (model or LegModel()).with_foot_radius(sc.foot_radius)
    rng = np.random.default_rng(sc.seed)
    world = _World(sc)

    n_j = int(np.floor(sc.duration * sc.joint_rate + 1e-9)) + 1
    # a velocity scale s is produced as a kinematic calibration error: joints come from a robot
    # whose links are 1/s times the nominal ones, so nominal kinematics read s times the motion
    gen_model = model
    if sc.leg_velocity_scale != 1.0:
        k = 1.0 / sc.leg_velocity_scale
        gen_model = LegModel(model.hip_offsets * k, model.axes.copy(), tuple(np.array(model.link_lengths) * k),
                             model.foot_radius, model.joint_lower, model.joint_upper)
    try:
        tj, q, dq, stance, body_j = _legs(sc, world, gen_model, n_j, sc.joint_rate)
    except (InfeasibleIkError, np.linalg.LinAlgError) as exc:
        raise InfeasibleIkError(f"scenario infeasible for the leg model: {exc}") from exc

    n_i = int(np.floor(sc.duration * sc.imu_rate + 1e-9)) + 1
    ti = np.arange(n_i) / sc.imu_rate
    bi = world.body(ti)
    g = np.array([0.0, 0.0, GRAVITY])
    acc = np.einsum("kji,kj->ki", bi["R"], bi["a"] + g)
    gyro = bi["w"].copy()
    Ri = bi["R"].copy()
    if sc.sigma_att > 0:
        Ri = np.array([R @ so3_exp(rng.normal(0.0, sc.sigma_att, 3)) for R in Ri])
    if sc.sigma_gyro > 0:
        gyro += rng.normal(0.0, sc.sigma_gyro, gyro.shape)
    if sc.sigma_accel > 0:
        acc += rng.normal(0.0, sc.sigma_accel, acc.shape)
    quat = np.array([rot_to_quat(R) for R in Ri])[:, [3, 0, 1, 2]]
    imu = ImuStream(ti, gyro, acc, quat)

    q_meas = q + (rng.normal(0.0, sc.sigma_q, q.shape) if sc.sigma_q > 0 else 0.0)
    dq_meas = dq.copy()
    if sc.sigma_dq > 0:
        dq_meas = dq_meas + rng.normal(0.0, sc.sigma_dq, dq.shape)
    joints = JointStream(tj, q_meas, dq_meas)
    contacts = ContactStream(tj.copy(), stance.copy())

    n_r = int(np.floor(sc.duration * sc.radar_rate + 1e-9)) + 1
    # radar times land on the joint grid when the rates divide
    ratio = sc.joint_rate / sc.radar_rate
    if abs(ratio - round(ratio)) < 1e-12:
        tr = (np.arange(n_r) * int(round(ratio))) / sc.joint_rate
    else:
        tr = np.arange(n_r) / sc.radar_rate
    br = world.body(tr)
    L = _landmarks(sc, br["p"], rng)

    meta = {"doppler_sign": "1", "radar_rate": sc.radar_rate, "joint_rate": sc.joint_rate,
            "imu_rate": sc.imu_rate, "generator": "radleg.synth", "mode": sc.mode, "seed": sc.seed}
    stair_h = sc.riser * sc.n_risers if sc.terrain in ("stair", "ramp") else 0.0

    if sc.mode == "physical":
        # each scan reports the mean velocity over the frame interval ending at its timestamp
        v_avg = br["v"].copy()
        v_avg[1:] = (br["p"][1:] - br["p"][:-1]) / np.diff(tr)[:, None]
        scans, kinds = [], []
        for k, t in enumerate(tr):
            s, kind = _radar_scan(sc, rng, t, br["p"][k], br["R"][k], v_avg[k], L)
            scans.append(s)
            kinds.append(kind)
        gt = Trajectory(ti, bi["p"], bi["R"])
        truth = SynthTruth(tr, br["p"], br["v"], br["R"], stair_h, {"kinds": kinds, "landmarks": L})
        log = SensorLog(scans, imu, joints, contacts, gt, meta)
        return SynthOutput(log, truth)

    return _consistent(sc, rng, model, imu, joints, contacts, tr, L, meta, stair_h)


def _consistent(sc, rng, model, imu, joints, contacts, tr, L, meta, stair_h):
    """Ground truth redefined as the integral of the leg pipeline output."""
    from .estimator import AttitudeProvider  # deferred: estimator imports io_dataset

    att = AttitudeProvider(imu.t, imu.gyro, imu.accel, imu.quat)
    att.set_anchor(tr[0])
    # landmarks move with the anchored frame (origin at the first body position)
    p0 = _World(sc).body(np.array([tr[0]]))["p"][0]
    L = (L - p0) @ rot_z(-att.anchor_yaw).T
    odo = LegOdometry(model)
    hold = contacts.at(joints.t)
    t_seg, v_seg = [joints.t[0]], []
    for k, t in enumerate(joints.t):
        s = odo.update(t, joints.q[k], joints.dq[k], hold[k], att.rotation_at(t))
        if k == 0:
            continue
        if s is None:
            raise InfeasibleIkError(f"no stance leg over ({joints.t[k - 1]}, {t}]; cannot build consistent truth")
        t_seg.append(t)
        v_seg.append(s.v)
    t_seg, v_seg = np.array(t_seg), np.array(v_seg)
    P = np.vstack([np.zeros(3), np.cumsum(v_seg * np.diff(t_seg)[:, None], axis=0)])

    idx = np.searchsorted(t_seg, tr)
    if np.any(idx >= len(t_seg)) or np.any(t_seg[np.minimum(idx, len(t_seg) - 1)] != tr):
        raise ValueError("consistent mode needs radar times on the joint grid")
    p_r = P[idx]
    R_r = att.rotations_at(tr)
    v_w = np.zeros((len(tr), 3))
    v_w[1:] = (p_r[1:] - p_r[:-1]) / np.diff(tr)[:, None]
    v_w[0] = v_seg[0]
    scans, kinds = [], []
    for k, t in enumerate(tr):
        v_b = R_r[k].T @ v_w[k]
        s, kind = _radar_scan(sc, rng, t, p_r[k], R_r[k], v_w[k], L, v_body_override=v_b)
        scans.append(s)
        kinds.append(kind)
    gt = Trajectory(tr, p_r, R_r)
    truth = SynthTruth(tr, p_r, v_w, R_r, stair_h, {"kinds": kinds, "leg_t": t_seg, "leg_v": v_seg})
    log = SensorLog(scans, imu, joints, contacts, gt, meta)
    return SynthOutput(log, truth)
