"""Fixed-lag smoother over (p, v, yaw, radar bias, leg bias) keyframes.

Roll and pitch come from the IMU attitude and are never optimised. Radar scans
and joint samples are replayed in time order; keyframes sit on radar scan
times, each window gets one radar factor, one leg factor, bias random-walk
terms and a loose relative-yaw term from the IMU heading.
"""
from __future__ import annotations

import configparser
import time
from dataclasses import dataclass, field, fields, replace

import numpy as np
from scipy.spatial.transform import Rotation, Slerp

from .geom import YprAngles, rot_z, wrap_angle, ypr_compose, ypr_decompose, yaw_of
from .io_dataset import SensorLog, Trajectory
from .leg_factor import LegNoiseParams, leg_jacobian, leg_preintegrate, leg_residual
from .leg_kin import LegModel, LegOdometry, leg_model_from_section
from .radar_ego import EgoVelEstimate, RansacParams, estimate_ego_velocity
from .radar_factor import radar_jacobian_4dof, radar_preintegrate, radar_residual_4dof
from .state import BL, BR, P, STATE_DIM, V, YAW, NavState

GRAVITY = 9.80665


class OutOfRangeError(ValueError):
    pass


class NonMonotoneTimeError(ValueError):
    pass


class NumericalFailure(RuntimeError):
    pass


# ---------------------------------------------------------------- attitude

class AttitudeProvider:
    """IMU attitude in a heading frame anchored at ``anchor_time`` (yaw 0 there).

    Uses the IMU's own orientation when logged, else a complementary filter
    (gyro integration pulled toward the gravity direction with gain 0.02).
    """

    def __init__(self, t, gyro=None, accel=None, quat_wxyz=None, gain: float = 0.02, guard: float = 0.05):
        self.t = np.asarray(t, dtype=float)
        if len(self.t) == 0:
            raise OutOfRangeError("no IMU samples")
        self.guard = guard
        if quat_wxyz is not None:
            q = np.asarray(quat_wxyz, dtype=float)
            rots = Rotation.from_quat(q[:, [1, 2, 3, 0]])
        else:
            rots = Rotation.from_matrix(self._complementary(np.asarray(gyro, float), np.asarray(accel, float), gain))
        self._rots = rots
        self._slerp = Slerp(self.t, rots) if len(self.t) > 1 else None
        self.anchor_yaw = 0.0

    @classmethod
    def from_log(cls, log: SensorLog, **kw):
        im = log.imu
        return cls(im.t, im.gyro, im.accel, im.quat, **kw)

    def _complementary(self, gyro, accel, gain):
        out = np.zeros((len(self.t), 3, 3))
        R = _gravity_alignment(accel[0])
        out[0] = R
        for k in range(1, len(self.t)):
            dt = self.t[k] - self.t[k - 1]
            R = R @ Rotation.from_rotvec(0.5 * (gyro[k] + gyro[k - 1]) * dt).as_matrix()
            # nudge roll/pitch toward the measured gravity direction
            g_meas = R @ accel[k]
            n = np.linalg.norm(g_meas)
            if n > 1e-6:
                axis = np.cross(g_meas / n, [0.0, 0.0, 1.0])
                R = Rotation.from_rotvec(gain * axis).as_matrix() @ R
            out[k] = R
        return out

    def set_anchor(self, t: float):
        self.anchor_yaw = 0.0
        self.anchor_yaw = yaw_of(self.raw_rotation(t))

    def raw_rotation(self, t: float) -> np.ndarray:
        if t < self.t[0] - self.guard or t > self.t[-1] + self.guard:
            raise OutOfRangeError(f"t={t} outside IMU coverage [{self.t[0]}, {self.t[-1]}]")
        if self._slerp is None:
            return self._rots[0].as_matrix()
        tc = min(max(t, self.t[0]), self.t[-1])
        return self._slerp([tc]).as_matrix()[0]

    def rotation_at(self, t: float) -> np.ndarray:
        return rot_z(-self.anchor_yaw) @ self.raw_rotation(t)

    def attitude_at(self, t: float) -> YprAngles:
        """Roll, pitch and anchored yaw at ``t``."""
        return ypr_decompose(self.rotation_at(t))

    def rotations_at(self, ts) -> np.ndarray:
        ts = np.asarray(ts, dtype=float)
        if len(ts) and (ts.min() < self.t[0] - self.guard or ts.max() > self.t[-1] + self.guard):
            raise OutOfRangeError("query outside IMU coverage")
        if self._slerp is None:
            return np.repeat(self._rots[0].as_matrix()[None], len(ts), axis=0)
        R = self._slerp(np.clip(ts, self.t[0], self.t[-1])).as_matrix()
        return rot_z(-self.anchor_yaw)[None] @ R


def _gravity_alignment(accel) -> np.ndarray:
    """Rotation with zero yaw whose body z aligns with the measured specific force."""
    a = np.asarray(accel, dtype=float)
    a = a / np.linalg.norm(a)
    roll = np.arctan2(a[1], a[2])
    pitch = np.arctan2(-a[0], np.hypot(a[1], a[2]))
    return ypr_compose(YprAngles(roll, pitch, 0.0))


# ---------------------------------------------------------------- parameters

@dataclass
class SolverParams:
    max_iterations: int = 10
    lambda_init: float = 1e-4
    lambda_scale: float = 10.0
    convergence_tol: float = 1e-8
    window_size: int = 20
    keyframe_period: float = 0.25

    def __post_init__(self):
        for f in fields(self):
            if not getattr(self, f.name) > 0:
                raise ValueError(f"{f.name} must be positive")


@dataclass
class EstimatorParams:
    mode: str = "full"                 # full | radar | leg
    solver: SolverParams = field(default_factory=SolverParams)
    ransac: RansacParams = field(default_factory=RansacParams)
    leg_noise: LegNoiseParams = field(default_factory=LegNoiseParams)
    leg_model: LegModel = field(default_factory=LegModel)
    sigma_br: float = 1e-3             # radar bias random walk, m/s/sqrt(s)
    sigma_yaw: float = 1e-3            # IMU relative-yaw term, rad/sqrt(s)
    sigma_v_weak: float = 1.0          # velocity tie used when a window has no radar factor
    radar_gate: float = 0.5            # m/s, radar vs leg disagreement (full mode only)
    prior_p: float = 1e-3
    prior_yaw: float = 1e-3
    prior_v: float = 1.0
    prior_bias: float = 1e-3
    radar_rotation: tuple = (0.0, 0.0, 0.0)     # radar-to-body roll, pitch, yaw (rad)
    radar_translation: tuple = (0.0, 0.0, 0.0)  # radar origin in body frame (m)

    def __post_init__(self):
        if self.mode not in ("full", "radar", "leg"):
            raise ValueError(f"unknown mode {self.mode!r}")

    @property
    def use_radar(self):
        return self.mode in ("full", "radar")

    @property
    def use_leg(self):
        return self.mode in ("full", "leg")


def _nums(text):
    return tuple(float(x) for x in text.replace(",", " ").split())


def load_config(path, **overrides) -> EstimatorParams:
    """INI config with optional [estimator], [solver], [ransac], [leg_noise] and [leg] sections."""
    cp = configparser.ConfigParser()
    if not cp.read(path):
        raise FileNotFoundError(path)
    return params_from_config(cp, **overrides)


def params_from_config(cp: configparser.ConfigParser, **overrides) -> EstimatorParams:
    def section(name, cls):
        if not cp.has_section(name):
            return cls()
        kw = {}
        types = {f.name: f.type for f in fields(cls)}
        for key, val in cp[name].items():
            if key not in types:
                raise ValueError(f"unknown key [{name}] {key}")
            default = getattr(cls(), key)
            if isinstance(default, bool):
                kw[key] = cp[name].getboolean(key)
            elif isinstance(default, int):
                kw[key] = int(val)
            else:
                kw[key] = float(val)
        return cls(**kw)

    kw = {"solver": section("solver", SolverParams), "ransac": section("ransac", RansacParams),
          "leg_noise": section("leg_noise", LegNoiseParams),
          "leg_model": leg_model_from_section(cp["leg"]) if cp.has_section("leg") else LegModel()}
    if cp.has_section("estimator"):
        est_fields = {f.name for f in fields(EstimatorParams)}
        for key, val in cp["estimator"].items():
            if key not in est_fields:
                raise ValueError(f"unknown key [estimator] {key}")
            if key == "mode":
                kw[key] = val.strip()
            elif key in ("radar_rotation", "radar_translation"):
                kw[key] = _nums(val)
            else:
                kw[key] = float(val)
    kw.update(overrides)
    return EstimatorParams(**kw)


# ---------------------------------------------------------------- factors

@dataclass
class RadarFactor:
    i: int
    j: int
    preint: object
    sqrt_info: np.ndarray


@dataclass
class LegFactor:
    i: int
    j: int
    preint: object
    sqrt_info: np.ndarray


@dataclass
class BetweenFactor:
    """Random walk on one bias block, relative yaw, or a weak velocity tie."""
    kind: str          # "b_r" | "b_l" | "yaw" | "vel"
    i: int
    j: int
    target: object     # yaw delta or velocity
    sigma: float


@dataclass
class PriorFactor:
    idx: int
    mean: np.ndarray   # 13-vector
    sigma: np.ndarray  # 13-vector


def _sqrt_info(cov: np.ndarray) -> np.ndarray:
    cov = 0.5 * (cov + cov.T) + 1e-15 * np.eye(len(cov))
    L = np.linalg.cholesky(cov)
    return np.linalg.solve(L, np.eye(len(cov)))


def _blockcols(k: int):
    base = k * STATE_DIM
    return {"p": slice(base + P.start, base + P.stop), "v": slice(base + V.start, base + V.stop),
            "gamma": slice(base + YAW.start, base + YAW.stop),
            "b_r": slice(base + BR.start, base + BR.stop), "b_l": slice(base + BL.start, base + BL.stop)}


@dataclass
class OptimizeReport:
    costs: list
    iterations: int
    converged: bool


class SlidingWindow:
    def __init__(self):
        self.states: list = []
        self.radar: list = []
        self.leg: list = []
        self.between: list = []
        self.prior: PriorFactor | None = None

    def __len__(self):
        return len(self.states)

    def factors(self):
        return self.radar + self.leg + self.between

    def n_factors(self):
        return len(self.factors()) + (self.prior is not None)

    # ---- linearisation
    def _active(self, only):
        sel = lambda fs: [f for f in fs if only is None or only in (f.i, f.j)]
        prior = self.prior if (self.prior is not None and (only is None or only == self.prior.idx)) else None
        return sel(self.radar), sel(self.leg), sel(self.between), prior

    def linearize(self, states=None, only=None):
        """Stacked whitened residual and dense Jacobian.

        ``only`` restricts to factors touching that state index (plus its prior).
        """
        states = self.states if states is None else states
        n = len(states) * STATE_DIM
        radar, leg, between, prior = self._active(only)
        sizes = {"b_r": 3, "b_l": 3, "yaw": 1, "vel": 3}
        m = 9 * len(radar) + 3 * len(leg) + sum(sizes[f.kind] for f in between) + (STATE_DIM if prior else 0)
        r = np.zeros(m)
        J = np.zeros((m, n))
        row = 0
        for f in radar:
            si, sj = states[f.i], states[f.j]
            res = radar_residual_4dof(si, sj, f.preint).stacked()
            jac = radar_jacobian_4dof(si, sj, f.preint)
            W = f.sqrt_info
            bi, bj = f.i * STATE_DIM, f.j * STATE_DIM
            rows = slice(row, row + 9)
            r[rows] = W @ res
            J[rows, bi + P.start:bi + P.stop] = W @ jac["p_i"]
            J[rows, bi + V.start:bi + V.stop] = W @ jac["v_i"]
            J[rows, bi + YAW.start:bi + YAW.stop] = W @ jac["gamma_i"]
            J[rows, bi + BR.start:bi + BR.stop] = W @ jac["b_i"]
            J[rows, bj + P.start:bj + P.stop] = W @ jac["p_j"]
            J[rows, bj + V.start:bj + V.stop] = W @ jac["v_j"]
            J[rows, bj + YAW.start:bj + YAW.stop] = W @ jac["gamma_j"]
            J[rows, bj + BR.start:bj + BR.stop] = W @ jac["b_j"]
            row += 9
        for f in leg:
            si, sj = states[f.i], states[f.j]
            jac = leg_jacobian(si, sj, f.preint)
            W = f.sqrt_info
            bi, bj = f.i * STATE_DIM, f.j * STATE_DIM
            rows = slice(row, row + 3)
            r[rows] = W @ leg_residual(si, sj, f.preint)
            J[rows, bi + P.start:bi + P.stop] = W @ jac["p_i"]
            J[rows, bj + P.start:bj + P.stop] = W @ jac["p_j"]
            J[rows, bj + BL.start:bj + BL.stop] = W @ jac["b_j"]
            row += 3
        for f in between:
            si, sj = states[f.i], states[f.j]
            bi, bj = f.i * STATE_DIM, f.j * STATE_DIM
            w = 1.0 / f.sigma
            if f.kind in ("b_r", "b_l"):
                sl = BR if f.kind == "b_r" else BL
                r[row:row + 3] = w * (getattr(sj, f.kind) - getattr(si, f.kind))
                J[row:row + 3, bi + sl.start:bi + sl.stop] = -w * np.eye(3)
                J[row:row + 3, bj + sl.start:bj + sl.stop] = w * np.eye(3)
            elif f.kind == "yaw":
                r[row] = w * wrap_angle(sj.yaw - si.yaw - f.target)
                J[row, bi + YAW.start] = -w
                J[row, bj + YAW.start] = w
            elif f.kind == "vel":
                r[row:row + 3] = w * (sj.v - f.target)
                J[row:row + 3, bj + V.start:bj + V.stop] = w * np.eye(3)
            else:
                raise ValueError(f.kind)
            row += sizes[f.kind]
        if prior is not None:
            x = states[prior.idx].to_vector()
            res = x - prior.mean
            res[YAW] = wrap_angle(res[YAW][0])
            base = prior.idx * STATE_DIM
            r[row:row + STATE_DIM] = res / prior.sigma
            J[row:row + STATE_DIM, base:base + STATE_DIM] = np.diag(1.0 / prior.sigma)
        return r, J

    def cost(self, states=None) -> float:
        r, _ = self.linearize(states)
        return float(r @ r)

    # ---- solve
    def optimize(self, params: SolverParams | None = None) -> OptimizeReport:
        """Levenberg-Marquardt on the stacked whitened residuals."""
        params = params or SolverParams()
        if not self.states:
            raise ValueError("empty window")
        r, J = self.linearize()
        cost = float(r @ r)
        costs = [cost]
        lam = params.lambda_init
        converged = False
        it = 0
        while it < params.max_iterations:
            if cost < 1e-24:
                converged = True
                break
            it += 1
            H = J.T @ J
            g = J.T @ r
            if not (np.all(np.isfinite(H)) and np.all(np.isfinite(g))):
                raise NumericalFailure("non-finite normal equations")
            D = np.maximum(np.diag(H), 1e-9)
            accepted = False
            while lam < 1e12:
                try:
                    step = np.linalg.solve(H + lam * np.diag(D), -g)
                except np.linalg.LinAlgError:
                    lam *= params.lambda_scale
                    continue
                cand = [s.retract(step[k * STATE_DIM:(k + 1) * STATE_DIM]) for k, s in enumerate(self.states)]
                r_new, J_new = self.linearize(cand)
                c_new = float(r_new @ r_new)
                if np.isfinite(c_new) and c_new <= cost:
                    accepted = True
                    break
                lam *= params.lambda_scale
            if not accepted:
                converged = True  # no descent direction left: at a minimum up to round-off
                break
            self.states = cand
            r, J = r_new, J_new
            rel = (cost - c_new) / max(cost, 1e-300)
            cost = c_new
            costs.append(cost)
            lam = max(lam / params.lambda_scale, 1e-12)
            tiny_step = np.max(np.abs(step)) < 1e-10
            if rel < params.convergence_tol or cost < 1e-24 or tiny_step:
                converged = True
                break
        return OptimizeReport(costs, it, converged)

    # ---- sliding
    def marginalize_oldest(self):
        """Drop state 0; the information it carried to state 1 becomes a diagonal prior."""
        if len(self.states) < 2:
            raise ValueError("nothing to slide")
        r, J = self.linearize(only=0)
        cols = slice(0, 2 * STATE_DIM)
        Jl = J[:, cols]
        H = Jl.T @ Jl
        H00, H01, H11 = H[:13, :13], H[:13, 13:], H[13:, 13:]
        Hm = H11 - H01.T @ np.linalg.solve(H00 + 1e-12 * np.eye(13), H01)
        cov = np.linalg.pinv(0.5 * (Hm + Hm.T) + 1e-12 * np.eye(13))
        sigma = np.sqrt(np.clip(np.diag(cov), 1e-18, None))
        new_prior = PriorFactor(0, self.states[1].to_vector(), sigma)

        self.states = self.states[1:]

        def keep(fs):
            out = []
            for f in fs:
                if f.i == 0 or f.j == 0:
                    continue
                f.i -= 1
                f.j -= 1
                out.append(f)
            return out

        self.radar, self.leg, self.between = keep(self.radar), keep(self.leg), keep(self.between)
        self.prior = new_prior


# ---------------------------------------------------------------- driver

@dataclass
class _LegSeg:
    t0: float
    t1: float
    v: np.ndarray


class Estimator:
    """Incremental pipeline: feed radar scans and joint samples in time order."""

    def __init__(self, attitude: AttitudeProvider, params: EstimatorParams | None = None, gyro=None):
        self.att = attitude
        self.p = params or EstimatorParams()
        self.window = SlidingWindow()
        self.legodo = LegOdometry(self.p.leg_model, self.p.leg_noise.sigma_v)
        self.output = Trajectory()
        self.gyro = gyro  # (t, w) arrays for lever-arm compensation, optional
        self.R_bs = ypr_compose(YprAngles(*self.p.radar_rotation))
        self.t_bs = np.asarray(self.p.radar_translation, dtype=float)

        self._legs: list = []          # _LegSeg covering time since the last keyframe
        self._leg_t = None             # end of leg coverage
        self._radar: list = []         # (estimate, R, dt) since last keyframe
        self._last_valid_t = None
        self._last_scan_t = None
        self._ref = None               # (estimate, R) at last keyframe
        self._pending_kf = None        # keyframe time waiting for leg coverage
        self._kf_times: list = []
        self.stats = {"scans": 0, "valid": 0, "gated": 0, "keyframes": 0, "solve_time": 0.0, "lm_iters": 0}
        self.reports: list = []

    # ---- leg input
    def add_joint_sample(self, t, q, dq, contacts):
        if not self.p.use_leg:
            return
        R = self.att.rotation_at(t)
        s = self.legodo.update(t, q, dq, contacts, R)
        if s is not None:
            self._legs.append(_LegSeg(s.t0, s.t1, s.v))
        self._leg_t = t
        if self._pending_kf is not None and t >= self._pending_kf:
            self._finish_keyframe()

    def _leg_mean(self, t0, t1):
        """Time-weighted mean leg velocity over (t0, t1], or None if uncovered."""
        acc, w = np.zeros(3), 0.0
        for s in reversed(self._legs):
            if s.t1 <= t0:
                break
            ov = min(s.t1, t1) - max(s.t0, t0)
            if ov > 0:
                acc += s.v * ov
                w += ov
        return acc / w if w > 0.5 * (t1 - t0) else None

    # ---- radar input
    def add_radar_scan(self, scan):
        self.stats["scans"] += 1
        t = scan.timestamp
        if self._last_scan_t is not None and t <= self._last_scan_t:
            raise NonMonotoneTimeError(f"radar scan at {t} not after {self._last_scan_t}")
        prev_scan_t, self._last_scan_t = self._last_scan_t, t
        est = estimate_ego_velocity(scan, self.p.ransac) if self.p.use_radar else None
        R = self.att.rotation_at(t)
        if est is not None and est.valid:
            est = self._to_body(est, t)
            if self.p.mode == "full" and prev_scan_t is not None:
                v_leg = self._leg_mean(prev_scan_t, t)
                if v_leg is not None and np.linalg.norm(R @ est.v_hat - v_leg) > self.p.radar_gate:
                    est = replace(est, valid=False, reason="gated by leg velocity")
                    self.stats["gated"] += 1
        valid = est is not None and est.valid
        if valid:
            self.stats["valid"] += 1

        if not self.window.states:
            if valid or not self.p.use_radar:
                old = self.att.anchor_yaw
                self.att.set_anchor(t)
                if self.att.anchor_yaw != old:
                    self.legodo.reset()  # orientations stored so far used the old heading frame
                R = self.att.rotation_at(t)
                self._first_keyframe(t, est if valid else None, R)
            return
        if self._pending_kf is not None:
            # still waiting for leg coverage of the previous keyframe; seal it now
            self._finish_keyframe()
        if valid:
            t_from = max(self._last_valid_t if self._last_valid_t is not None else t, self._kf_times[-1])
            dt = t - t_from
            if dt > 0:
                self._radar.append((est, R, dt))
            self._last_valid_t = t
        if t - self._kf_times[-1] >= self.p.solver.keyframe_period - 1e-9:
            self._pending_kf = t
            self._pending_scan = (est if valid else None, R)
            if not self.p.use_leg or (self._leg_t is not None and self._leg_t >= t):
                self._finish_keyframe()

    def _to_body(self, est: EgoVelEstimate, t) -> EgoVelEstimate:
        if np.allclose(self.R_bs, np.eye(3)) and not self.t_bs.any():
            return est
        v = self.R_bs @ est.v_hat
        if self.t_bs.any() and self.gyro is not None:
            gt, gw = self.gyro
            w = np.array([np.interp(t, gt, gw[:, k]) for k in range(3)])
            v = v - np.cross(w, self.t_bs)
        return replace(est, v_hat=v, covariance=self.R_bs @ est.covariance @ self.R_bs.T)

    # ---- keyframes
    def _first_keyframe(self, t, est, R):
        a = ypr_decompose(R)
        v0 = R @ est.v_hat if est is not None else np.zeros(3)
        s = NavState(t, np.zeros(3), v0, 0.0, a.roll, a.pitch)
        w = self.window
        w.states.append(s)
        pr = self.p
        sig = np.r_[np.full(3, pr.prior_p), np.full(3, pr.prior_v), pr.prior_yaw,
                    np.full(6, pr.prior_bias)]
        w.prior = PriorFactor(0, s.to_vector(), sig)
        self._kf_times.append(t)
        self._ref = (est, R) if est is not None else None
        self._last_valid_t = t if est is not None else None
        self.stats["keyframes"] += 1
        self._trim_legs(t)

    def _trim_legs(self, t):
        kept = []
        for s in self._legs:
            if s.t1 <= t:
                continue
            if s.t0 < t:
                s = _LegSeg(t, s.t1, s.v)
            kept.append(s)
        self._legs = kept

    def _leg_window(self, t0, t1):
        """Leg velocity pieces clipped to (t0, t1]; gaps are bridged by holding the nearest velocity."""
        pieces = []
        cur = t0
        last_v = None
        for s in self._legs:
            a, b = max(s.t0, t0), min(s.t1, t1)
            if b <= a:
                continue
            if a > cur + 1e-9 and last_v is not None:
                pieces.append((last_v, a - cur))
            elif a > cur + 1e-9:
                pieces.append((s.v, a - cur))
            pieces.append((s.v, b - a))
            cur = b
            last_v = s.v
        if pieces and t1 > cur + 1e-9:
            pieces.append((last_v, t1 - cur))
        return pieces

    def _finish_keyframe(self):
        t = self._pending_kf
        self._pending_kf = None
        est_kf, R_kf = self._pending_scan
        w = self.window
        i = len(w.states) - 1
        si = w.states[i]
        t_i = self._kf_times[-1]
        dt = t - t_i
        a = ypr_decompose(R_kf)
        pr = self.p

        radar_pre = None
        meas = list(self._radar)
        if meas:
            covered = sum(m[2] for m in meas)
            if covered < dt - 1e-9:
                est_l, R_l, dt_l = meas[-1]
                meas[-1] = (est_l, R_l, dt_l + dt - covered)  # hold the last velocity to the keyframe
            ref = self._ref if self._ref is not None else (meas[0][0], meas[0][1])
            R_i_att = self.att.rotation_at(t_i)
            radar_pre = radar_preintegrate(meas, si.b_r, R_i_att, ref, pr.sigma_br)
            radar_pre.dt_total = dt

        leg_pre = None
        if pr.use_leg:
            pieces = self._leg_window(t_i, t)
            if pieces:
                leg_pre = leg_preintegrate(pieces, si.b_l, pr.leg_noise)

        # dead-reckoned initial guess
        yaw_delta = wrap_angle(yaw_of(R_kf) - yaw_of(self.att.rotation_at(t_i)))
        sj = NavState(t, si.p.copy(), si.v.copy(), si.yaw + yaw_delta, a.roll, a.pitch, si.b_r, si.b_l)
        if radar_pre is not None:
            sj.p = si.p + si.v * dt + si.R @ radar_pre.dp_dev(si.b_r)
            sj.v = radar_pre.v_last(si.b_r)
        elif leg_pre is not None:
            sj.p = si.p + leg_pre.delta_p + leg_pre.d_dp_d_bias @ (si.b_l - leg_pre.lin_bias)
            sj.v = pieces[-1][0] - si.b_l
        else:
            sj.p = si.p + si.v * dt

        w.states.append(sj)
        j = i + 1
        if radar_pre is not None:
            w.radar.append(RadarFactor(i, j, radar_pre, _sqrt_info(radar_pre.cov)))
        else:
            w.between.append(BetweenFactor("b_r", i, j, None, pr.sigma_br * np.sqrt(dt)))
            v_tie = pieces[-1][0] if (pr.use_leg and leg_pre is not None) else si.v
            w.between.append(BetweenFactor("vel", i, j, np.asarray(v_tie, float), pr.sigma_v_weak))
        if leg_pre is not None:
            w.leg.append(LegFactor(i, j, leg_pre, _sqrt_info(leg_pre.cov)))
        w.between.append(BetweenFactor("b_l", i, j, None, pr.leg_noise.sigma_bl * np.sqrt(dt)))
        w.between.append(BetweenFactor("yaw", i, j, yaw_delta, pr.sigma_yaw * np.sqrt(dt)))

        self._kf_times.append(t)
        self.stats["keyframes"] += 1
        if est_kf is not None:
            self._ref = (est_kf, R_kf)
        elif meas:
            self._ref = (meas[-1][0], meas[-1][1])
        self._radar = []
        self._last_valid_t = t if est_kf is not None else self._last_valid_t
        self._trim_legs(t)

        t0 = time.perf_counter()
        rep = w.optimize(pr.solver)
        self.stats["solve_time"] += time.perf_counter() - t0
        self.stats["lm_iters"] += rep.iterations
        self.reports.append(rep)
        if len(w.states) > pr.solver.window_size:
            self._emit(w.states[0])
            w.marginalize_oldest()

    def _emit(self, s: NavState):
        self.output.append(s.timestamp, s.p, s.R)

    def finish(self) -> Trajectory:
        if self._pending_kf is not None:
            self._finish_keyframe()
        for s in self.window.states:
            self._emit(s)
        self.window.states = self.window.states[-1:]
        return self.output


def replay(log: SensorLog, params: EstimatorParams | None = None) -> Estimator | None:
    """Feed every stream of ``log`` through an Estimator in time order (not yet finished)."""
    params = params or EstimatorParams()
    if not log.radar and (log.joints is None or len(log.joints) == 0):
        return None
    att = AttitudeProvider.from_log(log)
    t_first = log.radar[0].timestamp if log.radar else log.joints.t[0]
    att.set_anchor(min(max(t_first, att.t[0]), att.t[-1]))
    est = Estimator(att, params, gyro=(log.imu.t, log.imu.gyro))
    events = []  # (time, order, index); joint samples go before a radar scan at the same time
    for k, s in enumerate(log.radar):
        events.append((s.timestamp, 1, k))
    contacts = None
    if params.use_leg and log.joints is not None:
        contacts = (log.contacts.at(log.joints.t) if log.contacts is not None
                    else np.ones((len(log.joints), 4), dtype=bool))
        events += [(t, 0, k) for k, t in enumerate(log.joints.t)]
    events.sort()
    lo, hi = att.t[0] - att.guard, att.t[-1] + att.guard
    for t, kind, k in events:
        if t < lo or t > hi:
            continue
        if kind == 1:
            est.add_radar_scan(log.radar[k])
        else:
            est.add_joint_sample(t, log.joints.q[k], log.joints.dq[k], contacts[k])
    return est


def process_log(log: SensorLog, params: EstimatorParams | None = None) -> Trajectory:
    """Replay a log and return the keyframe trajectory (empty for an empty log)."""
    est = replay(log, params)
    return Trajectory() if est is None else est.finish()
