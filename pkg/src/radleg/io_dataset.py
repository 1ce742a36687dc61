"""Sensor logs on disk: a directory of CSV streams plus a TUM ground-truth file.

Layout::

    radar.csv     t,x,y,z,doppler,intensity,scan_id
    imu.csv       t,wx,wy,wz,ax,ay,az[,qw,qx,qy,qz]
    joints.csv    t,q0..q11,dq0..dq11
    contacts.csv  t,c0..c3
    gt.txt        timestamp tx ty tz qx qy qz qw
    meta.txt      key=value lines (doppler_sign, rates, frame ids)
"""
from __future__ import annotations

import io
import os
from dataclasses import dataclass, field

import numpy as np

from .geom import quat_to_rot, rot_to_quat
from .radar_ego import RadarScan


class ParseError(ValueError):
    def __init__(self, path, line, msg):
        super().__init__(f"{path}:{line}: {msg}")
        self.path, self.line = path, line


class SchemaError(ValueError):
    pass


class MonotonicityError(ValueError):
    def __init__(self, path, row, msg):
        super().__init__(f"{path}: row {row}: {msg}")
        self.path, self.row = path, row


RADAR_COLS = ["t", "x", "y", "z", "doppler", "intensity", "scan_id"]
IMU_COLS = ["t", "wx", "wy", "wz", "ax", "ay", "az"]
IMU_QUAT_COLS = ["qw", "qx", "qy", "qz"]
JOINT_COLS = ["t"] + [f"q{i}" for i in range(12)] + [f"dq{i}" for i in range(12)]
CONTACT_COLS = ["t", "c0", "c1", "c2", "c3"]


@dataclass
class Trajectory:
    t: np.ndarray = field(default_factory=lambda: np.zeros(0))
    p: np.ndarray = field(default_factory=lambda: np.zeros((0, 3)))
    R: np.ndarray = field(default_factory=lambda: np.zeros((0, 3, 3)))
    # quaternions as read from disk; reused on write so text round-trips exactly
    quat: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self):
        self.t = np.asarray(self.t, dtype=float).reshape(-1)
        self.p = np.asarray(self.p, dtype=float).reshape(-1, 3)
        self.R = np.asarray(self.R, dtype=float).reshape(-1, 3, 3)
        if not (len(self.t) == len(self.p) == len(self.R)):
            raise ValueError("trajectory arrays differ in length")

    def __len__(self):
        return len(self.t)

    def path_length(self) -> float:
        if len(self) < 2:
            return 0.0
        return float(np.linalg.norm(np.diff(self.p, axis=0), axis=1).sum())

    def append(self, t, p, R):
        self.t = np.append(self.t, t)
        self.p = np.vstack([self.p, np.reshape(p, (1, 3))])
        self.R = np.concatenate([self.R, np.reshape(R, (1, 3, 3))])
        self.quat = None


@dataclass
class ImuStream:
    t: np.ndarray
    gyro: np.ndarray
    accel: np.ndarray
    quat: np.ndarray | None = None  # (N, 4) as qw, qx, qy, qz

    def __len__(self):
        return len(self.t)


@dataclass
class JointStream:
    t: np.ndarray
    q: np.ndarray   # (N, 12)
    dq: np.ndarray  # (N, 12)

    def __len__(self):
        return len(self.t)


@dataclass
class ContactStream:
    t: np.ndarray
    flags: np.ndarray  # (N, 4) bool

    def __len__(self):
        return len(self.t)

    def at(self, times) -> np.ndarray:
        """Zero-order hold lookup; times before the first row report no contact."""
        times = np.asarray(times, dtype=float)
        idx = np.searchsorted(self.t, times, side="right") - 1
        out = np.zeros((len(times), 4), dtype=bool)
        ok = idx >= 0
        out[ok] = self.flags[idx[ok]]
        return out


def _empty_imu():
    return ImuStream(np.zeros(0), np.zeros((0, 3)), np.zeros((0, 3)))


@dataclass
class SensorLog:
    radar: list = field(default_factory=list)
    imu: ImuStream = field(default_factory=_empty_imu)
    joints: JointStream | None = None
    contacts: ContactStream | None = None
    gt: Trajectory | None = None
    meta: dict = field(default_factory=dict)

    def counts(self) -> dict:
        return {"radar_scans": len(self.radar), "imu": len(self.imu),
                "joints": 0 if self.joints is None else len(self.joints),
                "contacts": 0 if self.contacts is None else len(self.contacts)}

    def duration(self) -> float:
        ts = [s.timestamp for s in self.radar[:1] + self.radar[-1:]]
        for arr in (self.imu.t, None if self.joints is None else self.joints.t):
            if arr is not None and len(arr):
                ts += [arr[0], arr[-1]]
        return float(max(ts) - min(ts)) if ts else 0.0


# ---------------------------------------------------------------- reading

def _read_csv(path, required, optional=()):
    """Parse a headed numeric CSV; returns (column names, (N, C) array)."""
    with open(path, "r") as f:
        lines = f.read().splitlines()
    if not lines:
        raise SchemaError(f"{path}: empty file, expected header {','.join(required)}")
    header = [h.strip() for h in lines[0].split(",")]
    missing = [c for c in required if c not in header]
    if missing:
        raise SchemaError(f"{path}: missing columns {missing}")
    body = [ln for ln in lines[1:] if ln.strip()]
    if not body:
        return header, np.zeros((0, len(header)))
    try:
        data = np.loadtxt(io.StringIO("\n".join(body)), delimiter=",", ndmin=2)
        if data.shape[1] != len(header):
            raise ValueError
    except ValueError:
        # locate the bad line for the message
        for k, ln in enumerate(lines[1:], start=2):
            if not ln.strip():
                continue
            parts = ln.split(",")
            if len(parts) != len(header):
                raise ParseError(path, k, f"expected {len(header)} fields, got {len(parts)}")
            try:
                [float(p) for p in parts]
            except ValueError as exc:
                raise ParseError(path, k, str(exc)) from None
        raise ParseError(path, 0, "unparseable content")
    if not np.all(np.isfinite(data)):
        row = int(np.flatnonzero(~np.isfinite(data).all(axis=1))[0])
        raise ParseError(path, row + 2, "non-finite value")
    return header, data


def _cols(header, data, names):
    return data[:, [header.index(n) for n in names]]


def _check_sorted(path, t, strict=True):
    d = np.diff(t)
    bad = np.flatnonzero(d <= 0 if strict else d < 0)
    if len(bad):
        r = int(bad[0]) + 1
        raise MonotonicityError(path, r + 1, f"timestamp {t[r]!r} not after {t[r - 1]!r}")


def read_meta(path) -> dict:
    meta = {}
    if not os.path.exists(path):
        return meta
    with open(path) as f:
        for k, ln in enumerate(f, start=1):
            ln = ln.strip()
            if not ln or ln.startswith("#"):
                continue
            if "=" not in ln:
                raise ParseError(path, k, "expected key=value")
            key, val = ln.split("=", 1)
            meta[key.strip()] = val.strip()
    return meta


def load_log(path) -> SensorLog:
    """Read a log directory. Streams are validated and must already be time-sorted."""
    if not os.path.isdir(path):
        raise FileNotFoundError(path)
    meta = read_meta(os.path.join(path, "meta.txt"))
    sign = float(meta.get("doppler_sign", 1.0))
    log = SensorLog(meta=meta)

    p = os.path.join(path, "radar.csv")
    if os.path.exists(p):
        h, d = _read_csv(p, RADAR_COLS)
        t = _cols(h, d, ["t"])[:, 0]
        _check_sorted(p, t, strict=False)
        sid = _cols(h, d, ["scan_id"])[:, 0]
        xyz = _cols(h, d, ["x", "y", "z"])
        dop = sign * _cols(h, d, ["doppler"])[:, 0]
        inten = _cols(h, d, ["intensity"])[:, 0]
        if len(t):
            cuts = np.flatnonzero((np.diff(sid) != 0) | (np.diff(t) != 0)) + 1
            for a, b in zip(np.r_[0, cuts], np.r_[cuts, len(t)]):
                log.radar.append(RadarScan(float(t[a]), xyz[a:b], dop[a:b], inten[a:b]))
            ts = np.array([s.timestamp for s in log.radar])
            _check_sorted(p, ts)

    p = os.path.join(path, "imu.csv")
    if os.path.exists(p):
        h, d = _read_csv(p, IMU_COLS)
        t = d[:, h.index("t")]
        _check_sorted(p, t)
        quat = _cols(h, d, IMU_QUAT_COLS) if all(c in h for c in IMU_QUAT_COLS) else None
        log.imu = ImuStream(t, _cols(h, d, ["wx", "wy", "wz"]), _cols(h, d, ["ax", "ay", "az"]), quat)

    p = os.path.join(path, "joints.csv")
    if os.path.exists(p):
        h, d = _read_csv(p, JOINT_COLS)
        t = d[:, h.index("t")]
        _check_sorted(p, t)
        log.joints = JointStream(t, _cols(h, d, JOINT_COLS[1:13]), _cols(h, d, JOINT_COLS[13:]))

    p = os.path.join(path, "contacts.csv")
    if os.path.exists(p):
        h, d = _read_csv(p, CONTACT_COLS)
        t = d[:, h.index("t")]
        _check_sorted(p, t)
        log.contacts = ContactStream(t, _cols(h, d, CONTACT_COLS[1:]) > 0.5)

    p = os.path.join(path, "gt.txt")
    if os.path.exists(p):
        log.gt = read_trajectory(p)
    return log


# ---------------------------------------------------------------- writing

def _write_csv(path, header, data, fmt="%.9g"):
    data = np.asarray(data, dtype=float).reshape(-1, len(header))
    with open(path, "w") as f:
        f.write(",".join(header) + "\n")
        if len(data):
            np.savetxt(f, data, delimiter=",", fmt=fmt)


def save_log(log: SensorLog, path):
    os.makedirs(path, exist_ok=True)
    rows = []
    for k, s in enumerate(log.radar):
        n = len(s)
        rows.append(np.column_stack([np.full(n, s.timestamp), s.xyz, s.doppler, s.intensity, np.full(n, k)]))
    _write_csv(os.path.join(path, "radar.csv"), RADAR_COLS,
               np.vstack(rows) if rows else np.zeros((0, 7)), fmt="%.17g")
    im = log.imu
    cols = IMU_COLS + (IMU_QUAT_COLS if im.quat is not None else [])
    parts = [im.t[:, None], im.gyro, im.accel] + ([im.quat] if im.quat is not None else [])
    _write_csv(os.path.join(path, "imu.csv"), cols, np.hstack(parts), fmt="%.17g")
    if log.joints is not None:
        j = log.joints
        _write_csv(os.path.join(path, "joints.csv"), JOINT_COLS,
                   np.hstack([j.t[:, None], j.q, j.dq]), fmt="%.17g")
    if log.contacts is not None:
        c = log.contacts
        _write_csv(os.path.join(path, "contacts.csv"), CONTACT_COLS,
                   np.hstack([c.t[:, None], c.flags.astype(float)]), fmt="%.17g")
    if log.gt is not None:
        write_trajectory(log.gt, os.path.join(path, "gt.txt"))
    meta = {"doppler_sign": "1"} | {k: str(v) for k, v in log.meta.items()}
    with open(os.path.join(path, "meta.txt"), "w") as f:
        for k, v in meta.items():
            f.write(f"{k}={v}\n")


def format_pose(t, p, R, q=None) -> str:
    if q is None:
        q = rot_to_quat(R)  # qx qy qz qw, qw >= 0
    vals = " ".join("%.9g" % (x + 0.0) for x in (*p, *q))
    return f"{t:.9f} {vals}"


def write_trajectory(traj: Trajectory, path):
    """TUM format: ``timestamp tx ty tz qx qy qz qw``."""
    try:
        with open(path, "w") as f:
            qs = traj.quat if traj.quat is not None else [None] * len(traj)
            for t, p, R, q in zip(traj.t, traj.p, traj.R, qs):
                f.write(format_pose(t, p, R, q) + "\n")
    except OSError as exc:
        raise OSError(f"cannot write trajectory {path}: {exc}") from exc


def read_trajectory(path) -> Trajectory:
    rows = []
    with open(path) as f:
        for k, ln in enumerate(f, start=1):
            ln = ln.strip()
            if not ln or ln.startswith("#"):
                continue
            parts = ln.replace(",", " ").split()
            if len(parts) != 8:
                raise ParseError(path, k, f"expected 8 fields, got {len(parts)}")
            try:
                rows.append([float(x) for x in parts])
            except ValueError as exc:
                raise ParseError(path, k, str(exc)) from None
    if not rows:
        return Trajectory()
    d = np.array(rows)
    _check_sorted(path, d[:, 0])
    R = np.array([quat_to_rot(q) for q in d[:, 4:8]])
    return Trajectory(d[:, 0], d[:, 1:4], R, quat=d[:, 4:8])
