"""Single-scan ego-velocity from radar Doppler with a two-stage (xy, then z) RANSAC.

Sign convention: a static point at unit direction ``d`` seen from a sensor moving
with velocity ``v`` reports ``doppler = -d . v`` (approaching targets are negative).
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


class DegenerateError(ValueError):
    pass


@dataclass
class RadarScan:
    """One radar frame. Zero-range points are dropped on construction."""

    timestamp: float
    xyz: np.ndarray
    doppler: np.ndarray
    intensity: np.ndarray | None = None

    def __post_init__(self):
        self.xyz = np.asarray(self.xyz, dtype=float).reshape(-1, 3)
        self.doppler = np.asarray(self.doppler, dtype=float).reshape(-1)
        if self.intensity is None:
            self.intensity = np.full(len(self.doppler), -1.0)
        self.intensity = np.asarray(self.intensity, dtype=float).reshape(-1)
        if not (len(self.xyz) == len(self.doppler) == len(self.intensity)):
            raise ValueError("xyz, doppler and intensity lengths differ")
        keep = np.linalg.norm(self.xyz, axis=1) > 0.0
        if not keep.all():
            self.xyz = self.xyz[keep]
            self.doppler = self.doppler[keep]
            self.intensity = self.intensity[keep]

    def __len__(self):
        return len(self.doppler)

    @property
    def directions(self) -> np.ndarray:
        return self.xyz / np.linalg.norm(self.xyz, axis=1, keepdims=True)


@dataclass
class RansacParams:
    max_iterations: int = 100
    max_iterations_xz: int = 50
    inlier_threshold_xy: float = 0.15
    inlier_threshold_xz: float = 0.15
    min_points: int = 5
    min_inlier_ratio: float = 0.2
    sigma_r: float = 0.1
    use_xz_stage: bool = True
    seed: int = 0

    def __post_init__(self):
        if self.inlier_threshold_xy <= 0 or self.inlier_threshold_xz <= 0:
            raise ValueError("inlier thresholds must be positive")
        if self.min_points < 3:
            raise ValueError("min_points must be >= 3")
        if not 0.0 < self.min_inlier_ratio <= 1.0:
            raise ValueError("min_inlier_ratio must lie in (0, 1]")


@dataclass
class EgoVelEstimate:
    v_hat: np.ndarray
    inlier_mask: np.ndarray
    covariance: np.ndarray
    valid: bool
    reason: str = ""
    n_xy_inliers: int = 0
    n_xz_inliers: int = 0
    timestamp: float = 0.0
    v_xy: tuple = field(default=(np.nan, np.nan))

    @classmethod
    def invalid(cls, n_points: int, reason: str, timestamp: float = 0.0, **kw):
        return cls(np.full(3, np.nan), np.zeros(n_points, dtype=bool),
                   np.full((3, 3), np.nan), False, reason, timestamp=timestamp, **kw)


def scan_rng(scan: RadarScan, params: RansacParams) -> np.random.Generator:
    """Deterministic generator keyed on the scan timestamp (microseconds) and the params seed."""
    stamp = int(round(abs(scan.timestamp) * 1e6)) & 0xFFFFFFFF
    return np.random.default_rng([params.seed & 0xFFFFFFFF, stamp])


def _fit_xy(d: np.ndarray, doppler: np.ndarray) -> np.ndarray:
    A = d[:, :2]
    return np.linalg.lstsq(A, -doppler, rcond=None)[0]


def ransac_xy(scan: RadarScan, params: RansacParams, rng: np.random.Generator | None = None):
    """Azimuthal consensus on (v_x, v_y) with v_z ignored.

    Returns ``(v_x, v_y, inliers)`` with ``inliers`` a sorted index array. Raises
    DegenerateError when too few usable points or the consensus is too small.
    """
    if rng is None:
        rng = scan_rng(scan, params)
    if len(scan) == 0:
        raise DegenerateError("empty scan")
    d = scan.directions
    usable = np.flatnonzero(np.hypot(scan.xyz[:, 0], scan.xyz[:, 1]) > 1e-9)
    if len(usable) < params.min_points:
        raise DegenerateError(f"{len(usable)} usable points < min_points={params.min_points}")
    du, dop = d[usable], scan.doppler[usable]
    thr = params.inlier_threshold_xy

    n_iter = params.max_iterations
    pairs = np.stack([rng.integers(0, len(usable), n_iter),
                      rng.integers(0, len(usable) - 1, n_iter)], axis=1)
    pairs[:, 1] += pairs[:, 1] >= pairs[:, 0]  # distinct second index
    A = du[pairs, :2]  # (K, 2, 2)
    b = -dop[pairs]
    det = A[:, 0, 0] * A[:, 1, 1] - A[:, 0, 1] * A[:, 1, 0]
    ok = np.abs(det) > 1e-6
    if not ok.any():
        raise DegenerateError("no well-conditioned minimal sample")
    models = np.linalg.solve(A[ok], b[ok][..., None])[..., 0]  # (K', 2)
    res = np.abs(dop[None, :] + models @ du[:, :2].T)
    counts = (res <= thr).sum(axis=1)
    best = models[int(np.argmax(counts))]

    mask = np.abs(dop + du[:, :2] @ best) <= thr
    for _ in range(10):
        if mask.sum() < 2:
            break
        best = _fit_xy(du[mask], dop[mask])
        new_mask = np.abs(dop + du[:, :2] @ best) <= thr
        if np.array_equal(new_mask, mask):
            break
        mask = new_mask
    n_in = int(mask.sum())
    if n_in < max(2, params.min_points) or n_in < params.min_inlier_ratio * len(usable):
        raise DegenerateError(f"xy consensus {n_in}/{len(usable)} too small")
    return float(best[0]), float(best[1]), usable[mask]


def ransac_xz(scan: RadarScan, xy_inliers, v_x: float, v_y: float, params: RansacParams,
              rng: np.random.Generator | None = None):
    """One-parameter consensus on v_z with (v_x, v_y) held fixed.

    Points whose elevation is wrong disagree with the fixed horizontal velocity
    and drop out. Returns ``(v_z, inliers)`` with ``inliers`` a subset of
    ``xy_inliers``; an empty consensus returns ``v_z = 0`` and no inliers.
    """
    xy_inliers = np.asarray(xy_inliers, dtype=int)
    if len(xy_inliers) == 0:
        raise DegenerateError("no xy inliers")
    if not (np.isfinite(v_x) and np.isfinite(v_y)):
        raise DegenerateError("non-finite horizontal velocity")
    if rng is None:
        rng = scan_rng(scan, params)
    d = scan.directions[xy_inliers]
    # doppler + d_xy . v_xy + d_z v_z
    base = scan.doppler[xy_inliers] + d[:, 0] * v_x + d[:, 1] * v_y
    dz = d[:, 2]
    thr = params.inlier_threshold_xz

    cand = np.flatnonzero(np.abs(dz) > 1e-3)
    if len(cand) == 0:
        mask = np.abs(base) <= thr
        return 0.0, xy_inliers[mask]
    picks = cand[rng.integers(0, len(cand), params.max_iterations_xz)]
    vz_models = -base[picks] / dz[picks]
    res = np.abs(base[None, :] + vz_models[:, None] * dz[None, :])
    counts = (res <= thr).sum(axis=1)
    vz = float(vz_models[int(np.argmax(counts))])

    mask = np.abs(base + vz * dz) <= thr
    for _ in range(10):
        if not mask.any():
            break
        den = np.dot(dz[mask], dz[mask])
        if den < 1e-12:
            break
        vz = float(-np.dot(dz[mask], base[mask]) / den)
        new_mask = np.abs(base + vz * dz) <= thr
        if np.array_equal(new_mask, mask):
            break
        mask = new_mask
    if not mask.any():
        return 0.0, xy_inliers[:0]
    return vz, xy_inliers[mask]


def lsq_velocity(scan: RadarScan, inliers, sigma_r: float = 0.1, max_cond: float = 1e8) -> EgoVelEstimate:
    """Full 3D least squares ``min sum (doppler_i + d_i . v)^2`` over the inliers."""
    inliers = np.asarray(inliers, dtype=int)
    n = len(scan)
    mask = np.zeros(n, dtype=bool)
    mask[inliers] = True
    if len(inliers) < 3:
        return EgoVelEstimate.invalid(n, "fewer than 3 inliers", scan.timestamp)
    A = scan.directions[inliers]
    b = -scan.doppler[inliers]
    AtA = A.T @ A
    if np.linalg.cond(AtA) > max_cond:
        return EgoVelEstimate.invalid(n, "rank deficient geometry", scan.timestamp)
    v = np.linalg.solve(AtA, A.T @ b)
    cov = sigma_r**2 * np.linalg.inv(AtA)
    cov = 0.5 * (cov + cov.T)
    return EgoVelEstimate(v, mask, cov, True, n_xz_inliers=len(inliers), timestamp=scan.timestamp)


def estimate_ego_velocity(scan: RadarScan, params: RansacParams | None = None) -> EgoVelEstimate:
    """xy RANSAC, then z RANSAC, then least squares. Never raises; check ``valid``."""
    params = params or RansacParams()
    n = len(scan)
    rng = scan_rng(scan, params)
    try:
        vx, vy, xy_in = ransac_xy(scan, params, rng)
    except DegenerateError as exc:
        return EgoVelEstimate.invalid(n, f"xy: {exc}", scan.timestamp)

    if not params.use_xz_stage:
        est = lsq_velocity(scan, xy_in, params.sigma_r)
        est.n_xy_inliers = len(xy_in)
        est.v_xy = (vx, vy)
        return est

    vz, xz_in = ransac_xz(scan, xy_in, vx, vy, params, rng)
    if len(xz_in) == 0:
        # keep the horizontal solution, make v_z uninformative
        d = scan.directions[xy_in]
        cov = np.zeros((3, 3))
        cov[:2, :2] = params.sigma_r**2 * np.linalg.inv(d[:, :2].T @ d[:, :2])
        cov[2, 2] = 1e4
        mask = np.zeros(n, dtype=bool)
        return EgoVelEstimate(np.array([vx, vy, 0.0]), mask, cov, True, "empty xz consensus",
                              len(xy_in), 0, scan.timestamp, (vx, vy))
    est = lsq_velocity(scan, xz_in, params.sigma_r)
    est.n_xy_inliers = len(xy_in)
    est.v_xy = (vx, vy)
    if not est.valid:
        est.reason = f"lsq: {est.reason}"
    return est
