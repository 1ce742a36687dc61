"""Analytic radar scan generator used as the measurement oracle in tests."""
import numpy as np

from radleg.radar_ego import RadarScan

STATIC, RANDOM, ELEV = 0, 1, 2


def directions(rng, n, az_half=np.pi / 3, el_half=np.pi / 12):
    az = rng.uniform(-az_half, az_half, n)
    el = rng.uniform(-el_half, el_half, n)
    return np.column_stack([np.cos(el) * np.cos(az), np.cos(el) * np.sin(az), np.sin(el)])


def make_scan(rng, v, n_static=150, n_random=0, n_elev=0, r_range=(1.0, 4.0), sigma=0.0, dz=2.0,
              az_half=np.pi / 3, el_half=np.pi / 12, t=0.0):
    """Static points with doppler = -d.v (+ noise), random-doppler outliers and
    points whose reported z is shifted by +-dz while their doppler stays that of the true position."""
    v = np.asarray(v, dtype=float)
    n = n_static + n_random + n_elev
    d = directions(rng, n, az_half, el_half)
    r = rng.uniform(*r_range, n)
    xyz = d * r[:, None]
    dop = -(d @ v)
    if sigma > 0:
        dop = dop + rng.normal(0.0, sigma, n)
    kind = np.full(n, STATIC)
    kind[n_static:n_static + n_random] = RANDOM
    kind[n_static + n_random:] = ELEV
    dop[kind == RANDOM] = rng.uniform(-5.0, 5.0, n_random)
    xyz[kind == ELEV, 2] += rng.choice([-dz, dz], n_elev)
    perm = rng.permutation(n)
    return RadarScan(t, xyz[perm], dop[perm]), kind[perm]
