import numpy as np
import pytest

from radleg.leg_kin import InfeasibleIkError, LegModel, body_velocity_rolling, fk_jacobians, fk_rot
from radleg.radar_ego import estimate_ego_velocity
from radleg.synth import SynthScenario, _World, load_scenario, synth_generate


def _same_log(a, b):
    assert len(a.radar) == len(b.radar)
    for x, y in zip(a.radar, b.radar):
        assert np.array_equal(x.xyz, y.xyz) and np.array_equal(x.doppler, y.doppler)
    assert np.array_equal(a.joints.q, b.joints.q) and np.array_equal(a.joints.dq, b.joints.dq)
    assert np.array_equal(a.imu.gyro, b.imu.gyro) and np.array_equal(a.imu.accel, b.imu.accel)


def test_deterministic_per_seed():
    sc = SynthScenario(duration=2.0, sigma_doppler=0.1, outlier_fraction=0.2, sigma_q=1e-3, sigma_dq=0.05, seed=7)
    _same_log(synth_generate(sc).log, synth_generate(sc).log)
    other = synth_generate(SynthScenario(**{**sc.__dict__, "seed": 8})).log
    assert not np.array_equal(other.radar[0].doppler, synth_generate(sc).log.radar[0].doppler)


def test_still_scenario():
    out = synth_generate(SynthScenario(duration=2.0, path="still", sigma_doppler=0.01, seed=1))
    d = np.concatenate([s.doppler for s in out.log.radar])
    assert abs(d.mean()) < 3e-3 and d.std() < 0.02
    assert np.max(np.abs(out.log.joints.dq)) < 1e-9
    assert np.allclose(out.truth.v, 0.0)


def test_noiseless_line_ego_velocity():
    sc = SynthScenario(duration=4.0, path="line", still_time=0.0, accel_time=0.5)
    out = synth_generate(sc)
    n = 0
    for k, scan in enumerate(out.log.radar):
        if scan.timestamp <= sc.accel_time + 0.06:
            continue
        est = estimate_ego_velocity(scan)
        assert est.valid
        assert np.allclose(est.v_hat, out.truth.R[k].T @ out.truth.v[k], atol=1e-8)
        n += 1
    assert n > 50


def test_stair_elevation_change():
    sc = SynthScenario(duration=12.0, terrain="stair", stair_start=2.0, n_risers=5)
    out = synth_generate(sc)
    assert out.truth.stair_height == pytest.approx(5 * 0.15)
    dz = out.truth.p[-1, 2] - out.truth.p[0, 2]
    assert dz == pytest.approx(5 * 0.15, abs=1e-12)


def test_joint_rates_reproduce_body_velocity():
    sc = SynthScenario(duration=6.0, path="loop", terrain="stair", stair_start=1.0)
    log = synth_generate(sc).log
    model = LegModel().with_foot_radius(sc.foot_radius)
    body = _World(sc).body(log.joints.t)
    worst, n = 0.0, 0
    for k in range(0, len(log.joints.t), 5):
        q, dq = log.joints.q[k].reshape(4, 3), log.joints.dq[k].reshape(4, 3)
        for leg in np.flatnonzero(log.contacts.flags[k]):
            w_bc, _ = fk_jacobians(leg, q[leg], dq[leg], model)
            w_wc = fk_rot(leg, q[leg], model).T @ body["w"][k] + w_bc
            _, v = body_velocity_rolling(body["R"][k], leg, q[leg], dq[leg], w_wc, model)
            worst = max(worst, np.linalg.norm(v - body["v"][k]))
            n += 1
    assert n > 100 and worst < 1e-6


def test_consistent_truth_is_leg_integral():
    out = synth_generate(SynthScenario(duration=3.0, path="loop", mode="consistent"))
    tr = out.truth
    t, v = tr.extra["leg_t"], tr.extra["leg_v"]
    P = np.vstack([np.zeros(3), np.cumsum(v * np.diff(t)[:, None], axis=0)])
    assert np.allclose(tr.p, P[np.searchsorted(t, tr.t)], atol=1e-12)
    assert np.allclose(tr.p[0], 0.0)


def test_infeasible_terrain():
    with pytest.raises(InfeasibleIkError):
        synth_generate(SynthScenario(duration=6.0, terrain="stair", stair_start=1.0, riser=0.6, n_risers=3))


def test_velocity_scale_is_kinematic():
    base = SynthScenario(duration=3.0, path="line")
    a = synth_generate(base).log
    b = synth_generate(SynthScenario(**{**base.__dict__, "leg_velocity_scale": 0.9})).log
    # radar and imu unchanged, joints differ
    assert np.array_equal(a.radar[5].doppler, b.radar[5].doppler)
    assert not np.allclose(a.joints.q, b.joints.q)


@pytest.mark.parametrize("kw", [dict(duration=0.0), dict(mode="other"), dict(path="zigzag"),
                                dict(terrain="cliff"), dict(elev_side="left"), dict(leg_velocity_scale=0.0),
                                dict(outlier_fraction=1.5)])
def test_scenario_validation(kw):
    with pytest.raises(ValueError):
        SynthScenario(**kw)


def test_elev_side():
    kw = dict(duration=1.0, path="still", elev_fraction=0.5, seed=2)
    up = synth_generate(SynthScenario(elev_side="up", **kw))
    down = synth_generate(SynthScenario(elev_side="down", **kw))
    for su, sd, kind in zip(up.log.radar, down.log.radar, up.truth.extra["kinds"]):
        bad = kind == 2
        assert np.array_equal(su.xyz[~bad], sd.xyz[~bad])
        gap = su.xyz[bad, 2] - sd.xyz[bad, 2]
        assert np.all((gap >= 2 * 0.5) & (gap <= 2 * 2.0))


def test_load_scenario(tmp_path):
    f = tmp_path / "s.ini"
    f.write_text("[scenario]\nduration = 5\npath = circle\ndynamic_segments = 1:2, 3:4\n")
    sc = load_scenario(f, seed=3)
    assert sc.duration == 5.0 and sc.path == "circle" and sc.seed == 3
    assert tuple(map(tuple, sc.dynamic_segments)) == ((1.0, 2.0), (3.0, 4.0))
