"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line."""
import os
import pathlib
import time

import numpy as np
import pytest

from radleg.estimator import EstimatorParams, SolverParams, load_config, process_log, replay
from radleg.geom import ypr_decompose
from radleg.io_dataset import load_log
from radleg.leg_factor import leg_residual
from radleg.leg_kin import LegModel
from radleg.metrics import PosYaw, align_posyaw, associate, ate, evaluate, fit_posyaw, rte
from radleg.radar_ego import RansacParams, estimate_ego_velocity
from radleg.radar_factor import radar_residual_4dof
from radleg.state import NavState
from radleg.synth import SynthScenario, load_scenario, synth_generate
from jaccheck import kin_errors, leg_errors, radar_errors
from scangen import ELEV, make_scan
from test_metrics import _noisy, _oracle_ate, _oracle_rte, _walk

CONFIGS = pathlib.Path(__file__).resolve().parents[1] / "configs"
STAIR_DIR = os.environ.get("RADLEG_STAIR_DIR", str(pathlib.Path(__file__).resolve().parents[1] / "data" / "Stair"))


def _report(capsys, n, ok, detail):
    with capsys.disabled():
        print(f"\n[criterion {n:>2}] {'PASS' if ok else 'FAIL'}  {detail}")


def test_criterion_01_jacobians(capsys):
    t0 = time.perf_counter()
    worst, zero, n = 0.0, True, 0
    for seed in range(12):
        rng = np.random.default_rng(1000 + seed)
        errs, z = radar_errors(rng)
        zero &= z
        worst = max(worst, *errs.values(), *leg_errors(rng).values(), *kin_errors(rng).values())
        n += 1
    dt = time.perf_counter() - t0
    ok = worst < 1e-5 and zero and dt < 5.0
    _report(capsys, 1, ok, f"{n} points, max rel err {worst:.2e}, alpha/beta blocks zero={zero}, {dt:.2f} s")
    assert zero and worst < 1e-5
    assert dt < 5.0


def test_criterion_02_ransac_recovery(capsys):
    t0 = time.perf_counter()
    good, rejected = 0, []
    for s in range(100):
        rng = np.random.default_rng(s)
        v = np.r_[rng.uniform(-1.5, 1.5, 2), rng.uniform(-0.3, 0.3)]
        scan, kind = make_scan(rng, v, n_static=150, n_random=32, n_elev=32, sigma=0.01)
        est = estimate_ego_velocity(scan, RansacParams(inlier_threshold_xz=0.02, seed=s))
        good += bool(est.valid and np.all(np.abs(est.v_hat - v) <= 0.05))
        bad = kind == ELEV
        rejected.append(np.mean(~est.inlier_mask[bad]))
    dt = time.perf_counter() - t0
    rej = float(np.mean(rejected))
    ok = good >= 98 and rej >= 0.9 and dt < 10.0
    _report(capsys, 2, ok, f"{good}/100 scans within 0.05 m/s, elevation outliers rejected {rej:.1%}, {dt:.2f} s")
    assert good >= 98 and rej >= 0.9
    assert dt < 10.0


def test_criterion_03_xz_stage_ablation(capsys):
    t0 = time.perf_counter()
    sc = SynthScenario(duration=30, path="line", terrain="stair", stair_start=3, sigma_doppler=0.01,
                       elev_fraction=0.25, elev_side="down", seed=0)
    out = synth_generate(sc)
    z = {}
    for use in (True, False):
        p = EstimatorParams(mode="full", ransac=RansacParams(use_xz_stage=use, inlier_threshold_xz=0.02))
        z[use] = ate(process_log(out.log, p), out.log.gt)[2]
    dt = time.perf_counter() - t0
    red = 1.0 - z[True] / z[False]
    ok = z[True] < z[False] and red >= 0.2 and dt < 60.0
    _report(capsys, 3, ok, f"ATE_z with xz {z[True]:.4f} m, without {z[False]:.4f} m, reduction {red:.0%}, {dt:.1f} s")
    assert z[True] < z[False] and red >= 0.2
    assert dt < 60.0


def test_criterion_04_rolling_contact_ablation(capsys):
    t0 = time.perf_counter()
    out = synth_generate(SynthScenario(duration=20, path="circle", circle_radius=4, sigma_dq=0.05, sigma_q=5e-4))
    a = {}
    for r in (0.03, 0.0):
        p = EstimatorParams(mode="leg", leg_model=LegModel(foot_radius=r))
        a[r] = ate(process_log(out.log, p), out.log.gt)[0]
    dt = time.perf_counter() - t0
    ok = a[0.03] < a[0.0] and dt < 60.0
    _report(capsys, 4, ok, f"leg-only ATE_t rolling {a[0.03]:.4f} m, fixed contact {a[0.0]:.4f} m, {dt:.1f} s")
    assert a[0.03] < a[0.0]
    assert dt < 60.0


def _gt_states(out, times):
    tr = out.truth
    states = []
    for t in times:
        k = int(np.argmin(np.abs(tr.t - t)))
        a = ypr_decompose(tr.R[k])
        states.append(NavState(t, tr.p[k], tr.v[k], a.yaw, a.roll, a.pitch))
    return states


def test_criterion_05_zero_residual_fixpoint(capsys):
    out = synth_generate(SynthScenario(duration=10, path="loop", terrain="stair", mode="consistent"))
    e = replay(out.log, EstimatorParams(solver=SolverParams(window_size=10000)))
    w = e.window
    gt = _gt_states(out, [s.timestamp for s in w.states])
    res = [np.abs(radar_residual_4dof(gt[f.i], gt[f.j], f.preint).stacked()).max() for f in w.radar]
    res += [np.abs(leg_residual(gt[f.i], gt[f.j], f.preint)).max() for f in w.leg]
    res += [abs(gt[f.j].yaw - gt[f.i].yaw - f.target) for f in w.between if f.kind == "yaw"]
    worst = float(max(res))
    e.finish()
    iters = max(r.iterations for r in e.reports)
    final = max(r.costs[-1] for r in e.reports)
    ok = worst < 1e-10 and iters <= 2 and final < 1e-16
    _report(capsys, 5, ok, f"{len(w.radar)} radar + {len(w.leg)} leg factors, max residual {worst:.1e}, "
                           f"max LM iterations {iters}, max final cost {final:.1e}")
    assert worst < 1e-10
    assert iters <= 2 and final < 1e-16


def test_criterion_06_complementarity(capsys):
    t0 = time.perf_counter()
    out = synth_generate(SynthScenario(duration=40, path="loop", sigma_doppler=0.05, dynamic_segments=((10, 15),),
                                       leg_velocity_scale=0.95, seed=0))
    a = {m: ate(process_log(out.log, EstimatorParams(mode=m)), out.log.gt)[0] for m in ("radar", "leg", "full")}
    dt = time.perf_counter() - t0
    ok = a["full"] <= min(a["radar"], a["leg"]) and dt < 120.0
    _report(capsys, 6, ok, f"ATE_t full {a['full']:.3f} m, radar {a['radar']:.3f} m, leg {a['leg']:.3f} m, {dt:.1f} s")
    assert a["full"] <= min(a["radar"], a["leg"])
    assert dt < 120.0


@pytest.fixture(scope="module")
def stair_loop_run():
    out = synth_generate(load_scenario(CONFIGS / "stair_loop.ini"))
    params = load_config(CONFIGS / "estimator.ini")
    t0 = time.perf_counter()
    e = replay(out.log, params)
    traj = e.finish()
    wall = time.perf_counter() - t0
    return out, traj, e, wall


def test_criterion_07_closed_loop_accuracy(capsys, stair_loop_run):
    out, traj, _, _ = stair_loop_run
    rep = evaluate(traj, out.log.gt)
    ok = rep.ate_t < 0.5 and rep.ate_z < 0.15
    _report(capsys, 7, ok, f"{out.log.duration():.0f} s, path {out.log.gt.path_length():.1f} m, "
                           f"ATE_t {rep.ate_t:.4f} m, ATE_z {rep.ate_z:.4f} m")
    assert rep.ate_t < 0.5 and rep.ate_z < 0.15


def test_criterion_08_throughput(capsys, stair_loop_run):
    _, _, e, wall = stair_loop_run
    per = wall / e.stats["scans"] * 1e3
    ok = per <= 50.0
    _report(capsys, 8, ok, f"{per:.2f} ms per radar update over {e.stats['scans']} scans "
                           f"(solver share {e.stats['solve_time'] / e.stats['scans'] * 1e3:.2f} ms)")
    assert per <= 50.0


def test_criterion_09_metrics_oracle(capsys):
    worst, align_err = 0.0, 0.0
    for seed in range(20):
        rng = np.random.default_rng(seed)
        ref = _walk(rng, n=120)
        est = _noisy(rng, ref)
        for al in (True, False):
            got = ate(est, ref, "posyaw" if al else "none")
            worst = max(worst, np.max(np.abs(np.array(got) - _oracle_ate(est, ref, al))))
        worst = max(worst, np.max(np.abs(np.array(rte(est, ref, 3.0)) - _oracle_rte(est, ref, 3.0))))
        T = PosYaw(rng.uniform(-np.pi, np.pi), rng.normal(0, 10, 3))
        moved = T.apply(ref)
        back = align_posyaw(moved, ref)
        align_err = max(align_err, abs(np.angle(np.exp(1j * (back.yaw + T.yaw)))),
                        np.max(np.abs(back.apply(moved).p - ref.p)))
    ok = worst < 1e-12 and align_err < 1e-9
    _report(capsys, 9, ok, f"max |metric - loop oracle| {worst:.1e}, max alignment recovery error {align_err:.1e}")
    assert worst < 1e-12 and align_err < 1e-9


def test_criterion_10_stair_dataset(capsys):
    if not os.path.isdir(STAIR_DIR):
        with capsys.disabled():
            print(f"\n[criterion 10] SKIP  Stair sequence not found at {STAIR_DIR} (set RADLEG_STAIR_DIR)")
        pytest.skip("Stair sequence not available locally")
    log = load_log(STAIR_DIR)
    traj = process_log(log, load_config(CONFIGS / "estimator.ini"))
    T = fit_posyaw(*_paired(traj, log.gt))
    end = T.apply(traj).p[-1]
    k = int(np.argmin(np.abs(log.gt.t - traj.t[-1])))
    err = float(np.linalg.norm(end - log.gt.p[k]))
    ok = err < 0.1 * 253.24 and abs(log.duration() - 304.40) < 1.0
    _report(capsys, 10, ok, f"final-pose error {err:.2f} m over {log.gt.path_length():.1f} m, "
                            f"duration {log.duration():.2f} s")
    assert ok


def _paired(est, ref):
    ie, ir = associate(est, ref)
    return est.p[ie], ref.p[ir]
