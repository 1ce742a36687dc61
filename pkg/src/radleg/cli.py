"""Command-line entry points: run, eval, synth, egovel, ablate."""
from __future__ import annotations

import argparse
import sys
import time

import numpy as np

from .estimator import EstimatorParams, load_config, process_log
from .io_dataset import load_log, read_trajectory, save_log, write_trajectory
from .metrics import CSV_HEADER, evaluate
from .radar_ego import estimate_ego_velocity
from .synth import load_scenario, synth_generate

MODES = ("radar", "leg", "full")


def _params(config, **overrides) -> EstimatorParams:
    if config is None:
        return EstimatorParams(**overrides)
    return load_config(config, **overrides)


def cmd_run(args):
    log = load_log(args.log)
    traj = process_log(log, _params(args.config))
    write_trajectory(traj, args.out)
    print(f"wrote {len(traj)} poses to {args.out}")
    return 0


def cmd_eval(args):
    est, ref = read_trajectory(args.est), read_trajectory(args.ref)
    rep = evaluate(est, ref, args.align, args.sub_length)
    print(CSV_HEADER)
    print(rep.csv_row())
    print()
    print(rep.table())
    return 0


def cmd_synth(args):
    over = {} if args.seed is None else {"seed": args.seed}
    sc = load_scenario(args.scenario, **over) if args.scenario else None
    if sc is None:
        from .synth import SynthScenario
        sc = SynthScenario(**over)
    out = synth_generate(sc)
    save_log(out.log, args.out)
    c = out.log.counts()
    print(f"{args.out}: {c['radar_scans']} scans, {c['joints']} joint samples, "
          f"{out.log.duration():.2f} s, path {out.log.gt.path_length():.2f} m")
    return 0


def cmd_egovel(args):
    log = load_log(args.log)
    if not 0 <= args.scan < len(log.radar):
        raise IndexError(f"scan {args.scan} out of range [0, {len(log.radar)})")
    scan = log.radar[args.scan]
    params = _params(args.config).ransac
    e = estimate_ego_velocity(scan, params)
    np.set_printoptions(precision=6, suppress=True)
    print(f"scan {args.scan}  t={scan.timestamp:.6f}  points={len(scan)}")
    print(f"xy stage inliers : {e.n_xy_inliers}  v_xy={e.v_xy}")
    print(f"xz stage inliers : {e.n_xz_inliers}")
    print(f"valid            : {e.valid}  {e.reason}")
    print(f"v_hat            : {e.v_hat}")
    print("covariance       :")
    print(e.covariance)
    return 0


def cmd_ablate(args):
    log = load_log(args.log)
    ref = read_trajectory(args.ref) if args.ref else log.gt
    if ref is None or len(ref) < 2:
        raise ValueError("ablate needs ground truth (gt.txt in the log or --ref)")
    modes = MODES if args.mode == "all" else (args.mode,)
    rows = []
    for m in modes:
        t0 = time.perf_counter()
        traj = process_log(log, _params(args.config, mode=m))
        rep = evaluate(traj, ref, args.align, args.sub_length)
        rows.append((m, rep, time.perf_counter() - t0))
    print("mode," + CSV_HEADER + ",runtime_s")
    for m, rep, dt in rows:
        print(f"{m},{rep.csv_row()},{dt:.3f}")
    print()
    print(f"{'mode':<8}{'ATE_t m':>10}{'ATE_r deg':>11}{'RTE_t m':>10}{'ATE_z m':>10}")
    for m, rep, _ in rows:
        print(f"{m:<8}{rep.ate_t:>10.4f}{rep.ate_r:>11.4f}{rep.rte_t:>10.4f}{rep.ate_z:>10.4f}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="radleg", description="radar + leg odometry toolkit")
    sub = ap.add_subparsers(dest="cmd", required=True)

    p = sub.add_parser("run", help="estimate a trajectory from a log directory")
    p.add_argument("--log", required=True)
    p.add_argument("--config", default=None, help="INI estimator config")
    p.add_argument("--out", required=True, help="output trajectory (TUM)")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("eval", help="ATE/RTE of an estimate against a reference")
    p.add_argument("--est", required=True)
    p.add_argument("--ref", required=True)
    p.add_argument("--align", choices=("posyaw", "none"), default="posyaw")
    p.add_argument("--sub-length", type=float, default=10.0)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("synth", help="generate a synthetic log")
    p.add_argument("--scenario", default=None, help="INI scenario file")
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=None)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("egovel", help="RANSAC diagnostics for one radar scan")
    p.add_argument("--log", required=True)
    p.add_argument("--scan", type=int, required=True)
    p.add_argument("--config", default=None)
    p.set_defaults(func=cmd_egovel)

    p = sub.add_parser("ablate", help="compare radar-only, leg-only and fused runs")
    p.add_argument("--log", required=True)
    p.add_argument("--config", default=None)
    p.add_argument("--mode", choices=MODES + ("all",), default="all")
    p.add_argument("--ref", default=None, help="reference trajectory; defaults to the log's gt.txt")
    p.add_argument("--align", choices=("posyaw", "none"), default="posyaw")
    p.add_argument("--sub-length", type=float, default=10.0)
    p.set_defaults(func=cmd_ablate)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)  # exits 2 on usage errors
    try:
        return args.func(args)
    except (OSError, ValueError, RuntimeError, IndexError, KeyError) as exc:
        print(f"radleg {args.cmd}: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
