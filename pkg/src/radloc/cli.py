"""Command-line interface.

Four subcommands cover the pipeline: reconstruct (event files to
world-frame cones plus classification stats), estimate (cones to a
tracked hypothesis), simulate (closed-loop scenario runs), and metrics
(error series against ground truth). Exit codes: 0 success, 1 generic
failure, 2 parse error, 3 schema error, 4 ordering violation.
"""

from __future__ import annotations

import argparse
import dataclasses
import logging
import os
import sys
from pathlib import Path

import numpy as np

from . import io as rio
from .errors import (
    MalformedInputError,
    OrderingError,
    ParseError,
    PoseExtrapolationError,
    RadlocError,
    SchemaError,
)
from .estimator import NoiseConfig, SourceEstimator, Status
from .events import EventClass, process_hits, process_pairs
from .geometry import Frame, interpolate_pose, transform_cone
from .initializer import Mode
from .simulator import metrics as sim_metrics
from .simulator import run_scenario

log = logging.getLogger("radloc")


def _setup_logging() -> None:
    level_name = os.environ.get("RADLOC_LOG", "WARNING").upper()
    level = getattr(logging, level_name, logging.WARNING)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="radloc",
        description="Compton-cone reconstruction and gamma source localization tools",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    rec = sub.add_parser("reconstruct", help="event files to world-frame cones")
    rec.add_argument("--events", required=True, help="hit or pre-paired event CSV")
    rec.add_argument("--poses", required=True, help="pose stream CSV")
    rec.add_argument("--out", required=True, help="output directory")
    rec.add_argument("--window-ns", type=float, default=86.0)
    rec.add_argument("--threshold-kev", type=float, default=800.0)
    rec.add_argument("--toa-gap-ns", type=float, default=100.0)
    rec.add_argument("--duration", type=float, default=None, help="stream duration in s for rates")
    rec.add_argument("--format", choices=["auto", "hits", "pairs"], default="auto")
    rec.add_argument("--swap-hypotheses", action="store_true")
    rec.add_argument("--drop-ambiguous", action="store_true")
    rec.add_argument("--geometric-centroid", action="store_true")

    est = sub.add_parser("estimate", help="run the estimator over recorded cones")
    est.add_argument("--cones", required=True)
    est.add_argument("--out", required=True)
    est.add_argument("--mode", choices=["3d", "2d"], default="3d")
    est.add_argument("--r", type=float, default=1.0)
    est.add_argument("--q", type=float, default=0.01)
    est.add_argument("--gate", type=float, default=9.0)
    est.add_argument("--init-count", type=int, default=5)
    est.add_argument("--far", type=float, default=1e9)
    est.add_argument("--multistart", type=int, default=8)

    sim = sub.add_parser("simulate", help="run a scenario closed loop")
    sim.add_argument("--scenario", required=True)
    sim.add_argument("--out", required=True)
    sim.add_argument("--seed", type=int, default=None, help="override the scenario seed")

    met = sub.add_parser("metrics", help="error series of estimates vs ground truth")
    met.add_argument("--estimates", required=True)
    met.add_argument("--truth", required=True)
    met.add_argument("--out", required=True)
    met.add_argument("--threshold", type=float, default=2.0, help="convergence threshold in m")
    return parser


def cmd_reconstruct(args: argparse.Namespace) -> int:
    out = Path(args.out)
    poses = rio.read_poses_csv(args.poses)
    fmt = args.format if args.format != "auto" else rio.sniff_events_format(args.events)
    common = dict(
        threshold=args.threshold_kev,
        swap_hypotheses=args.swap_hypotheses,
        duration=args.duration,
    )
    if fmt == "hits":
        hits = rio.read_hits_csv(args.events)
        result = process_hits(
            hits,
            max_toa_gap=args.toa_gap_ns,
            window=args.window_ns,
            energy_weighted=not args.geometric_centroid,
            drop_ambiguous=args.drop_ambiguous,
            **common,
        )
    else:
        result = process_pairs(rio.read_pairs_csv(args.events), **common)

    world = []
    skipped = 0
    for cone in result.cones:
        try:
            pose = interpolate_pose(poses, cone.timestamp)
        except PoseExtrapolationError:
            skipped += 1
            continue
        world.append(transform_cone(cone, pose))
    rio.write_cones_csv(out / "cones.csv", world)

    summary = result.summary
    rates = summary.rates()
    shares = summary.shares()
    print(f"{'class':<14}{'count':>8}{'rate[1/s]':>12}{'share':>8}")
    for cls in (EventClass.PHOTOELECTRIC, EventClass.COMPTON_CANDIDATE, EventClass.BACKGROUND):
        print(
            f"{cls.value:<14}{summary.counts[cls]:>8}{rates[cls]:>12.3f}{shares[cls]:>8.3f}"
        )
    print(
        f"pairs={result.pair_count} rejected_pairs={summary.rejected_pairs} "
        f"ambiguous={summary.ambiguous} cones={len(world)} outside_pose_range={skipped}"
    )
    rio.write_json(
        out / "summary.json",
        {
            "counts": {c.value: n for c, n in summary.counts.items()},
            "rates_per_s": {c.value: r for c, r in rates.items()},
            "shares": {c.value: s for c, s in shares.items()},
            "duration_s": summary.duration,
            "pairs": result.pair_count,
            "rejected_pairs": summary.rejected_pairs,
            "ambiguous_tracks": summary.ambiguous,
            "cones_written": len(world),
            "outside_pose_range": skipped,
        },
    )
    if skipped:
        log.warning("%d cones fell outside the pose stream range", skipped)
    return 0


def cmd_estimate(args: argparse.Namespace) -> int:
    out = Path(args.out)
    cones = rio.read_cones_csv(args.cones)
    if any(c.frame is not Frame.WORLD for c in cones):
        raise MalformedInputError(
            "estimate requires world-frame cones; run reconstruct with poses first"
        )
    config = NoiseConfig(
        r=args.r,
        far_variance=args.far,
        q=args.q,
        outlier_gate=args.gate,
        init_cone_count=args.init_count,
        init_multistart=args.multistart,
    )
    session = SourceEstimator(config, Mode(args.mode))
    rows = []
    nan = float("nan")
    for cone in cones:
        state, action = session.ingest(cone)
        tracking = state.status is Status.TRACKING
        x = state.x if tracking else [nan] * 3
        om = state.omega if tracking else np.full((3, 3), nan)
        rows.append(
            {
                "t_s": cone.timestamp,
                "x": x[0],
                "y": x[1],
                "z": x[2],
                "cov_xx": om[0][0],
                "cov_xy": om[0][1],
                "cov_xz": om[0][2],
                "cov_yy": om[1][1],
                "cov_yz": om[1][2],
                "cov_zz": om[2][2],
                "status": state.status.value,
                "action": action.value,
            }
        )
    rio.write_estimates_csv(out / "estimates.csv", rows)

    tracking = session.state.status is Status.TRACKING
    summary = {
        "cones": len(cones),
        "init_time_s": session.init_time,
        "initialized": session.init_time is not None,
        "status": session.state.status.value,
        "final_estimate": session.state.x if tracking else None,
        "final_covariance": session.state.omega if tracking else None,
        "accepted": session.accepted,
        "rejected": session.rejected,
        "resets": session.resets,
        "degenerate_solves": session.degenerate_solves,
        "degenerate": session.last_solution.degenerate if session.last_solution else None,
    }
    rio.write_json(out / "summary.json", summary)
    if tracking:
        x = session.state.x
        print(f"status=tracking estimate=({x[0]:.3f}, {x[1]:.3f}, {x[2]:.3f}) m")
    else:
        print(f"status=collecting (uninitialized after {len(cones)} cones)")
    print(
        f"init_time={session.init_time} accepted={session.accepted} "
        f"rejected={session.rejected} resets={session.resets}"
    )
    return 0


def cmd_simulate(args: argparse.Namespace) -> int:
    out = Path(args.out)
    scenario = rio.load_scenario(args.scenario)
    if args.seed is not None:
        scenario = dataclasses.replace(scenario, seed=args.seed)
    report = run_scenario(scenario)
    rio.write_steps_csv(out / "steps.csv", report)
    summary = sim_metrics(report)
    rio.write_json(out / "summary.json", summary)
    print(
        f"seed={report.seed} cones={summary['cones_total']} "
        f"init_time={summary['time_to_init_s']} resets={summary['resets']} "
        f"degenerate_solves={summary['degenerate_solves']}"
    )
    if summary["post_lock_mean_error_m"] is not None:
        print(
            f"post-lock mean error {summary['post_lock_mean_error_m']:.3f} m "
            f"(max {summary['post_lock_max_error_m']:.3f} m)"
        )
    elif summary["degenerate_only"]:
        print("initialization degenerate: geometry constrains direction only")
    return 0


def cmd_metrics(args: argparse.Namespace) -> int:
    out = Path(args.out)
    rows = rio.read_estimates_csv(args.estimates)
    t_truth, truth = rio.read_truth_csv(args.truth)

    samples = []
    for row in rows:
        if not np.isfinite(row["x"]):
            continue
        t = row["t_s"]
        if t < t_truth[0] or t > t_truth[-1]:
            continue
        ref = np.array([np.interp(t, t_truth, truth[:, k]) for k in range(3)])
        est = np.array([row["x"], row["y"], row["z"]])
        samples.append((t, est - ref))
    if not samples:
        raise MalformedInputError(
            "no tracked estimates overlap the truth time range; nothing to compare"
        )

    lines = ["t_s,ex,ey,ez,err_m,err_xy_m"]
    errs = []
    errs_xy = []
    for t, e in samples:
        err = float(np.linalg.norm(e))
        err_xy = float(np.linalg.norm(e[:2]))
        errs.append(err)
        errs_xy.append(err_xy)
        cells = [t, e[0], e[1], e[2], err, err_xy]
        lines.append(",".join(format(v, ".12g") for v in cells))
    rio.atomic_write(out / "error_series.csv", "\n".join(lines) + "\n")

    errs_arr = np.array(errs)
    abs_axes = np.abs(np.array([e for _, e in samples]))
    below = np.nonzero(errs_arr <= args.threshold)[0]
    summary = {
        "samples": len(samples),
        "mean_error_m": float(errs_arr.mean()),
        "max_error_m": float(errs_arr.max()),
        "mean_planar_error_m": float(np.mean(errs_xy)),
        "max_planar_error_m": float(np.max(errs_xy)),
        "mean_abs_x_m": float(abs_axes[:, 0].mean()),
        "mean_abs_y_m": float(abs_axes[:, 1].mean()),
        "mean_abs_z_m": float(abs_axes[:, 2].mean()),
        "convergence_threshold_m": args.threshold,
        "convergence_time_s": float(samples[below[0]][0]) if below.size else None,
    }
    rio.write_json(out / "summary.json", summary)
    print(
        f"samples={summary['samples']} mean_error={summary['mean_error_m']:.3f} m "
        f"max_error={summary['max_error_m']:.3f} m "
        f"convergence_time={summary['convergence_time_s']}"
    )
    return 0


_DISPATCH = {
    "reconstruct": cmd_reconstruct,
    "estimate": cmd_estimate,
    "simulate": cmd_simulate,
    "metrics": cmd_metrics,
}


def main(argv: list[str] | None = None) -> int:
    _setup_logging()
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        return _DISPATCH[args.command](args)
    except ParseError as exc:
        print(f"parse error: {exc}", file=sys.stderr)
        return 2
    except SchemaError as exc:
        print(f"schema error: {exc}", file=sys.stderr)
        return 3
    except OrderingError as exc:
        print(f"ordering error: {exc}", file=sys.stderr)
        return 4
    except RadlocError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
