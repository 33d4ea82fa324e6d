"""``dynband`` command line.

Exit codes: 0 success, 1 usage error, 2 data error. Diagnostics go to stderr;
data goes to files or stdout.
"""

from __future__ import annotations

import argparse
import json
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from ._io import atomic_write
from .dyn_filter import (DEFAULT_ALPHA, DEFAULT_MODE_WINDOW, DEFAULT_RUN_FRACTION, DepthBandParams,
                         classify_keypoints, detect_corners, read_keypoints_csv, removal_mask,
                         write_keypoints_csv)
from .errors import DynbandError
from .geom import PinholeIntrinsics
from .masks import (DEFAULT_DILATION, DEFAULT_MIN_SCORE, DynamicClassPolicy, load_instance_masks,
                    select_dynamic)
from .metrics import DEFAULT_DELTA, DEFAULT_MAX_DIFF, ate, per_pair_csv, rpe
from .plot import emit_plot, rpe_svg, trajectory_svg
from .synth import ObjectMotion, SceneConfig, export_tum, generate_sequence, load_exported
from .tum import associate, decode_png_gray, load_depth, parse_stamped_lines, parse_trajectory
from .vo import RansacConfig, run_odometry


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def _dump_json(doc):
    return json.dumps(doc, indent=2, sort_keys=True) + "\n"


def _emit(text, path):
    if path and path != "-":
        atomic_write(path, text)
    else:
        sys.stdout.write(text)


def _seed_list(spec):
    """``"0..9"`` (inclusive range) or ``"0,3,5"``."""
    out = []
    for part in str(spec).split(","):
        part = part.strip()
        if ".." in part:
            a, b = part.split("..", 1)
            out.extend(range(int(a), int(b) + 1))
        elif part:
            out.append(int(part))
    if not out:
        raise UsageError("empty seed list")
    return out


# --- shared option groups -------------------------------------------------------

def _add_filter_opts(p):
    g = p.add_argument_group("filter")
    g.add_argument("--alpha", type=float, default=DEFAULT_ALPHA, help="depth-band margin ratio")
    g.add_argument("--dilate", type=int, default=DEFAULT_DILATION, help="mask dilation radius (px)")
    g.add_argument("--mode-window", type=float, default=DEFAULT_MODE_WINDOW,
                   help="histogram bin width for the dominant object depth (m)")
    g.add_argument("--run-fraction", type=float, default=DEFAULT_RUN_FRACTION)
    g.add_argument("--min-valid-pixels", type=int, default=5)
    g.add_argument("--dynamic-classes", default="person", help="comma-separated class labels")
    g.add_argument("--min-score", type=float, default=DEFAULT_MIN_SCORE)


def _add_camera_opts(p):
    g = p.add_argument_group("camera")
    k = PinholeIntrinsics.tum_default()
    g.add_argument("--fx", type=float, default=k.fx)
    g.add_argument("--fy", type=float, default=k.fy)
    g.add_argument("--cx", type=float, default=k.cx)
    g.add_argument("--cy", type=float, default=k.cy)
    g.add_argument("--depth-scale", type=float, default=k.depth_scale)


def _add_scene_opts(p):
    g = p.add_argument_group("synthetic scene")
    g.add_argument("--frames", type=int, default=120)
    g.add_argument("--frame-rate", type=float, default=30.0)
    g.add_argument("--n-static", type=int, default=300)
    g.add_argument("--n-dynamic", type=int, default=120, help="landmarks per moving object")
    g.add_argument("--objects", type=int, default=1)
    g.add_argument("--speed", type=float, default=0.5, help="object linear speed (m/s)")
    g.add_argument("--turn-rate", type=float, default=1.0, help="object yaw rate (rad/s)")
    g.add_argument("--camera-path", choices=["static", "line", "orbit"], default="line")
    g.add_argument("--camera-magnitude", type=float, default=0.2)
    g.add_argument("--noise", type=float, default=0.005, help="depth noise sigma (m)")
    g.add_argument("--width", type=int, default=640)
    g.add_argument("--height", type=int, default=480)
    g.add_argument("--mask-radius", type=int, default=2)


def _add_ransac_opts(p):
    g = p.add_argument_group("ransac")
    g.add_argument("--iterations", type=int, default=200)
    g.add_argument("--inlier-threshold", type=float, default=0.05)
    g.add_argument("--min-inliers", type=int, default=8)


def _intrinsics(a):
    return PinholeIntrinsics(a.fx, a.fy, a.cx, a.cy, a.depth_scale)


def _band_params(a):
    return DepthBandParams(a.alpha, a.mode_window, a.min_valid_pixels, a.run_fraction)


def _policy(a):
    classes = frozenset(c.strip() for c in a.dynamic_classes.split(",") if c.strip())
    return DynamicClassPolicy(classes, a.min_score)


def _scene(a, seed):
    motions = tuple(
        ObjectMotion(linear=(a.speed, 0.0, 0.0), angular=(0.0, a.turn_rate, 0.0),
                     start=(-0.8 * (a.objects - 1) / 2 + 0.8 * i, 0.0, 3.0))
        for i in range(a.objects))
    return SceneConfig(seed=seed, n_static=a.n_static, n_dynamic_per_object=a.n_dynamic,
                       object_motions=motions, camera_path=a.camera_path,
                       camera_magnitude=a.camera_magnitude, n_frames=a.frames,
                       frame_rate=a.frame_rate, intrinsics=_intrinsics(a), width=a.width,
                       height=a.height, depth_noise=a.noise, mask_radius=a.mask_radius,
                       splat_radius=a.mask_radius)


_NOT_ECHOED = {"command", "func", "config", "out", "csv", "plot", "timing", "traj_out",
               "static_out", "removal_mask"}


def _config_echo(a):
    return {k: v for k, v in sorted(vars(a).items()) if k not in _NOT_ECHOED}


# --- commands ---------------------------------------------------------------------

def cmd_associate(a):
    first = parse_stamped_lines(Path(a.first).read_text())
    second = parse_stamped_lines(Path(a.second).read_text())
    pairs = associate([t for t, _ in first], [t for t, _ in second], a.max_diff, a.offset)
    lines = [f"{first[i][0]:.6f} {first[i][1]} {second[j][0]:.6f} {second[j][1]}".replace("  ", " ")
             for i, j in pairs]
    _emit("".join(line.rstrip() + "\n" for line in lines), a.out)
    return 0


def _load_filter_inputs(a):
    if a.sequence:
        seq = Path(a.sequence)
        frames, _, k = load_exported(seq)
        if not 0 <= a.frame < len(frames):
            raise UsageError(f"--frame must be in [0, {len(frames) - 1}]")
        f = frames[a.frame]
        return f.keypoints, list(f.gt_masks), f.depth, k
    if not (a.depth and a.labels):
        raise UsageError("give --sequence, or --depth together with --labels")
    k = _intrinsics(a)
    depth = load_depth(Path(a.depth).read_bytes(), k)
    sidecar = Path(a.sidecar) if a.sidecar else Path(a.labels).with_suffix(".json")
    masks = load_instance_masks(Path(a.labels).read_bytes(), sidecar.read_text())
    if a.keypoints:
        kps = read_keypoints_csv(Path(a.keypoints).read_text())
    elif a.gray:
        kps = detect_corners(decode_png_gray(Path(a.gray).read_bytes(), allow_8bit=True),
                             a.max_corners, a.cell)
    else:
        raise UsageError("give --keypoints or --gray")
    return kps, masks, depth, k


def cmd_filter(a):
    t0 = time.perf_counter()
    kps, masks, depth, _ = _load_filter_inputs(a)
    params, policy = _band_params(a), _policy(a)
    dyn = select_dynamic(masks, policy)
    cls = classify_keypoints(kps, dyn, depth, params, a.dilate)
    report = {
        "config": _config_echo(a),
        "counts": {"input": len(kps), **cls.counts()},
        "instances": {"total": len(masks), "dynamic": len(dyn)},
        "bands": {str(i): b.to_dict() for i, b in sorted(cls.band_per_instance.items())},
    }
    if a.static_out:
        atomic_write(a.static_out, write_keypoints_csv(cls.static_kps))
    if a.removal_mask:
        from .tum import encode_png_gray

        rm = removal_mask(dyn, depth, params, a.dilate)
        atomic_write(a.removal_mask, encode_png_gray(rm.astype(np.uint8) * 255))
    if a.timing:
        report["wall_clock_s"] = time.perf_counter() - t0
    _emit(_dump_json(report), a.out)
    return 0


def cmd_synth(a):
    cfg = _scene(a, a.seed)
    frames, _ = generate_sequence(cfg)
    export_tum(frames, a.out, cfg.intrinsics, cfg.width, cfg.height)
    atomic_write(Path(a.out) / "scene.json", _dump_json({"config": _config_echo(a),
                                                          "scene": cfg.to_dict()}))
    print(f"wrote {len(frames)} frames to {a.out}", file=sys.stderr)
    return 0


def _odometry_run(frames, gt, k, a, seed, use_filter):
    ransac = RansacConfig(a.iterations, a.inlier_threshold, a.min_inliers, seed)
    res = run_odometry(frames, k, use_filter, _band_params(a), a.dilate, _policy(a), ransac)
    out = {
        "use_filter": use_filter,
        "dropped_frames": res.dropped_frames,
        "tracked_fraction": res.tracked_fraction,
        "ate": ate(res.trajectory, gt, a.max_diff).to_dict(),
        "rpe": rpe(res.trajectory, gt, a.delta, a.max_diff).to_dict(),
    }
    if use_filter:
        out["frame_counts"] = [[c["static"], c["rejected_mask"], c["rejected_depth"]]
                               for c in res.frame_counts]
    return out, res


def cmd_odometry(a):
    t0 = time.perf_counter()
    seeds = _seed_list(a.seeds)
    modes = [True, False] if a.compare_filter else [not a.no_filter]
    runs = []
    first_traj = None
    for seed in seeds:
        if a.sequence:
            frames, gt, k = load_exported(a.sequence)
        else:
            cfg = _scene(a, seed)
            frames, gt = generate_sequence(cfg)
            k = cfg.intrinsics
        entry = {"seed": seed}
        for use_filter in modes:
            out, res = _odometry_run(frames, gt, k, a, seed, use_filter)
            entry["filtered" if use_filter else "unfiltered"] = out
            if first_traj is None:
                first_traj = res.trajectory
        if a.compare_filter:
            f, u = entry["filtered"]["ate"]["rmse"], entry["unfiltered"]["ate"]["rmse"]
            entry["ate_ratio"] = f / u if u > 0 else None
            entry["filtered_better"] = f < u
        runs.append(entry)
    report = {"config": _config_echo(a), "runs": runs}
    if a.compare_filter:
        ratios = [r["ate_ratio"] for r in runs if r["ate_ratio"] is not None]
        report["summary"] = {
            "all_filtered_better": all(r["filtered_better"] for r in runs),
            "median_ate_ratio": float(np.median(ratios)) if ratios else None,
        }
    if a.traj_out and first_traj is not None:
        from .tum import serialize_trajectory

        atomic_write(a.traj_out, serialize_trajectory(first_traj, "estimated (camera to world)"))
    if a.timing:
        report["wall_clock_s"] = time.perf_counter() - t0
    _emit(_dump_json(report), a.out)
    return 0


def _load_pair(a):
    return parse_trajectory(Path(a.est).read_text()), parse_trajectory(Path(a.gt).read_text())


def cmd_ate(a):
    est, gt = _load_pair(a)
    rep = ate(est, gt, a.max_diff)
    if a.csv:
        atomic_write(a.csv, per_pair_csv(rep))
    if a.plot:
        emit_plot(trajectory_svg(rep.matched_gt[:, :2], rep.aligned_est[:, :2]), a.plot)
    _emit(_dump_json(rep.to_dict()), a.out)
    return 0


def cmd_rpe(a):
    est, gt = _load_pair(a)
    rep = rpe(est, gt, a.delta, a.max_diff)
    if a.csv:
        atomic_write(a.csv, per_pair_csv(rep))
    if a.plot:
        emit_plot(rpe_svg(*zip(*rep.per_pair)), a.plot)
    _emit(_dump_json(rep.to_dict()), a.out)
    return 0


def cmd_plot(a):
    est, gt = _load_pair(a)
    if a.kind == "traj":
        rep = ate(est, gt, a.max_diff)
        svg = trajectory_svg(rep.matched_gt[:, :2], rep.aligned_est[:, :2])
    else:
        rep = rpe(est, gt, a.delta, a.max_diff)
        svg = rpe_svg(*zip(*rep.per_pair))
    emit_plot(svg, a.out)
    return 0


def build_parser():
    parser = _Parser(prog="dynband",
                     description="Dynamic keypoint filtering, synthetic RGB-D odometry and trajectory metrics.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", parser_class=_Parser, required=True)

    p = sub.add_parser("associate", help="pair two timestamped files")
    p.add_argument("--first", required=True)
    p.add_argument("--second", required=True)
    p.add_argument("--max-diff", type=float, default=DEFAULT_MAX_DIFF)
    p.add_argument("--offset", type=float, default=0.0)
    p.add_argument("--out")
    p.set_defaults(func=cmd_associate)

    p = sub.add_parser("filter", help="classify one frame's keypoints")
    p.add_argument("--sequence", help="directory written by 'synth'")
    p.add_argument("--frame", type=int, default=0)
    p.add_argument("--depth", help="16-bit depth PNG")
    p.add_argument("--labels", help="instance label PNG")
    p.add_argument("--sidecar", help="sidecar JSON (default: labels path with .json)")
    p.add_argument("--keypoints", help="keypoint CSV with a u,v,response header")
    p.add_argument("--gray", help="grayscale PNG to detect corners on")
    p.add_argument("--max-corners", type=int, default=500)
    p.add_argument("--cell", type=int, default=8)
    p.add_argument("--static-out", help="write surviving keypoints as CSV")
    p.add_argument("--removal-mask", help="write the per-pixel removal mask as PNG")
    p.add_argument("--out")
    p.add_argument("--timing", action="store_true", help="add wall-clock time to the report")
    _add_filter_opts(p)
    _add_camera_opts(p)
    p.set_defaults(func=cmd_filter)

    p = sub.add_parser("synth", help="generate and export a synthetic sequence")
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=0)
    _add_scene_opts(p)
    _add_camera_opts(p)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("odometry", help="run the odometry harness and evaluate it")
    p.add_argument("--seeds", default="0", help="e.g. 0..9 or 0,2,5")
    p.add_argument("--sequence", help="evaluate an exported sequence instead of generating")
    mode = p.add_mutually_exclusive_group()
    mode.add_argument("--compare-filter", action="store_true")
    mode.add_argument("--no-filter", action="store_true")
    p.add_argument("--max-diff", type=float, default=DEFAULT_MAX_DIFF)
    p.add_argument("--delta", type=int, default=DEFAULT_DELTA)
    p.add_argument("--traj-out", help="write the first estimated trajectory (TUM format)")
    p.add_argument("--config", help="reuse the 'config' echo of an earlier report")
    p.add_argument("--out")
    p.add_argument("--timing", action="store_true")
    _add_scene_opts(p)
    _add_camera_opts(p)
    _add_filter_opts(p)
    _add_ransac_opts(p)
    p.set_defaults(func=cmd_odometry)

    for name, fn, helptext in (("ate", cmd_ate, "absolute trajectory error"),
                               ("rpe", cmd_rpe, "relative pose error")):
        p = sub.add_parser(name, help=helptext)
        p.add_argument("--est", required=True)
        p.add_argument("--gt", required=True)
        p.add_argument("--max-diff", type=float, default=DEFAULT_MAX_DIFF)
        if name == "rpe":
            p.add_argument("--delta", type=int, default=DEFAULT_DELTA)
        p.add_argument("--csv", help="per-pair errors (timestamp,error_m)")
        p.add_argument("--plot", help="SVG output")
        p.add_argument("--out")
        p.set_defaults(func=fn)

    p = sub.add_parser("plot", help="SVG plot of a trajectory pair")
    p.add_argument("--est", required=True)
    p.add_argument("--gt", required=True)
    p.add_argument("--kind", choices=["traj", "rpe"], default="traj")
    p.add_argument("--max-diff", type=float, default=DEFAULT_MAX_DIFF)
    p.add_argument("--delta", type=int, default=DEFAULT_DELTA)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_plot)
    return parser, sub


def _apply_config(parser, sub, argv):
    """Re-parse with defaults taken from an earlier report's config echo."""
    args = parser.parse_args(argv)
    if not getattr(args, "config", None):
        return args
    doc = json.loads(Path(args.config).read_text())
    echo = doc.get("config", doc)
    subparser = sub.choices[args.command]
    known = {a.dest for a in subparser._actions}
    subparser.set_defaults(**{k: v for k, v in echo.items() if k in known and k not in _NOT_ECHOED})
    return parser.parse_args(argv)


def main(argv=None):
    parser, sub = build_parser()
    argv = sys.argv[1:] if argv is None else list(argv)
    try:
        args = _apply_config(parser, sub, argv)
        return args.func(args)
    except SystemExit as exc:  # argparse: --help, --version and usage errors
        return exc.code if isinstance(exc.code, int) else 1
    except UsageError as exc:
        print(f"dynband: error: {exc}", file=sys.stderr)
        return 1
    except (DynbandError, OSError, ValueError) as exc:
        print(f"dynband: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
