"""Trajectory error metrics in the TUM RGB-D style: ATE, RPE and summary statistics."""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import EmptyInput, InvalidParams, TooFewMatches
from .geom import Pose, pose_compose, pose_inverse, rotation_angle, umeyama_align
from .tum import associate

DEFAULT_MAX_DIFF = 0.02
DEFAULT_DELTA = 1


@dataclass(frozen=True)
class ErrorStats:
    rmse: float
    mean: float
    median: float
    sd: float
    n: int

    def to_dict(self):
        return {"rmse": self.rmse, "mean": self.mean, "median": self.median,
                "sd": self.sd, "sd_divisor": "n", "n": self.n}


def compute_stats(errors):
    """RMSE, mean, median and population standard deviation of non-negative errors."""
    e = np.asarray(errors, dtype=float).reshape(-1)
    if e.size == 0:
        raise EmptyInput("no error samples")
    if np.any(~(e >= 0)):
        raise InvalidParams("errors must be non-negative")
    mean = float(e.mean())
    return ErrorStats(
        rmse=math.sqrt(float(np.mean(e * e))),
        mean=mean,
        median=float(np.median(e)),
        sd=float(np.sqrt(np.mean((e - mean) ** 2))),
        n=int(e.size),
    )


@dataclass
class AteReport:
    stats: ErrorStats
    traj_fraction: float
    alignment: Pose
    per_pair: list  # (gt timestamp, error m)
    max_diff: float = DEFAULT_MAX_DIFF
    aligned_est: np.ndarray = field(default=None, repr=False)
    matched_gt: np.ndarray = field(default=None, repr=False)

    def to_dict(self):
        return {**self.stats.to_dict(), "traj_fraction": self.traj_fraction,
                "max_diff": self.max_diff,
                "alignment": {"trans": self.alignment.trans.tolist(),
                              "quat": self.alignment.quat.tolist()}}


@dataclass
class RpeReport:
    stats: ErrorStats
    rot_stats: ErrorStats
    delta: int
    per_pair: list  # (gt timestamp at start of interval, translational error m)
    max_diff: float = DEFAULT_MAX_DIFF

    def to_dict(self):
        return {**self.stats.to_dict(), "delta": self.delta, "max_diff": self.max_diff,
                "rotation_rad": self.rot_stats.to_dict()}


def _matched(est, gt, max_diff):
    pairs = associate(est.timestamps, gt.timestamps, max_diff)
    return [(est[i], gt[j]) for i, j in pairs]


def ate(est, gt, max_diff=DEFAULT_MAX_DIFF):
    """Absolute trajectory error after rigid alignment of ``est`` positions onto ``gt``."""
    if len(est) == 0 or len(gt) == 0:
        raise TooFewMatches("empty trajectory")
    matched = _matched(est, gt, max_diff)
    if len(matched) < 3:
        raise TooFewMatches(f"{len(matched)} matched poses, need 3")
    est_xyz = np.array([e[1].trans for e, _ in matched])
    gt_xyz = np.array([g[1].trans for _, g in matched])
    align = umeyama_align(est_xyz, gt_xyz, allow_degenerate=True)
    aligned = align @ est_xyz
    err = np.linalg.norm(gt_xyz - aligned, axis=1)
    per_pair = [(g[0], float(x)) for (_, g), x in zip(matched, err)]
    return AteReport(compute_stats(err), len(matched) / len(gt), align, per_pair, max_diff,
                     aligned, gt_xyz)


def relative_error(p_i, p_j, q_i, q_j):
    """``(Q_i^-1 Q_j)^-1 (P_i^-1 P_j)``: estimated motion against true motion."""
    est_rel = pose_compose(pose_inverse(p_i), p_j)
    gt_rel = pose_compose(pose_inverse(q_i), q_j)
    if est_rel == gt_rel:
        return Pose.identity()
    return pose_compose(pose_inverse(gt_rel), est_rel)


def rpe(est, gt, delta=DEFAULT_DELTA, max_diff=DEFAULT_MAX_DIFF):
    """Relative pose error over ``delta``-frame steps of the matched pose sequence."""
    if delta < 1:
        raise InvalidParams("delta must be >= 1")
    matched = _matched(est, gt, max_diff) if len(est) and len(gt) else []
    if len(matched) <= delta:
        raise TooFewMatches(f"{len(matched)} matched poses, need more than delta={delta}")
    trans, rot, per_pair = [], [], []
    for i in range(len(matched) - delta):
        (_, p_i), (tq, q_i) = matched[i]
        (_, p_j), (_, q_j) = matched[i + delta]
        E = relative_error(p_i, p_j, q_i, q_j)
        te = float(np.linalg.norm(E.trans))
        trans.append(te)
        rot.append(rotation_angle(E.rotation))
        per_pair.append((tq, te))
    return RpeReport(compute_stats(trans), compute_stats(rot), delta, per_pair, max_diff)


def report_json(report):
    return json.dumps(report.to_dict(), indent=2, sort_keys=True) + "\n"


def per_pair_csv(report):
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["timestamp", "error_m"])
    for t, e in report.per_pair:
        writer.writerow([f"{t:.6f}", repr(float(e))])
    return buf.getvalue()
