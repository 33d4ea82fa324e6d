"""Frame-to-frame RGB-D odometry from 3D-3D correspondences (RANSAC + Umeyama)."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from ._io import parallel_map
from .dyn_filter import STATIC, DepthBandParams, classify_keypoints
from .errors import (DegenerateConfiguration, EmptySequence, InvalidParams, NoConsensus,
                     TooFewCorrespondences)
from .geom import Pose, backproject_many, pose_compose, rigid_fit_batch, umeyama_align
from .masks import DEFAULT_DILATION, DynamicClassPolicy, select_dynamic
from .tum import Trajectory


@dataclass(frozen=True)
class RansacConfig:
    iterations: int = 200
    inlier_threshold: float = 0.05
    min_inliers: int = 8
    seed: int = 0

    def __post_init__(self):
        if self.iterations < 1:
            raise InvalidParams("iterations must be >= 1")
        if not self.inlier_threshold > 0:
            raise InvalidParams("inlier_threshold must be > 0")
        if self.min_inliers < 3:
            raise InvalidParams("min_inliers must be >= 3")

    def to_dict(self):
        return {"iterations": self.iterations, "inlier_threshold": self.inlier_threshold,
                "min_inliers": self.min_inliers, "seed": self.seed}


def estimate_relative_pose(prev, curr, cfg=RansacConfig(), seed=None):
    """Find ``T`` with ``prev_i ≈ T curr_i`` robustly.

    Hypotheses are rigid fits to random 3-point samples; the one with the most
    points within ``inlier_threshold`` wins and is refit on its inliers.
    ``seed`` overrides ``cfg.seed``. Returns ``(pose, inlier_indices)``.

    Raises:
        TooFewCorrespondences: fewer than 3 pairs.
        NoConsensus: best hypothesis has fewer than ``min_inliers`` inliers.
    """
    prev = np.ascontiguousarray(prev, dtype=float).reshape(-1, 3)
    curr = np.ascontiguousarray(curr, dtype=float).reshape(-1, 3)
    if prev.shape != curr.shape:
        raise InvalidParams("prev and curr must have equal length")
    n = prev.shape[0]
    if n < 3:
        raise TooFewCorrespondences(f"need at least 3 correspondences, got {n}")

    rng = np.random.default_rng(cfg.seed if seed is None else seed)
    keys = rng.random((cfg.iterations, n))
    idx = np.argpartition(keys, 2, axis=1)[:, :3] if n > 3 else np.tile(np.arange(3), (cfg.iterations, 1))
    R, t, ok = rigid_fit_batch(curr[idx], prev[idx])

    thr2 = cfg.inlier_threshold ** 2
    score = _kernels.count_inliers(np.ascontiguousarray(R), np.ascontiguousarray(t), prev, curr, thr2)
    score = np.where(ok, score, -1)
    best = int(np.argmax(score))
    if score[best] < cfg.min_inliers:
        raise NoConsensus(f"best consensus {max(int(score[best]), 0)} < {cfg.min_inliers}")
    inliers = np.flatnonzero(_kernels.inlier_mask(R[best], t[best], prev, curr, thr2)[0])
    try:
        pose = umeyama_align(curr[inliers], prev[inliers])
    except DegenerateConfiguration as exc:
        raise NoConsensus(f"consensus set is degenerate: {exc}") from None
    return pose, inliers


@dataclass
class OdometryResult:
    trajectory: Trajectory
    dropped_frames: int
    frame_counts: list = field(default_factory=list)

    @property
    def tracked_fraction(self):
        pairs = max(len(self.trajectory) - 1, 0)
        return 1.0 if pairs == 0 else (pairs - self.dropped_frames) / pairs


def _static_observations(frame, use_filter, policy, params, dilation_radius):
    obs = frame.observations
    if not use_filter:
        return obs, None
    dyn = select_dynamic(frame.gt_masks, policy)
    cls = classify_keypoints([o.keypoint for o in obs], dyn, frame.depth, params, dilation_radius)
    kept = tuple(o for o, lab in zip(obs, cls.labels) if lab == STATIC)
    return kept, cls.counts()


def _pair_estimate(prev_frame, curr_obs, k, cfg, pair_index):
    prev_by_id = {o.landmark_id: o for o in prev_frame.observations}
    matched = [(prev_by_id[o.landmark_id], o) for o in curr_obs if o.landmark_id in prev_by_id]
    if len(matched) < 3:
        raise TooFewCorrespondences(f"{len(matched)} matches")
    p_uv = [(a.keypoint.u, a.keypoint.v) for a, _ in matched]
    c_uv = [(b.keypoint.u, b.keypoint.v) for _, b in matched]
    prev_pts = backproject_many(p_uv, [a.depth for a, _ in matched], k)
    curr_pts = backproject_many(c_uv, [b.depth for _, b in matched], k)
    pose, _ = estimate_relative_pose(prev_pts, curr_pts, cfg, seed=[cfg.seed, pair_index])
    return pose


def run_odometry(frames, intrinsics, use_filter=True, params=DepthBandParams(),
                 dilation_radius=DEFAULT_DILATION, policy=DynamicClassPolicy(),
                 cfg=RansacConfig()):
    """Chain frame-to-frame estimates into a camera-to-world trajectory.

    With ``use_filter`` the current frame's keypoints are classified against its
    dynamic masks and only static ones are matched. Pairs whose estimate fails
    reuse the previous relative motion and count as dropped.
    """
    frames = list(frames)
    if not frames:
        raise EmptySequence("no frames")

    def work(i):
        kept, counts = _static_observations(frames[i], use_filter, policy, params, dilation_radius)
        try:
            return _pair_estimate(frames[i - 1], kept, intrinsics, cfg, i), counts
        except (TooFewCorrespondences, NoConsensus):
            return None, counts

    results = parallel_map(work, range(1, len(frames)))

    pose = Pose.identity()
    last_rel = Pose.identity()
    entries = [(frames[0].timestamp, pose)]
    dropped = 0
    counts = []
    for frame, (rel, c) in zip(frames[1:], results):
        if rel is None:
            dropped += 1
            rel = last_rel
        last_rel = rel
        pose = pose_compose(pose, rel)
        entries.append((frame.timestamp, pose))
        counts.append(c)
    return OdometryResult(Trajectory(tuple(entries)), dropped, counts)
