"""Deterministic synthetic RGB-D sequences with rigidly moving objects.

The world is a point cloud: static landmarks plus one landmark cluster per
moving object. Each frame records exact pixel projections, (optionally noisy)
depths, a splatted depth image and ground-truth instance masks.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ._io import atomic_write, parallel_map
from .dyn_filter import Keypoint, read_keypoints_csv, write_keypoints_csv
from .errors import InvalidConfig
from .geom import PinholeIntrinsics, Pose, backproject_many, pose_compose, project_many
from .masks import InstanceMask, encode_label_image, encode_sidecar, load_instance_masks
from .tum import (DepthFrame, TimedPath, Trajectory, associate, encode_depth, load_depth,
                  parse_image_index, parse_trajectory, serialize_image_index,
                  serialize_trajectory)

CAMERA_PATHS = ("static", "line", "orbit")
NEAR_PLANE = 0.1
MIN_DEPTH = 0.05


@dataclass(frozen=True)
class ObjectMotion:
    """Constant body-frame twist of a rigid object.

    ``linear`` (m/s) and ``angular`` (rad/s) are expressed in the object frame,
    so a non-zero angular rate bends the path into a circle.
    """

    linear: tuple = (0.5, 0.0, 0.0)
    angular: tuple = (0.0, 1.0, 0.0)
    start: tuple = (0.0, 0.0, 3.0)
    half_extents: tuple = (0.25, 0.8, 0.15)
    class_label: str = "person"

    def to_dict(self):
        return {"linear": list(self.linear), "angular": list(self.angular),
                "start": list(self.start), "half_extents": list(self.half_extents),
                "class_label": self.class_label}


@dataclass(frozen=True)
class SceneConfig:
    seed: int = 0
    n_static: int = 300
    n_dynamic_per_object: int = 120
    object_motions: tuple = (ObjectMotion(),)
    camera_path: str = "line"
    camera_magnitude: float = 0.2  # m/s for "line", rad/s for "orbit"
    n_frames: int = 120
    frame_rate: float = 30.0
    intrinsics: PinholeIntrinsics = field(default_factory=PinholeIntrinsics.tum_default)
    width: int = 640
    height: int = 480
    depth_noise: float = 0.005
    static_depth_range: tuple = (1.5, 5.0)
    mask_radius: int = 2
    splat_radius: int = 2
    start_time: float = 0.0

    def validate(self):
        if self.n_static < 0 or self.n_dynamic_per_object < 0 or self.n_frames < 0:
            raise InvalidConfig("counts must be non-negative")
        if not self.frame_rate > 0:
            raise InvalidConfig("frame_rate must be positive")
        if not self.depth_noise >= 0:
            raise InvalidConfig("depth noise sigma must be non-negative")
        if self.camera_path not in CAMERA_PATHS:
            raise InvalidConfig(f"camera_path must be one of {CAMERA_PATHS}")
        if self.width < 1 or self.height < 1:
            raise InvalidConfig("image size must be positive")
        z0, z1 = self.static_depth_range
        if not 0 < z0 <= z1:
            raise InvalidConfig("static_depth_range must satisfy 0 < near <= far")
        if self.mask_radius < 0 or self.splat_radius < 0:
            raise InvalidConfig("radii must be non-negative")

    def to_dict(self):
        return {
            "seed": self.seed, "n_static": self.n_static,
            "n_dynamic_per_object": self.n_dynamic_per_object,
            "object_motions": [m.to_dict() for m in self.object_motions],
            "camera_path": self.camera_path, "camera_magnitude": self.camera_magnitude,
            "n_frames": self.n_frames, "frame_rate": self.frame_rate,
            "intrinsics": self.intrinsics.to_dict(), "width": self.width, "height": self.height,
            "depth_noise": self.depth_noise, "static_depth_range": list(self.static_depth_range),
            "mask_radius": self.mask_radius, "splat_radius": self.splat_radius,
            "start_time": self.start_time,
        }


@dataclass(frozen=True)
class Observation:
    keypoint: Keypoint
    depth: float
    landmark_id: int
    instance_label: int  # 0 = static, otherwise 1-based object index


@dataclass(frozen=True, eq=False)
class SyntheticFrame:
    index: int
    timestamp: float
    observations: tuple
    gt_pose: Pose  # camera-to-world
    gt_masks: tuple
    depth: DepthFrame

    @property
    def keypoints(self):
        return [o.keypoint for o in self.observations]


def _skew(w):
    return np.array([[0.0, -w[2], w[1]], [w[2], 0.0, -w[0]], [-w[1], w[0], 0.0]])


def se3_exp(linear, angular):
    """Closed-form exponential of the twist ``(linear, angular)``."""
    v = np.asarray(linear, dtype=float)
    w = np.asarray(angular, dtype=float)
    theta = float(np.linalg.norm(w))
    K = _skew(w)
    K2 = K @ K
    if theta < 1e-8:
        R = np.eye(3) + K + 0.5 * K2
        V = np.eye(3) + 0.5 * K + K2 / 6.0
    else:
        R = np.eye(3) + math.sin(theta) / theta * K + (1 - math.cos(theta)) / theta ** 2 * K2
        V = (np.eye(3) + (1 - math.cos(theta)) / theta ** 2 * K
             + (theta - math.sin(theta)) / theta ** 3 * K2)
    return Pose.from_rt(R, V @ v)


def camera_pose(cfg, t):
    """Camera-to-world pose at time ``t`` seconds after the first frame."""
    if cfg.camera_path == "static":
        return Pose.identity()
    if cfg.camera_path == "line":
        return Pose(trans=(cfg.camera_magnitude * t, 0.0, 0.0))
    # orbit about a vertical axis through the middle of the static depth range
    pivot = 0.5 * (cfg.static_depth_range[0] + cfg.static_depth_range[1])
    th = cfg.camera_magnitude * t
    R = np.array([[math.cos(th), 0.0, math.sin(th)], [0.0, 1.0, 0.0],
                  [-math.sin(th), 0.0, math.cos(th)]])
    center = np.array([0.0, 0.0, pivot])
    return Pose.from_rt(R, center - R @ center)


def _landmarks(cfg):
    rng = np.random.default_rng(np.random.SeedSequence([cfg.seed, 0]))
    k = cfg.intrinsics
    uv = rng.uniform([0.0, 0.0], [cfg.width - 1.0, cfg.height - 1.0], size=(cfg.n_static, 2))
    z = rng.uniform(*cfg.static_depth_range, size=cfg.n_static)
    static = backproject_many(uv, z, k) if cfg.n_static else np.zeros((0, 3))
    static = camera_pose(cfg, 0.0) @ static if cfg.n_static else static
    objects = []
    for motion in cfg.object_motions:
        ext = np.asarray(motion.half_extents, dtype=float)
        objects.append(rng.uniform(-ext, ext, size=(cfg.n_dynamic_per_object, 3)))
    return static, objects


def _disk_offsets(r):
    ys, xs = np.mgrid[-r:r + 1, -r:r + 1]
    keep = xs ** 2 + ys ** 2 <= r * r
    return xs[keep], ys[keep]


def _splat(iu, iv, values, r, width, height):
    """Per-pixel flat indices and values for disks of radius ``r``."""
    dx, dy = _disk_offsets(r)
    pu = (iu[:, None] + dx[None, :]).ravel()
    pv = (iv[:, None] + dy[None, :]).ravel()
    vals = np.repeat(values, dx.size)
    src = np.repeat(np.arange(iu.size), dx.size)
    ok = (pu >= 0) & (pu < width) & (pv >= 0) & (pv < height)
    return pv[ok] * width + pu[ok], vals[ok], src[ok]


def _nearest_per_pixel(pix, z, tie):
    """Index (into the inputs) of the nearest sample for each distinct pixel."""
    order = np.lexsort((tie, z, pix))
    _, first = np.unique(pix[order], return_index=True)
    return order[first]


def _render_frame(cfg, static_w, objects_o, index):
    k = cfg.intrinsics
    t = index / cfg.frame_rate
    T_wc = camera_pose(cfg, t)
    T_cw = T_wc.inverse()

    pts = [static_w]
    labels = [np.zeros(len(static_w), dtype=np.int64)]
    for obj_idx, (motion, local) in enumerate(zip(cfg.object_motions, objects_o), start=1):
        T_wo = pose_compose(Pose(trans=motion.start),
                            se3_exp(np.multiply(motion.linear, t), np.multiply(motion.angular, t)))
        pts.append(T_wo @ local if len(local) else np.zeros((0, 3)))
        labels.append(np.full(len(local), obj_idx, dtype=np.int64))
    world = np.concatenate(pts) if pts else np.zeros((0, 3))
    lab = np.concatenate(labels)
    ids = np.arange(len(world))

    cam = T_cw @ world if len(world) else world
    u, v, z = project_many(cam, k)
    vis = (z > NEAR_PLANE) & (u >= 0) & (u <= cfg.width - 1) & (v >= 0) & (v <= cfg.height - 1)
    u, v, z, ids, lab = u[vis], v[vis], z[vis], ids[vis], lab[vis]

    z_obs = z
    if cfg.depth_noise > 0 and z.size:
        rng = np.random.default_rng(np.random.SeedSequence([cfg.seed, 1, index]))
        z_obs = np.maximum(z + rng.normal(0.0, cfg.depth_noise, size=z.size), MIN_DEPTH)

    iu = np.floor(u + 0.5).astype(np.int64)
    iv = np.floor(v + 0.5).astype(np.int64)
    npix = cfg.width * cfg.height

    # depth image: z-buffer over splatted disks
    zbuf = np.full(npix, np.inf)
    if z.size:
        pix, vals, _ = _splat(iu, iv, z_obs, cfg.splat_radius, cfg.width, cfg.height)
        np.minimum.at(zbuf, pix, vals)
    valid = np.isfinite(zbuf)
    depth = DepthFrame(np.where(valid, zbuf, 0.0).reshape(cfg.height, cfg.width),
                       valid.reshape(cfg.height, cfg.width))

    # instance labels: nearest dynamic disk wins, each point's own pixel forced to its object
    label_img = np.zeros(npix, dtype=np.int64)
    dyn = lab > 0
    if dyn.any():
        pix, _, src = _splat(iu[dyn], iv[dyn], z_obs[dyn], cfg.mask_radius, cfg.width, cfg.height)
        dz, dl = z_obs[dyn][src], lab[dyn][src]
        win = _nearest_per_pixel(pix, dz, dl)
        label_img[pix[win]] = dl[win]
        centers = iv[dyn] * cfg.width + iu[dyn]
        win = _nearest_per_pixel(centers, z_obs[dyn], lab[dyn])
        label_img[centers[win]] = lab[dyn][win]
    label_img = label_img.reshape(cfg.height, cfg.width)
    masks = []
    for obj_idx, motion in enumerate(cfg.object_motions, start=1):
        bm = label_img == obj_idx
        if bm.any():
            masks.append(InstanceMask.from_bitmask(obj_idx, motion.class_label, 1.0, bm))

    obs = tuple(Observation(Keypoint(float(u[i]), float(v[i]), 1.0), float(z_obs[i]),
                            int(ids[i]), int(lab[i])) for i in range(u.size))
    ts = round(cfg.start_time + t, 6)
    return SyntheticFrame(index, ts, obs, T_wc, tuple(masks), depth)


def generate_sequence(cfg):
    """Render ``cfg.n_frames`` frames; returns ``(frames, groundtruth_trajectory)``.

    Output depends only on ``cfg``: landmarks come from ``(seed, 0)`` and each
    frame's noise from its own ``(seed, 1, index)`` substream.
    """
    cfg.validate()
    static_w, objects_o = _landmarks(cfg)
    frames = parallel_map(lambda i: _render_frame(cfg, static_w, objects_o, i),
                          range(cfg.n_frames))
    gt = Trajectory(tuple((f.timestamp, f.gt_pose) for f in frames))
    return frames, gt


def landmark_positions(cfg, index):
    """World positions of every landmark at frame ``index`` (row = landmark id)."""
    static_w, objects_o = _landmarks(cfg)
    t = index / cfg.frame_rate
    pts = [static_w]
    for motion, local in zip(cfg.object_motions, objects_o):
        T_wo = pose_compose(Pose(trans=motion.start),
                            se3_exp(np.multiply(motion.linear, t), np.multiply(motion.angular, t)))
        pts.append(T_wo @ local if len(local) else np.zeros((0, 3)))
    return np.concatenate(pts)


def _stamp(t):
    return f"{t:.6f}"


def export_tum(frames, out_dir, intrinsics=None, width=None, height=None):
    """Write a TUM-style directory readable by :func:`load_exported`.

    Layout: ``depth/``, ``labels/`` (PNG + JSON sidecar), ``keypoints/`` (CSV),
    the matching ``*.txt`` indexes, ``groundtruth.txt`` and ``camera.json``.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    k = intrinsics or PinholeIntrinsics.tum_default()
    depth_idx, label_idx, kp_idx = [], [], []
    for f in frames:
        s = _stamp(f.timestamp)
        atomic_write(out / "depth" / f"{s}.png", encode_depth(f.depth, k))
        atomic_write(out / "labels" / f"{s}.png", encode_label_image(f.gt_masks, f.depth.depth.shape))
        atomic_write(out / "labels" / f"{s}.json", encode_sidecar(f.gt_masks))
        extra = {
            "landmark_id": [o.landmark_id for o in f.observations],
            "depth": [repr(o.depth) for o in f.observations],
            "instance_label": [o.instance_label for o in f.observations],
        }
        atomic_write(out / "keypoints" / f"{s}.csv", write_keypoints_csv(f.keypoints, extra))
        depth_idx.append(TimedPath(f.timestamp, f"depth/{s}.png"))
        label_idx.append(TimedPath(f.timestamp, f"labels/{s}.png"))
        kp_idx.append(TimedPath(f.timestamp, f"keypoints/{s}.csv"))
    atomic_write(out / "depth.txt", serialize_image_index(depth_idx, "depth maps"))
    atomic_write(out / "masks.txt", serialize_image_index(label_idx, "instance label images"))
    atomic_write(out / "keypoints.txt", serialize_image_index(kp_idx, "keypoints"))
    gt = Trajectory(tuple((f.timestamp, f.gt_pose) for f in frames))
    atomic_write(out / "groundtruth.txt", serialize_trajectory(gt, "ground truth (camera to world)"))
    if frames:
        height, width = frames[0].depth.depth.shape
    camera = {**k.to_dict(), "width": width, "height": height}
    atomic_write(out / "camera.json", json.dumps(camera, indent=2, sort_keys=True) + "\n")


def read_camera(seq_dir):
    doc = json.loads((Path(seq_dir) / "camera.json").read_text())
    k = PinholeIntrinsics(doc["fx"], doc["fy"], doc["cx"], doc["cy"], doc["depth_scale"])
    return k, doc.get("width"), doc.get("height")


def load_frame(seq_dir, depth_path, label_path, kp_path, k, timestamp=0.0, index=0,
               gt_pose=None):
    """Re-ingest one exported frame through the public file readers."""
    seq = Path(seq_dir)
    depth = load_depth((seq / depth_path).read_bytes(), k)
    label_file = seq / label_path
    masks = load_instance_masks(label_file.read_bytes(), label_file.with_suffix(".json").read_text())
    text = (seq / kp_path).read_text()
    kps = read_keypoints_csv(text)
    rows = list(csv.DictReader(io.StringIO(text)))
    obs = tuple(
        Observation(kp, float(r.get("depth") or "nan"), int(r.get("landmark_id") or -1),
                    int(r.get("instance_label") or 0))
        for kp, r in zip(kps, rows))
    return SyntheticFrame(index, timestamp, obs, gt_pose or Pose.identity(), tuple(masks), depth)


def load_exported(seq_dir, max_diff=0.02):
    """Load a directory written by :func:`export_tum`; returns ``(frames, gt, intrinsics)``."""
    seq = Path(seq_dir)
    k, _, _ = read_camera(seq)
    depth_idx = parse_image_index((seq / "depth.txt").read_text())
    label_idx = parse_image_index((seq / "masks.txt").read_text())
    kp_idx = parse_image_index((seq / "keypoints.txt").read_text())
    gt = parse_trajectory((seq / "groundtruth.txt").read_text())
    stamps = [d.timestamp for d in depth_idx]
    by_label = dict(associate(stamps, [x.timestamp for x in label_idx], max_diff))
    by_kp = dict(associate(stamps, [x.timestamp for x in kp_idx], max_diff))
    by_gt = dict(associate(stamps, list(gt.timestamps), max_diff))
    frames = []
    for i, d in enumerate(depth_idx):
        if i not in by_label or i not in by_kp:
            continue
        pose = gt[by_gt[i]][1] if i in by_gt else None
        frames.append(load_frame(seq, d.relative_path, label_idx[by_label[i]].relative_path,
                                 kp_idx[by_kp[i]].relative_path, k, d.timestamp, len(frames), pose))
    return frames, gt, k
