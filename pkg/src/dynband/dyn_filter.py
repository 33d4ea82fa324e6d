"""Dynamic keypoint suppression.

A keypoint is rejected when it lies on a (dilated) dynamic-instance mask, or
when it lies inside a dynamic instance's bounding box with a depth inside the
band ``[m_obj - alpha*d, M_obj + alpha*d]``. Here ``[m_obj, M_obj]`` is the
dominant depth range of the object pixels and ``d`` is the depth spread of the
whole box.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .errors import EmptyImage, InsufficientDepth, InvalidParams
from .masks import DEFAULT_DILATION, dilate_into

DEFAULT_ALPHA = 0.10
DEFAULT_MODE_WINDOW = 0.10
DEFAULT_RUN_FRACTION = 0.10

STATIC, REJECTED_MASK, REJECTED_DEPTH = 0, 1, 2


@dataclass(frozen=True)
class Keypoint:
    u: float
    v: float
    response: float = 0.0


@dataclass(frozen=True)
class DepthBandParams:
    """Tunables of the depth-band test.

    ``run_fraction`` is the share of the modal histogram count a neighbouring
    bin needs to be kept in the dominant-depth run.
    """

    alpha: float = DEFAULT_ALPHA
    mode_window: float = DEFAULT_MODE_WINDOW
    min_valid_pixels: int = 5
    run_fraction: float = DEFAULT_RUN_FRACTION

    def __post_init__(self):
        if not self.alpha >= 0:
            raise InvalidParams("alpha must be >= 0")
        if not self.mode_window > 0:
            raise InvalidParams("mode_window must be > 0")
        if self.min_valid_pixels < 1:
            raise InvalidParams("min_valid_pixels must be >= 1")
        if not 0 <= self.run_fraction <= 1:
            raise InvalidParams("run_fraction must lie in [0, 1]")

    def to_dict(self):
        return {"alpha": self.alpha, "mode_window": self.mode_window,
                "min_valid_pixels": self.min_valid_pixels, "run_fraction": self.run_fraction}


@dataclass(frozen=True)
class DepthBand:
    m_obj: float
    M_obj: float
    m_roi: float
    M_roi: float
    d: float
    lo: float
    hi: float

    def contains(self, z):
        return self.lo <= z <= self.hi

    def to_dict(self):
        return {"m_obj": self.m_obj, "M_obj": self.M_obj, "m_roi": self.m_roi,
                "M_roi": self.M_roi, "d": self.d, "lo": self.lo, "hi": self.hi}


@dataclass
class KeypointClassification:
    static_kps: list
    rejected_mask: list
    rejected_depth: list
    band_per_instance: dict = field(default_factory=dict)
    labels: np.ndarray = field(default=None, repr=False)

    def counts(self):
        return {"static": len(self.static_kps), "rejected_mask": len(self.rejected_mask),
                "rejected_depth": len(self.rejected_depth)}


def keypoint_pixels(kps, width, height):
    """Nearest pixel (round half up) of each keypoint as ``(u_idx, v_idx)`` arrays."""
    if len(kps) == 0:
        return np.zeros(0, dtype=np.int64), np.zeros(0, dtype=np.int64)
    uv = np.array([(k.u, k.v) for k in kps], dtype=float)
    if np.any(~np.isfinite(uv)):
        raise InvalidParams("keypoint coordinates must be finite")
    iu = np.floor(uv[:, 0] + 0.5).astype(np.int64)
    iv = np.floor(uv[:, 1] + 0.5).astype(np.int64)
    if iu.min() < 0 or iv.min() < 0 or iu.max() >= width or iv.max() >= height:
        raise InvalidParams("keypoint outside the frame")
    return iu, iv


def detect_corners(gray, max_corners=500, cell=8, quality=0.01):
    """Shi-Tomasi corners with one winner per ``cell`` x ``cell`` grid block.

    The response is the smaller eigenvalue of the 3x3-summed structure tensor
    built from 3x3 Sobel gradients (reflect-101 borders). Blocks keep their
    strongest pixel if it reaches ``quality`` times the global maximum.
    Returns at most ``max_corners`` keypoints, strongest first.
    """
    gray = np.asarray(gray, dtype=np.float64)
    if gray.ndim != 2 or gray.size == 0:
        raise EmptyImage("expected a non-empty 2D intensity grid")
    if max_corners < 1:
        raise InvalidParams("max_corners must be >= 1")
    if cell < 4:
        raise InvalidParams("cell must be >= 4")
    if min(gray.shape) < 2:
        return []
    resp = _kernels.min_eig_response(np.ascontiguousarray(gray))
    top = float(resp.max())
    if top <= 0.0:
        return []
    rows, cols, vals = _kernels.grid_best(resp, int(cell), quality * top)
    order = np.lexsort((cols, rows, -vals))[:max_corners]
    return [Keypoint(float(cols[i]), float(rows[i]), float(vals[i])) for i in order]


def _mode_run(depths, window, run_fraction):
    bins = np.floor(depths / window).astype(np.int64)
    ids, counts = np.unique(bins, return_counts=True)
    k = int(np.argmax(counts))  # lowest bin among equal maxima
    need = run_fraction * counts[k]
    lo = hi = k
    while lo > 0 and ids[lo - 1] == ids[lo] - 1 and counts[lo - 1] >= need:
        lo -= 1
    while hi < len(ids) - 1 and ids[hi + 1] == ids[hi] + 1 and counts[hi + 1] >= need:
        hi += 1
    keep = (bins >= ids[lo]) & (bins <= ids[hi])
    return depths[keep]


def object_depth_range(mask, depth, params=DepthBandParams()):
    """Dominant depth extent ``(m_obj, M_obj)`` of the pixels under ``mask``.

    Depths are histogrammed in bins of ``mode_window`` meters (anchored at 0);
    the run of adjacent well-populated bins around the modal bin is kept, so
    boundary pixels that bleed onto the background are dropped.
    """
    if mask.bitmask.shape != depth.depth.shape:
        raise InvalidParams("mask and depth frame sizes differ")
    u0, v0, u1, v1 = mask.bbox
    win = (slice(v0, v1 + 1), slice(u0, u1 + 1))
    vals = depth.depth[win][mask.bitmask[win] & depth.valid[win]]
    if vals.size < params.min_valid_pixels:
        raise InsufficientDepth(
            f"instance {mask.instance_id}: {vals.size} valid depth pixels "
            f"< {params.min_valid_pixels}")
    kept = _mode_run(vals, params.mode_window, params.run_fraction)
    return float(kept.min()), float(kept.max())


def roi_depth_range(bbox, depth):
    """Plain ``(m_roi, M_roi, d)`` over the valid depths inside ``bbox`` (inclusive)."""
    u0, v0, u1, v1 = (int(b) for b in bbox)
    if u0 < 0 or v0 < 0 or u1 >= depth.width or v1 >= depth.height or u0 > u1 or v0 > v1:
        raise InvalidParams(f"bbox {bbox} outside the frame")
    vals = depth.depth[v0:v1 + 1, u0:u1 + 1][depth.valid[v0:v1 + 1, u0:u1 + 1]]
    if vals.size == 0:
        raise InsufficientDepth(f"no valid depth inside bbox {bbox}")
    m, M = float(vals.min()), float(vals.max())
    return m, M, M - m


def depth_band(m_obj, M_obj, d, alpha):
    if alpha < 0 or d < 0 or m_obj > M_obj or not all(map(math.isfinite, (m_obj, M_obj, d, alpha))):
        raise InvalidParams("need alpha >= 0, d >= 0 and m_obj <= M_obj")
    lo = m_obj - alpha * d
    return (lo if lo > 0.0 else 0.0), M_obj + alpha * d


def instance_band(mask, depth, params=DepthBandParams()):
    m_obj, M_obj = object_depth_range(mask, depth, params)
    m_roi, M_roi, d = roi_depth_range(mask.bbox, depth)
    lo, hi = depth_band(m_obj, M_obj, d, params.alpha)
    return DepthBand(m_obj, M_obj, m_roi, M_roi, d, lo, hi)


def _prepare(dyn_masks, depth, params, dilation_radius):
    """Union of dilated masks plus (bbox, band) rows for instances with usable depth."""
    h, w = depth.depth.shape
    union = np.zeros((h, w), dtype=np.uint8)
    bands = {}
    boxes, limits = [], []
    for m in sorted(dyn_masks, key=lambda m: m.instance_id):
        if m.bitmask.shape != (h, w):
            raise InvalidParams("mask and depth frame sizes differ")
        dilate_into(union, m.bitmask, m.bbox, int(dilation_radius))
        try:
            band = instance_band(m, depth, params)
        except InsufficientDepth:
            continue
        bands[m.instance_id] = band
        boxes.append(m.bbox)
        limits.append((band.lo, band.hi))
    boxes = np.array(boxes, dtype=np.int64).reshape(-1, 4)
    limits = np.array(limits, dtype=np.float64).reshape(-1, 2)
    return union, bands, boxes, limits


def classify_keypoints(kps, dyn_masks, depth, params=DepthBandParams(),
                       dilation_radius=DEFAULT_DILATION):
    """Partition keypoints into static / rejected-by-mask / rejected-by-depth.

    Rules are applied in priority order: on any dilated dynamic mask, then
    inside a dynamic bbox with valid depth inside that instance's band,
    otherwise static. Instances without enough depth only take part in the
    mask rule.
    """
    if dilation_radius < 0:
        raise InvalidParams("dilation radius must be non-negative")
    kps = list(kps)
    union, bands, boxes, limits = _prepare(dyn_masks, depth, params, dilation_radius)
    iu, iv = keypoint_pixels(kps, depth.width, depth.height)
    labels = _kernels.classify_rules(
        iu, iv, union, np.ascontiguousarray(depth.depth, dtype=np.float64),
        np.ascontiguousarray(depth.valid, dtype=np.uint8), boxes, limits)
    groups = ([], [], [])
    for kp, lab in zip(kps, labels):
        groups[lab].append(kp)
    return KeypointClassification(groups[0], groups[1], groups[2], bands, labels)


def removal_mask(dyn_masks, depth, params=DepthBandParams(), dilation_radius=DEFAULT_DILATION):
    """Per-pixel version of the same rules: True where a keypoint would be rejected."""
    union, _, boxes, limits = _prepare(dyn_masks, depth, params, dilation_radius)
    out = union.astype(bool)
    for (u0, v0, u1, v1), (lo, hi) in zip(boxes, limits):
        z = depth.depth[v0:v1 + 1, u0:u1 + 1]
        ok = depth.valid[v0:v1 + 1, u0:u1 + 1] & (z >= lo) & (z <= hi)
        out[v0:v1 + 1, u0:u1 + 1] |= ok
    return out


def read_keypoints_csv(text):
    """Parse ``u,v,response`` CSV (header required; extra columns ignored)."""
    reader = csv.DictReader(io.StringIO(text))
    if reader.fieldnames is None or not {"u", "v", "response"} <= set(reader.fieldnames):
        raise InvalidParams("keypoint CSV needs a 'u,v,response' header")
    out = []
    for row in reader:
        try:
            out.append(Keypoint(float(row["u"]), float(row["v"]), float(row["response"] or 0.0)))
        except (TypeError, ValueError):
            raise InvalidParams(f"bad keypoint row at line {reader.line_num}") from None
    return out


def write_keypoints_csv(kps, extra=None):
    """Serialize keypoints; ``extra`` maps column name -> per-keypoint values."""
    extra = extra or {}
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["u", "v", "response", *extra])
    for i, k in enumerate(kps):
        writer.writerow([repr(float(k.u)), repr(float(k.v)), repr(float(k.response)),
                         *(col[i] for col in extra.values())])
    return buf.getvalue()
