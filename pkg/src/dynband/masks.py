"""Instance masks: label PNG + JSON sidecar ingestion, class policy, dilation."""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace

import numpy as np

from . import _kernels
from .errors import DecodeError, IdMismatch, InvalidParams, MalformedSidecar
from .tum import decode_png_gray, encode_png_gray

DEFAULT_DYNAMIC_CLASSES = frozenset({"person"})
DEFAULT_MIN_SCORE = 0.5
DEFAULT_DILATION = 3


def tight_bbox(bitmask):
    """Inclusive ``(u_min, v_min, u_max, v_max)`` of the set pixels, or None."""
    rows = np.flatnonzero(bitmask.any(axis=1))
    if rows.size == 0:
        return None
    cols = np.flatnonzero(bitmask.any(axis=0))
    return (int(cols[0]), int(rows[0]), int(cols[-1]), int(rows[-1]))


@dataclass(frozen=True, eq=False)
class InstanceMask:
    instance_id: int
    class_label: str
    score: float
    bbox: tuple
    bitmask: np.ndarray = field(repr=False)

    def __post_init__(self):
        if int(self.instance_id) < 1:
            raise InvalidParams("instance_id must be a positive integer")
        if not 0.0 <= self.score <= 1.0:
            raise InvalidParams(f"score {self.score} outside [0, 1]")
        bm = np.asarray(self.bitmask, dtype=bool)
        bbox = tight_bbox(bm)
        if bbox is None:
            raise InvalidParams(f"instance {self.instance_id} has an empty bitmask")
        if tuple(int(b) for b in self.bbox) != bbox:
            raise InvalidParams(f"bbox {self.bbox} is not the tight box {bbox}")
        bm.setflags(write=False)
        object.__setattr__(self, "bitmask", bm)
        object.__setattr__(self, "bbox", bbox)

    @classmethod
    def from_bitmask(cls, instance_id, class_label, score, bitmask):
        bm = np.asarray(bitmask, dtype=bool)
        return cls(int(instance_id), str(class_label), float(score), tight_bbox(bm) or (), bm)

    @property
    def area(self):
        return int(self.bitmask.sum())

    def __eq__(self, other):
        if not isinstance(other, InstanceMask):
            return NotImplemented
        return (self.instance_id == other.instance_id and self.class_label == other.class_label
                and self.score == other.score and self.bbox == other.bbox
                and np.array_equal(self.bitmask, other.bitmask))

    __hash__ = None


@dataclass(frozen=True)
class DynamicClassPolicy:
    dynamic_classes: frozenset = DEFAULT_DYNAMIC_CLASSES
    min_score: float = DEFAULT_MIN_SCORE

    def __post_init__(self):
        if not 0.0 <= self.min_score <= 1.0:
            raise InvalidParams("min_score must lie in [0, 1]")
        object.__setattr__(self, "dynamic_classes", frozenset(self.dynamic_classes))


def _parse_sidecar(text):
    try:
        doc = json.loads(text) if text.strip() else {}
    except json.JSONDecodeError as exc:
        raise MalformedSidecar(f"invalid JSON: {exc}") from None
    if not isinstance(doc, dict):
        raise MalformedSidecar("sidecar must be a JSON object")
    entries = {}
    for key, value in doc.items():
        try:
            iid = int(key)
        except ValueError:
            raise MalformedSidecar(f"instance key {key!r} is not a decimal id") from None
        if iid < 1 or str(iid) != key.strip():
            raise MalformedSidecar(f"instance key {key!r} must be a positive decimal id")
        if not isinstance(value, dict) or "class" not in value or "score" not in value:
            raise MalformedSidecar(f"instance {key} needs 'class' and 'score'")
        label, score = value["class"], value["score"]
        if not isinstance(label, str) or isinstance(score, bool) or not isinstance(score, (int, float)):
            raise MalformedSidecar(f"instance {key} has mistyped fields")
        if not 0.0 <= score <= 1.0:
            raise MalformedSidecar(f"instance {key} score {score} outside [0, 1]")
        entries[iid] = (label, float(score))
    return entries


def load_instance_masks(label_png, sidecar_json):
    """Decode a label image plus its sidecar into one :class:`InstanceMask` per id.

    Any sidecar ``bbox`` is ignored; boxes are always recomputed from pixels.
    """
    labels = decode_png_gray(label_png, allow_8bit=True)
    if labels.ndim != 2:
        raise DecodeError("label image must be single-channel")
    meta = _parse_sidecar(sidecar_json)

    image_ids = set(int(i) for i in np.unique(labels) if i != 0)
    for iid in sorted(image_ids | set(meta)):
        if iid not in meta:
            raise IdMismatch(iid, "sidecar")
        if iid not in image_ids:
            raise IdMismatch(iid, "image")

    masks = [InstanceMask.from_bitmask(iid, meta[iid][0], meta[iid][1], labels == iid)
             for iid in sorted(image_ids)]
    claimed = np.zeros(labels.shape, dtype=np.int32)
    for m in masks:
        claimed += m.bitmask
    assert claimed.max(initial=0) <= 1, "label image assigned a pixel to two instances"
    return masks


def encode_label_image(masks, shape):
    """Rasterize masks into a label PNG (8-bit when ids fit, else 16-bit).

    Masks are written in order; a later mask does not overwrite pixels already
    claimed by an earlier one.
    """
    labels = np.zeros(shape, dtype=np.uint16)
    for m in masks:
        labels[m.bitmask & (labels == 0)] = m.instance_id
    if labels.max(initial=0) <= 0xFF:
        labels = labels.astype(np.uint8)
    return encode_png_gray(labels)


def encode_sidecar(masks):
    doc = {str(m.instance_id): {"class": m.class_label, "score": m.score,
                                "bbox": list(m.bbox)} for m in masks}
    return json.dumps(doc, indent=2, sort_keys=True) + "\n"


def select_dynamic(masks, policy=DynamicClassPolicy()):
    return [m for m in masks
            if m.class_label in policy.dynamic_classes and m.score >= policy.min_score]


def dilate_mask(mask, radius):
    """Grow the bitmask by Chebyshev distance ``radius`` (square structuring element)."""
    radius = int(radius)
    if radius < 0:
        raise InvalidParams("dilation radius must be non-negative")
    if radius == 0:
        return mask
    grown = np.zeros(mask.bitmask.shape, dtype=bool)
    dilate_into(grown, mask.bitmask, mask.bbox, radius)
    return replace(mask, bbox=tight_bbox(grown), bitmask=grown)


def dilate_into(out, bitmask, bbox, radius):
    """OR the Chebyshev dilation of ``bitmask`` into ``out``.

    Only the bbox grown by ``radius`` is touched; nothing outside it can change.
    """
    h, w = bitmask.shape
    u0, v0, u1, v1 = bbox
    y0, y1 = max(v0 - radius, 0), min(v1 + radius, h - 1)
    x0, x1 = max(u0 - radius, 0), min(u1 + radius, w - 1)
    sub = np.ascontiguousarray(bitmask[y0:y1 + 1, x0:x1 + 1], dtype=np.uint8)
    grown = _kernels.dilate_square(sub, int(radius)) if radius > 0 else sub
    out[y0:y1 + 1, x0:x1 + 1] |= grown.astype(out.dtype)
