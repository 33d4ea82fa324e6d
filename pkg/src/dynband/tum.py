"""TUM RGB-D file formats: trajectories, image indexes, depth PNGs, association."""

from __future__ import annotations

import io
import math
from dataclasses import dataclass

import numpy as np
from PIL import Image, UnidentifiedImageError

from .errors import DecodeError, DuplicateTimestamp, MalformedLine, UnsupportedPngFormat
from .geom import Pose


@dataclass(frozen=True)
class TimedPath:
    timestamp: float
    relative_path: str


@dataclass(frozen=True)
class Trajectory:
    """Time-ordered ``(timestamp, Pose)`` entries with strictly increasing stamps."""

    entries: tuple = ()

    def __post_init__(self):
        entries = tuple(self.entries)
        for (t0, _), (t1, _) in zip(entries, entries[1:]):
            if not t1 > t0:
                raise DuplicateTimestamp(f"timestamps not strictly increasing at {t1!r}")
        object.__setattr__(self, "entries", entries)

    def __len__(self):
        return len(self.entries)

    def __iter__(self):
        return iter(self.entries)

    def __getitem__(self, i):
        return self.entries[i]

    @property
    def timestamps(self):
        return np.array([t for t, _ in self.entries], dtype=float)

    @property
    def poses(self):
        return [p for _, p in self.entries]

    def positions(self):
        return np.array([p.trans for _, p in self.entries], dtype=float).reshape(-1, 3)

    def transformed(self, S):
        """Left-compose every pose with the rigid transform ``S``."""
        return Trajectory(tuple((t, S @ p) for t, p in self.entries))


@dataclass(frozen=True)
class DepthFrame:
    """Metric depth grid (row-major, ``depth[v, u]``); raw 0 marks an invalid pixel."""

    depth: np.ndarray
    valid: np.ndarray

    @property
    def height(self):
        return self.depth.shape[0]

    @property
    def width(self):
        return self.depth.shape[1]

    @classmethod
    def from_meters(cls, depth):
        depth = np.asarray(depth, dtype=float)
        valid = np.isfinite(depth) & (depth > 0)
        return cls(np.where(valid, depth, 0.0), valid)


def _data_lines(text):
    for line_no, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        yield line_no, line


def _parse_float(token, line_no):
    try:
        value = float(token)
    except ValueError:
        raise MalformedLine(line_no, f"non-numeric token {token!r}") from None
    if not math.isfinite(value):
        raise MalformedLine(line_no, f"non-finite value {token!r}")
    return value


def _check_unique(stamps):
    seen = set()
    for t in stamps:
        if t in seen:
            raise DuplicateTimestamp(f"duplicate timestamp {t!r}")
        seen.add(t)


def parse_trajectory(text):
    """Parse ``timestamp tx ty tz qx qy qz qw`` lines into a :class:`Trajectory`."""
    entries = []
    for line_no, line in _data_lines(text):
        fields = line.split()
        if len(fields) != 8:
            raise MalformedLine(line_no, f"expected 8 fields, got {len(fields)}")
        values = [_parse_float(f, line_no) for f in fields]
        try:
            pose = Pose(values[4:8], values[1:4])
        except Exception as exc:
            raise MalformedLine(line_no, str(exc)) from None
        entries.append((values[0], pose))
    _check_unique(t for t, _ in entries)
    entries.sort(key=lambda e: e[0])
    return Trajectory(tuple(entries))


def serialize_trajectory(traj, header=None):
    lines = [f"# {header}"] if header else []
    lines.append("# timestamp tx ty tz qx qy qz qw")
    for t, p in traj:
        vals = " ".join(f"{x:.9g}" for x in (*p.trans, *p.quat))
        lines.append(f"{t:.6f} {vals}")
    return "\n".join(lines) + "\n"


def parse_image_index(text):
    """Parse an ``rgb.txt``/``depth.txt`` style index into sorted :class:`TimedPath` items."""
    items = []
    for line_no, line in _data_lines(text):
        fields = line.split()
        if len(fields) != 2:
            raise MalformedLine(line_no, f"expected 2 fields, got {len(fields)}")
        items.append(TimedPath(_parse_float(fields[0], line_no), fields[1]))
    _check_unique(item.timestamp for item in items)
    items.sort(key=lambda item: item.timestamp)
    return items


def serialize_image_index(items, header=None):
    lines = [f"# {header}"] if header else []
    lines.append("# timestamp filename")
    lines.extend(f"{item.timestamp:.6f} {item.relative_path}" for item in items)
    return "\n".join(lines) + "\n"


def parse_stamped_lines(text):
    """Loose reader: leading timestamp plus the rest of the line, file order kept."""
    out = []
    for line_no, line in _data_lines(text):
        head, _, rest = line.partition(" ")
        out.append((_parse_float(head, line_no), rest.strip()))
    return out


def associate(a, b, max_diff=0.02, offset=0.0):
    """Greedy timestamp association.

    Candidate pairs with ``|a_i - (b_j + offset)| <= max_diff`` are taken in order
    of increasing difference (ties by index) while both endpoints are unused.
    Returns ``(i, j)`` index pairs sorted by ``a`` timestamp.
    """
    if max_diff < 0:
        raise ValueError("max_diff must be non-negative")
    a = np.asarray(a, dtype=float).reshape(-1)
    b = np.asarray(b, dtype=float).reshape(-1)
    if a.size == 0 or b.size == 0:
        return []
    b_shift = b + offset
    order = np.argsort(b_shift, kind="stable")
    b_sorted = b_shift[order]
    lo = np.searchsorted(b_sorted, a - max_diff - 1e-9 * (1 + abs(max_diff)), side="left")
    hi = np.searchsorted(b_sorted, a + max_diff + 1e-9 * (1 + abs(max_diff)), side="right")

    cand = []
    for i in range(a.size):
        for k in range(lo[i], hi[i]):
            j = int(order[k])
            diff = abs(a[i] - b_shift[j])
            if diff <= max_diff:
                cand.append((diff, i, j))
    cand.sort()

    used_a, used_b, pairs = set(), set(), []
    for _, i, j in cand:
        if i in used_a or j in used_b:
            continue
        used_a.add(i)
        used_b.add(j)
        pairs.append((i, j))
    pairs.sort(key=lambda ij: (a[ij[0]], ij[0]))
    return pairs


def _open_png(data):
    try:
        img = Image.open(io.BytesIO(data))
        img.load()
    except (UnidentifiedImageError, OSError, SyntaxError, ValueError) as exc:
        raise DecodeError(f"cannot decode image: {exc}") from None
    if img.format != "PNG":
        raise DecodeError(f"expected PNG, got {img.format}")
    return img


def decode_png_gray(data, allow_8bit=False):
    """Decode a single-channel PNG into a ``uint16`` (or ``uint8``) array."""
    img = _open_png(data)
    if img.mode in ("I;16", "I;16B", "I;16L", "I"):
        arr = np.array(img)
        if arr.dtype != np.uint16:
            if arr.min(initial=0) < 0 or arr.max(initial=0) > 0xFFFF:
                raise UnsupportedPngFormat("pixel values exceed 16 bits")
            arr = arr.astype(np.uint16)
        return arr
    if img.mode == "L" and allow_8bit:
        return np.array(img)
    raise UnsupportedPngFormat(f"unsupported PNG mode {img.mode!r}")


def encode_png_gray(arr):
    arr = np.ascontiguousarray(arr)
    if arr.dtype not in (np.uint8, np.uint16) or arr.ndim != 2:
        raise ValueError("expected a 2D uint8 or uint16 array")
    buf = io.BytesIO()
    Image.fromarray(arr).save(buf, format="PNG")
    return buf.getvalue()


def load_depth(data, k):
    """Decode a 16-bit TUM depth PNG into a :class:`DepthFrame` in meters."""
    raw = decode_png_gray(data)
    valid = raw > 0
    depth = np.where(valid, raw.astype(float) / k.depth_scale, 0.0)
    return DepthFrame(depth, valid)


def encode_depth(frame, k):
    """Quantize a :class:`DepthFrame` to raw units and encode it as 16-bit PNG."""
    raw = np.rint(np.where(frame.valid, frame.depth, 0.0) * k.depth_scale)
    raw = np.clip(raw, 0, 0xFFFF).astype(np.uint16)
    raw[frame.valid & (raw == 0)] = 1
    return encode_png_gray(raw)
