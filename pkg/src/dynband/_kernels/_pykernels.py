"""Numpy implementations of the pixel kernels (fallback when the extension is absent).

Floating-point operations are ordered exactly as in ``_ckernels.pyx`` so that
both backends produce identical responses.
"""

import numpy as np


def dilate_square(mask, radius):
    mask = np.asarray(mask, dtype=np.uint8) != 0
    h, w = mask.shape
    r = int(radius)
    if r == 0 or mask.size == 0:
        return mask.astype(np.uint8)
    tmp = np.zeros_like(mask)
    for s in range(-r, r + 1):
        if s >= 0:
            tmp[:, : w - s] |= mask[:, s:] if s < w else False
        else:
            tmp[:, -s:] |= mask[:, : w + s] if -s < w else False
    out = np.zeros_like(mask)
    for s in range(-r, r + 1):
        if s >= 0:
            out[: h - s, :] |= tmp[s:, :] if s < h else False
        else:
            out[-s:, :] |= tmp[: h + s, :] if -s < h else False
    return out.astype(np.uint8)


def _box3(p):
    q = np.pad(p, 1, mode="reflect")
    h, w = p.shape
    acc = q[0:h, 0:w] + q[0:h, 1:w + 1]
    acc = acc + q[0:h, 2:w + 2]
    acc = acc + q[1:h + 1, 0:w]
    acc = acc + q[1:h + 1, 1:w + 1]
    acc = acc + q[1:h + 1, 2:w + 2]
    acc = acc + q[2:h + 2, 0:w]
    acc = acc + q[2:h + 2, 1:w + 1]
    acc = acc + q[2:h + 2, 2:w + 2]
    return acc


def min_eig_response(img):
    img = np.asarray(img, dtype=np.float64)
    h, w = img.shape
    p = np.pad(img, 1, mode="reflect")
    c_mm, c_m0, c_mp = p[0:h, 0:w], p[0:h, 1:w + 1], p[0:h, 2:w + 2]
    c_0m, c_0p = p[1:h + 1, 0:w], p[1:h + 1, 2:w + 2]
    c_pm, c_p0, c_pp = p[2:h + 2, 0:w], p[2:h + 2, 1:w + 1], p[2:h + 2, 2:w + 2]
    left = (c_mm + 2.0 * c_0m) + c_pm
    right = (c_mp + 2.0 * c_0p) + c_pp
    top = (c_mm + 2.0 * c_m0) + c_mp
    bottom = (c_pm + 2.0 * c_p0) + c_pp
    gx = right - left
    gy = bottom - top
    a = _box3(gx * gx)
    c = _box3(gy * gy)
    b = _box3(gx * gy)
    half_tr = (a + c) * 0.5
    diff = (a - c) * 0.5
    lam = half_tr - np.sqrt(diff * diff + b * b)
    return np.where(lam > 0.0, lam, 0.0)


def grid_best(resp, cell, threshold):
    resp = np.asarray(resp, dtype=np.float64)
    h, w = resp.shape
    rows, cols, vals = [], [], []
    for y0 in range(0, h, cell):
        for x0 in range(0, w, cell):
            block = resp[y0:y0 + cell, x0:x0 + cell]
            ok = (block > 0.0) & (block >= threshold)
            if not ok.any():
                continue
            scored = np.where(ok, block, -1.0)
            k = int(np.argmax(scored))  # first maximum in raster order
            by, bx = divmod(k, block.shape[1])
            rows.append(y0 + by)
            cols.append(x0 + bx)
            vals.append(block[by, bx])
    return (np.array(rows, dtype=np.int64), np.array(cols, dtype=np.int64),
            np.array(vals, dtype=np.float64))


def classify_rules(ku, kv, union_mask, depth, valid, bboxes, bands):
    ku = np.asarray(ku, dtype=np.int64)
    kv = np.asarray(kv, dtype=np.int64)
    labels = np.zeros(ku.shape[0], dtype=np.int8)
    if ku.size == 0:
        return labels
    in_mask = np.asarray(union_mask)[kv, ku] != 0
    z = np.asarray(depth)[kv, ku]
    has_depth = np.asarray(valid)[kv, ku] != 0
    bboxes = np.asarray(bboxes, dtype=np.int64).reshape(-1, 4)
    bands = np.asarray(bands, dtype=np.float64).reshape(-1, 2)
    in_band = np.zeros(ku.shape[0], dtype=bool)
    if bboxes.shape[0]:
        inside = ((bboxes[None, :, 0] <= ku[:, None]) & (ku[:, None] <= bboxes[None, :, 2])
                  & (bboxes[None, :, 1] <= kv[:, None]) & (kv[:, None] <= bboxes[None, :, 3]))
        within = (bands[None, :, 0] <= z[:, None]) & (z[:, None] <= bands[None, :, 1])
        in_band = (inside & within).any(axis=1)
    labels[has_depth & in_band] = 2
    labels[in_mask] = 1
    return labels


def inlier_mask(R, t, prev, curr, thr2):
    """Boolean ``(B, n)`` mask; same arithmetic order as the compiled ``count_inliers``."""
    R = np.asarray(R, dtype=np.float64).reshape(-1, 3, 3)
    t = np.asarray(t, dtype=np.float64).reshape(-1, 3)
    cx, cy, cz = (np.asarray(curr, dtype=np.float64)[None, :, j] for j in range(3))
    prev = np.asarray(prev, dtype=np.float64)
    d2 = None
    for row in range(3):
        p = ((R[:, row, 0, None] * cx + R[:, row, 1, None] * cy) + R[:, row, 2, None] * cz) + t[:, row, None]
        d = prev[None, :, row] - p
        d2 = d * d if d2 is None else d2 + d * d
    return d2 <= thr2


def count_inliers(R, t, prev, curr, thr2):
    return inlier_mask(R, t, prev, curr, thr2).sum(axis=1).astype(np.int64)
