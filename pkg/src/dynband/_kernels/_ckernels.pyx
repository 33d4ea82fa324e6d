# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled pixel loops. Must agree bit-for-bit with ``_pykernels``."""

import numpy as np
cimport numpy as cnp
from libc.math cimport sqrt

cnp.import_array()


cdef inline Py_ssize_t _reflect(Py_ssize_t i, Py_ssize_t n) nogil:
    # reflect-101: -1 -> 1, n -> n - 2
    if i < 0:
        return -i
    if i >= n:
        return 2 * n - 2 - i
    return i


def dilate_square(const cnp.uint8_t[:, ::1] mask, Py_ssize_t radius):
    cdef Py_ssize_t h = mask.shape[0], w = mask.shape[1]
    cdef Py_ssize_t y, yy, x, k, lo, hi, filled
    tmp_arr = np.zeros((h, w), dtype=np.uint8)
    out_arr = np.zeros((h, w), dtype=np.uint8)
    any_arr = np.zeros(h, dtype=np.uint8)
    cdef cnp.uint8_t[:, ::1] tmp = tmp_arr
    cdef cnp.uint8_t[:, ::1] out = out_arr
    cdef cnp.uint8_t[::1] row_any = any_arr
    with nogil:
        # horizontal pass: paint [x - r, x + r] around each set pixel, never twice
        for y in range(h):
            filled = -1
            for x in range(w):
                if mask[y, x]:
                    lo = x - radius if x - radius > filled + 1 else filled + 1
                    hi = x + radius if x + radius < w else w - 1
                    for k in range(lo, hi + 1):
                        tmp[y, k] = 1
                    if hi > filled:
                        filled = hi
                    row_any[y] = 1
        # vertical pass: OR each non-empty row into its 2r + 1 neighbours
        for y in range(h):
            if not row_any[y]:
                continue
            lo = y - radius if y >= radius else 0
            hi = y + radius if y + radius < h else h - 1
            for yy in range(lo, hi + 1):
                for x in range(w):
                    out[yy, x] |= tmp[y, x]
    return out_arr


def min_eig_response(const double[:, ::1] img):
    cdef Py_ssize_t h = img.shape[0], w = img.shape[1]
    cdef Py_ssize_t y, x, ym, yp, xm, xp
    cdef double left, right, top, bottom, gx, gy, a, b, c, half_tr, diff, lam
    sxx_arr = np.empty((h, w), dtype=np.float64)
    syy_arr = np.empty((h, w), dtype=np.float64)
    sxy_arr = np.empty((h, w), dtype=np.float64)
    out_arr = np.empty((h, w), dtype=np.float64)
    cdef double[:, ::1] sxx = sxx_arr
    cdef double[:, ::1] syy = syy_arr
    cdef double[:, ::1] sxy = sxy_arr
    cdef double[:, ::1] out = out_arr
    with nogil:
        for y in range(h):
            ym = _reflect(y - 1, h)
            yp = _reflect(y + 1, h)
            for x in range(w):
                xm = _reflect(x - 1, w)
                xp = _reflect(x + 1, w)
                left = (img[ym, xm] + 2.0 * img[y, xm]) + img[yp, xm]
                right = (img[ym, xp] + 2.0 * img[y, xp]) + img[yp, xp]
                top = (img[ym, xm] + 2.0 * img[ym, x]) + img[ym, xp]
                bottom = (img[yp, xm] + 2.0 * img[yp, x]) + img[yp, xp]
                gx = right - left
                gy = bottom - top
                sxx[y, x] = gx * gx
                syy[y, x] = gy * gy
                sxy[y, x] = gx * gy
        for y in range(h):
            ym = _reflect(y - 1, h)
            yp = _reflect(y + 1, h)
            for x in range(w):
                xm = _reflect(x - 1, w)
                xp = _reflect(x + 1, w)
                a = ((((((((sxx[ym, xm] + sxx[ym, x]) + sxx[ym, xp]) + sxx[y, xm]) + sxx[y, x])
                        + sxx[y, xp]) + sxx[yp, xm]) + sxx[yp, x]) + sxx[yp, xp])
                c = ((((((((syy[ym, xm] + syy[ym, x]) + syy[ym, xp]) + syy[y, xm]) + syy[y, x])
                        + syy[y, xp]) + syy[yp, xm]) + syy[yp, x]) + syy[yp, xp])
                b = ((((((((sxy[ym, xm] + sxy[ym, x]) + sxy[ym, xp]) + sxy[y, xm]) + sxy[y, x])
                        + sxy[y, xp]) + sxy[yp, xm]) + sxy[yp, x]) + sxy[yp, xp])
                half_tr = (a + c) * 0.5
                diff = (a - c) * 0.5
                lam = half_tr - sqrt(diff * diff + b * b)
                out[y, x] = lam if lam > 0.0 else 0.0
    return out_arr


def grid_best(const double[:, ::1] resp, Py_ssize_t cell, double threshold):
    cdef Py_ssize_t h = resp.shape[0], w = resp.shape[1]
    cdef Py_ssize_t ny = (h + cell - 1) // cell, nx = (w + cell - 1) // cell
    cdef Py_ssize_t cy, cx, y, x, by, bx, n = 0
    cdef double best, r
    rows_arr = np.empty(ny * nx, dtype=np.int64)
    cols_arr = np.empty(ny * nx, dtype=np.int64)
    vals_arr = np.empty(ny * nx, dtype=np.float64)
    cdef cnp.int64_t[::1] rows = rows_arr
    cdef cnp.int64_t[::1] cols = cols_arr
    cdef double[::1] vals = vals_arr
    with nogil:
        for cy in range(ny):
            for cx in range(nx):
                best = -1.0
                by = -1
                bx = -1
                for y in range(cy * cell, min(cy * cell + cell, h)):
                    for x in range(cx * cell, min(cx * cell + cell, w)):
                        r = resp[y, x]
                        if r > 0.0 and r >= threshold and r > best:
                            best = r
                            by = y
                            bx = x
                if by >= 0:
                    rows[n] = by
                    cols[n] = bx
                    vals[n] = best
                    n += 1
    return rows_arr[:n], cols_arr[:n], vals_arr[:n]


def classify_rules(const cnp.int64_t[::1] ku, const cnp.int64_t[::1] kv,
                   const cnp.uint8_t[:, ::1] union_mask,
                   const double[:, ::1] depth, const cnp.uint8_t[:, ::1] valid,
                   const cnp.int64_t[:, ::1] bboxes, const double[:, ::1] bands):
    """Labels: 0 static, 1 rejected by mask, 2 rejected by depth band."""
    cdef Py_ssize_t n = ku.shape[0], m = bboxes.shape[0]
    cdef Py_ssize_t i, j, u, v
    cdef double z
    labels_arr = np.zeros(n, dtype=np.int8)
    cdef cnp.int8_t[::1] labels = labels_arr
    with nogil:
        for i in range(n):
            u = ku[i]
            v = kv[i]
            if union_mask[v, u]:
                labels[i] = 1
                continue
            if not valid[v, u]:
                continue
            z = depth[v, u]
            for j in range(m):
                if (bboxes[j, 0] <= u <= bboxes[j, 2] and bboxes[j, 1] <= v <= bboxes[j, 3]
                        and bands[j, 0] <= z <= bands[j, 1]):
                    labels[i] = 2
                    break
    return labels_arr


def count_inliers(const double[:, :, ::1] R, const double[:, ::1] t,
                  const double[:, ::1] prev, const double[:, ::1] curr, double thr2):
    """Per hypothesis, number of i with ||prev_i - (R curr_i + t)||^2 <= thr2."""
    cdef Py_ssize_t nb = R.shape[0], n = prev.shape[0]
    cdef Py_ssize_t b, i
    cdef double px, py, pz, dx, dy, dz, cx, cy, cz
    cdef cnp.int64_t acc
    counts_arr = np.zeros(nb, dtype=np.int64)
    cdef cnp.int64_t[::1] counts = counts_arr
    with nogil:
        for b in range(nb):
            acc = 0
            for i in range(n):
                cx = curr[i, 0]
                cy = curr[i, 1]
                cz = curr[i, 2]
                px = ((R[b, 0, 0] * cx + R[b, 0, 1] * cy) + R[b, 0, 2] * cz) + t[b, 0]
                py = ((R[b, 1, 0] * cx + R[b, 1, 1] * cy) + R[b, 1, 2] * cz) + t[b, 1]
                pz = ((R[b, 2, 0] * cx + R[b, 2, 1] * cy) + R[b, 2, 2] * cz) + t[b, 2]
                dx = prev[i, 0] - px
                dy = prev[i, 1] - py
                dz = prev[i, 2] - pz
                if (dx * dx + dy * dy) + dz * dz <= thr2:
                    acc += 1
            counts[b] = acc
    return counts_arr
