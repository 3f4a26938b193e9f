# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled twin of _fallback.

Must stay bitwise-identical to the numpy implementations: same
expression trees (the build disables FP contraction) and the same
accumulation order in col2im.
"""

import numpy as np

cimport numpy as cnp
from libc.math cimport ceil, floor, INFINITY

cnp.import_array()


def im2col(cnp.ndarray x_in, int kh, int kw, int sh, int sw):
    """Gather conv patches of an unpadded (B, C, H, W) float64 input."""
    cdef double[:, :, :, ::1] x = np.ascontiguousarray(x_in, dtype=np.float64)
    cdef Py_ssize_t b = x.shape[0], c = x.shape[1], h = x.shape[2], w = x.shape[3]
    cdef Py_ssize_t oh = (h - kh) // sh + 1
    cdef Py_ssize_t ow = (w - kw) // sw + 1
    out_arr = np.empty((b, c * kh * kw, oh * ow), dtype=np.float64)
    cdef double[:, :, ::1] out = out_arr
    cdef Py_ssize_t bi, ci, ky, kx, oy, ox, row
    for bi in range(b):
        for ci in range(c):
            for ky in range(kh):
                for kx in range(kw):
                    row = (ci * kh + ky) * kw + kx
                    for oy in range(oh):
                        for ox in range(ow):
                            out[bi, row, oy * ow + ox] = x[bi, ci, oy * sh + ky, ox * sw + kx]
    return out_arr


def col2im(cnp.ndarray cols_in, int c, int h, int w, int kh, int kw, int sh, int sw):
    """Scatter-add patches back onto the grid, (ky, kx) offset-major."""
    cdef double[:, :, ::1] cols = np.ascontiguousarray(cols_in, dtype=np.float64)
    cdef Py_ssize_t b = cols.shape[0]
    cdef Py_ssize_t oh = (h - kh) // sh + 1
    cdef Py_ssize_t ow = (w - kw) // sw + 1
    x_arr = np.zeros((b, c, h, w), dtype=np.float64)
    cdef double[:, :, :, ::1] x = x_arr
    cdef Py_ssize_t bi, ci, ky, kx, oy, ox, row
    for ky in range(kh):
        for kx in range(kw):
            for bi in range(b):
                for ci in range(c):
                    row = (ci * kh + ky) * kw + kx
                    for oy in range(oh):
                        for ox in range(ow):
                            x[bi, ci, oy * sh + ky, ox * sw + kx] += cols[bi, row, oy * ow + ox]
    return x_arr


cdef inline bint _edge_include(double dx, double dy) noexcept:
    return dy > 0.0 or (dy == 0.0 and dx < 0.0)


cdef inline double _fmin3(double a, double b, double c) noexcept:
    cdef double m = a
    if b < m:
        m = b
    if c < m:
        m = c
    return m


cdef inline double _fmax3(double a, double b, double c) noexcept:
    cdef double m = a
    if b > m:
        m = b
    if c > m:
        m = c
    return m


cdef inline bint _bbox(double ax, double bx, double cx, int n,
                       Py_ssize_t* lo, Py_ssize_t* hi) noexcept:
    # Clamp in double space before the integer cast so far-out-of-frame
    # coordinates cannot overflow the cast.
    cdef double l = ceil(_fmin3(ax, bx, cx) - 0.5)
    cdef double h = floor(_fmax3(ax, bx, cx) - 0.5)
    if l < 0.0:
        l = 0.0
    if h > n - 1.0:
        h = n - 1.0
    if l > h:
        return False
    lo[0] = <Py_ssize_t>l
    hi[0] = <Py_ssize_t>h
    return True


def fill_mask(cnp.ndarray pts_in, cnp.ndarray tris_in, int width, int height):
    """Triangle-coverage rasterization; semantics of _fallback.fill_mask."""
    cdef double[:, ::1] pts = np.ascontiguousarray(pts_in, dtype=np.float64)
    cdef long long[:, ::1] tris = np.ascontiguousarray(tris_in, dtype=np.int64)
    out_arr = np.zeros((height, width), dtype=np.uint8)
    cdef unsigned char[:, ::1] out = out_arr
    cdef Py_ssize_t t, i, j, x0, x1, y0, y1
    cdef double ax, ay, bx, by, cx, cy, area2, px, py, w0, w1, w2
    cdef bint in0, in1, in2
    for t in range(tris.shape[0]):
        ax = pts[tris[t, 0], 0]; ay = pts[tris[t, 0], 1]
        bx = pts[tris[t, 1], 0]; by = pts[tris[t, 1], 1]
        cx = pts[tris[t, 2], 0]; cy = pts[tris[t, 2], 1]
        area2 = (bx - ax) * (cy - ay) - (by - ay) * (cx - ax)
        if area2 == 0.0:
            continue
        if area2 < 0.0:
            px = bx; bx = cx; cx = px
            py = by; by = cy; cy = py
        if not _bbox(ax, bx, cx, width, &x0, &x1):
            continue
        if not _bbox(ay, by, cy, height, &y0, &y1):
            continue
        in0 = _edge_include(cx - bx, cy - by)
        in1 = _edge_include(ax - cx, ay - cy)
        in2 = _edge_include(bx - ax, by - ay)
        for i in range(y0, y1 + 1):
            py = i + 0.5
            for j in range(x0, x1 + 1):
                px = j + 0.5
                w0 = (cx - bx) * (py - by) - (cy - by) * (px - bx)
                w1 = (ax - cx) * (py - cy) - (ay - cy) * (px - cx)
                w2 = (bx - ax) * (py - ay) - (by - ay) * (px - ax)
                if (w0 > 0.0 or (w0 == 0.0 and in0)) and \
                   (w1 > 0.0 or (w1 == 0.0 and in1)) and \
                   (w2 > 0.0 or (w2 == 0.0 and in2)):
                    out[i, j] = 1
    return out_arr


def fill_shaded(cnp.ndarray pts_in, cnp.ndarray z_in, cnp.ndarray tris_in,
                cnp.ndarray shade_in, int width, int height):
    """Z-buffered flat shading; semantics of _fallback.fill_shaded."""
    cdef double[:, ::1] pts = np.ascontiguousarray(pts_in, dtype=np.float64)
    cdef double[::1] z = np.ascontiguousarray(z_in, dtype=np.float64)
    cdef long long[:, ::1] tris = np.ascontiguousarray(tris_in, dtype=np.int64)
    cdef unsigned char[::1] shade = np.ascontiguousarray(shade_in, dtype=np.uint8)
    out_arr = np.zeros((height, width), dtype=np.uint8)
    zbuf_arr = np.full((height, width), np.inf, dtype=np.float64)
    cdef unsigned char[:, ::1] out = out_arr
    cdef double[:, ::1] zbuf = zbuf_arr
    cdef Py_ssize_t t, i, j, x0, x1, y0, y1
    cdef double ax, ay, bx, by, cx, cy, area2, px, py, w0, w1, w2
    cdef double za, zb, zc, depth, tmp
    cdef bint in0, in1, in2
    for t in range(tris.shape[0]):
        ax = pts[tris[t, 0], 0]; ay = pts[tris[t, 0], 1]
        bx = pts[tris[t, 1], 0]; by = pts[tris[t, 1], 1]
        cx = pts[tris[t, 2], 0]; cy = pts[tris[t, 2], 1]
        za = z[tris[t, 0]]; zb = z[tris[t, 1]]; zc = z[tris[t, 2]]
        area2 = (bx - ax) * (cy - ay) - (by - ay) * (cx - ax)
        if area2 == 0.0:
            continue
        if area2 < 0.0:
            tmp = bx; bx = cx; cx = tmp
            tmp = by; by = cy; cy = tmp
            tmp = zb; zb = zc; zc = tmp
            area2 = -area2
        if not _bbox(ax, bx, cx, width, &x0, &x1):
            continue
        if not _bbox(ay, by, cy, height, &y0, &y1):
            continue
        in0 = _edge_include(cx - bx, cy - by)
        in1 = _edge_include(ax - cx, ay - cy)
        in2 = _edge_include(bx - ax, by - ay)
        for i in range(y0, y1 + 1):
            py = i + 0.5
            for j in range(x0, x1 + 1):
                px = j + 0.5
                w0 = (cx - bx) * (py - by) - (cy - by) * (px - bx)
                w1 = (ax - cx) * (py - cy) - (ay - cy) * (px - cx)
                w2 = (bx - ax) * (py - ay) - (by - ay) * (px - ax)
                if (w0 > 0.0 or (w0 == 0.0 and in0)) and \
                   (w1 > 0.0 or (w1 == 0.0 and in1)) and \
                   (w2 > 0.0 or (w2 == 0.0 and in2)):
                    depth = (w0 * za + w1 * zb + w2 * zc) / area2
                    if depth < zbuf[i, j]:
                        zbuf[i, j] = depth
                        out[i, j] = shade[t]
    return out_arr
