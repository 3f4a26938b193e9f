"""Pure-numpy implementations of the hot kernels.

These are the reference semantics: the compiled twin in _native.pyx must
produce bitwise-identical results (same expression trees, same
accumulation order), so either backend can be used interchangeably
without breaking seeded reproducibility.
"""

from __future__ import annotations

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view


def im2col(x: np.ndarray, kh: int, kw: int, sh: int, sw: int) -> np.ndarray:
    """Gather conv patches of an unpadded (B, C, H, W) input.

    Returns (B, C*kh*kw, oH*oW) with column index c*kh*kw + ky*kw + kx
    and position index oy*oW + ox.
    """
    b, c, h, w = x.shape
    oh = (h - kh) // sh + 1
    ow = (w - kw) // sw + 1
    win = sliding_window_view(x, (kh, kw), axis=(2, 3))[:, :, ::sh, ::sw]
    cols = win.transpose(0, 1, 4, 5, 2, 3)  # (B, C, kh, kw, oH, oW)
    return np.ascontiguousarray(cols).reshape(b, c * kh * kw, oh * ow)


def col2im(
    cols: np.ndarray, c: int, h: int, w: int, kh: int, kw: int, sh: int, sw: int
) -> np.ndarray:
    """Scatter-add of im2col patches back onto the (B, C, H, W) grid.

    Overlapping windows accumulate in fixed (ky, kx) offset order; the
    native kernel replicates that order exactly.
    """
    b = cols.shape[0]
    oh = (h - kh) // sh + 1
    ow = (w - kw) // sw + 1
    g = cols.reshape(b, c, kh, kw, oh, ow)
    x = np.zeros((b, c, h, w), dtype=cols.dtype)
    for ky in range(kh):
        for kx in range(kw):
            x[:, :, ky : ky + sh * oh : sh, kx : kx + sw * ow : sw] += g[:, :, ky, kx]
    return x


def _edge_include(dx: float, dy: float) -> bool:
    # Boundary tie-break for a pixel center exactly on an edge, with
    # d = v - u the edge direction: of the two triangles sharing the
    # edge, exactly one includes the pixel.
    return dy > 0.0 or (dy == 0.0 and dx < 0.0)


def _triangle_setup(pts: np.ndarray, tri):
    """Vertices in positive orientation plus twice the signed area.

    Returns None for triangles that are degenerate on screen; the last
    element tells whether b and c were swapped to fix the orientation.
    """
    ax, ay = pts[tri[0]]
    bx, by = pts[tri[1]]
    cx, cy = pts[tri[2]]
    area2 = (bx - ax) * (cy - ay) - (by - ay) * (cx - ax)
    if area2 == 0.0:
        return None
    swapped = area2 < 0.0
    if swapped:
        bx, by, cx, cy = cx, cy, bx, by
        area2 = -area2
    return ax, ay, bx, by, cx, cy, area2, swapped


def _pixel_range(lo: float, hi: float, n: int) -> tuple[int, int]:
    # Pixel i has center i + 0.5; bound the centers inside [lo, hi]
    i0 = max(0, int(np.ceil(lo - 0.5)))
    i1 = min(n - 1, int(np.floor(hi - 0.5)))
    return i0, i1


def _coverage(setup, x0: int, x1: int, y0: int, y1: int):
    ax, ay, bx, by, cx, cy, area2, _ = setup
    px = np.arange(x0, x1 + 1, dtype=np.float64) + 0.5
    py = (np.arange(y0, y1 + 1, dtype=np.float64) + 0.5)[:, None]
    w0 = (cx - bx) * (py - by) - (cy - by) * (px - bx)
    w1 = (ax - cx) * (py - cy) - (ay - cy) * (px - cx)
    w2 = (bx - ax) * (py - ay) - (by - ay) * (px - ax)
    inside = (
        ((w0 > 0.0) | ((w0 == 0.0) & _edge_include(cx - bx, cy - by)))
        & ((w1 > 0.0) | ((w1 == 0.0) & _edge_include(ax - cx, ay - cy)))
        & ((w2 > 0.0) | ((w2 == 0.0) & _edge_include(bx - ax, by - ay)))
    )
    return inside, w0, w1, w2


def fill_mask(pts: np.ndarray, tris: np.ndarray, width: int, height: int) -> np.ndarray:
    """Rasterize triangle coverage: a pixel is set iff its center lies
    inside some triangle (boundary ties resolved by _edge_include)."""
    out = np.zeros((height, width), dtype=np.uint8)
    for tri in tris:
        setup = _triangle_setup(pts, tri)
        if setup is None:
            continue
        ax, ay, bx, by, cx, cy = setup[:6]
        x0, x1 = _pixel_range(min(ax, bx, cx), max(ax, bx, cx), width)
        y0, y1 = _pixel_range(min(ay, by, cy), max(ay, by, cy), height)
        if x0 > x1 or y0 > y1:
            continue
        inside, _, _, _ = _coverage(setup, x0, x1, y0, y1)
        region = out[y0 : y1 + 1, x0 : x1 + 1]
        region[inside] = 1
    return out


def fill_shaded(
    pts: np.ndarray,
    z: np.ndarray,
    tris: np.ndarray,
    shade: np.ndarray,
    width: int,
    height: int,
) -> np.ndarray:
    """Z-buffered flat-shaded rasterization.

    z holds per-vertex camera depths (affinely interpolated across the
    screen triangle); shade holds one 8-bit intensity per triangle.
    Depth ties keep the earlier triangle.
    """
    out = np.zeros((height, width), dtype=np.uint8)
    zbuf = np.full((height, width), np.inf, dtype=np.float64)
    for t, tri in enumerate(tris):
        setup = _triangle_setup(pts, tri)
        if setup is None:
            continue
        ax, ay, bx, by, cx, cy, area2, swapped = setup
        if swapped:
            za, zb, zc = z[tri[0]], z[tri[2]], z[tri[1]]
        else:
            za, zb, zc = z[tri[0]], z[tri[1]], z[tri[2]]
        x0, x1 = _pixel_range(min(ax, bx, cx), max(ax, bx, cx), width)
        y0, y1 = _pixel_range(min(ay, by, cy), max(ay, by, cy), height)
        if x0 > x1 or y0 > y1:
            continue
        inside, w0, w1, w2 = _coverage(setup, x0, x1, y0, y1)
        depth = (w0 * za + w1 * zb + w2 * zc) / area2
        zregion = zbuf[y0 : y1 + 1, x0 : x1 + 1]
        win = inside & (depth < zregion)
        zregion[win] = depth[win]
        out[y0 : y1 + 1, x0 : x1 + 1][win] = shade[t]
    return out
