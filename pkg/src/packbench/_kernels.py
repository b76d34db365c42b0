"""Numba-compiled inner loops for stable-map evaluation.

All geometry is exact integer arithmetic in doubled coordinates: a support
cell (i, j) becomes the point (2i, 2j) and the footprint center
((w-1)/2, (d-1)/2) becomes (w-1, d-1).
"""
from __future__ import annotations

import numpy as np
from numba import njit, prange


@njit(cache=True)
def _center_in_support_hull(px, py, n, cx, cy):
    """Monotone-chain hull of n lex-sorted points, then inclusive center test.

    Degenerate hulls (fewer than 3 vertices after collinear removal) are
    always rejected.
    """
    if n < 3:
        return False
    hx = np.empty(2 * n + 1, np.int64)
    hy = np.empty(2 * n + 1, np.int64)
    k = 0
    for i in range(n):
        while k >= 2 and (hx[k - 1] - hx[k - 2]) * (py[i] - hy[k - 2]) - (
            hy[k - 1] - hy[k - 2]
        ) * (px[i] - hx[k - 2]) <= 0:
            k -= 1
        hx[k] = px[i]
        hy[k] = py[i]
        k += 1
    lo = k + 1
    for i in range(n - 2, -1, -1):
        while k >= lo and (hx[k - 1] - hx[k - 2]) * (py[i] - hy[k - 2]) - (
            hy[k - 1] - hy[k - 2]
        ) * (px[i] - hx[k - 2]) <= 0:
            k -= 1
        hx[k] = px[i]
        hy[k] = py[i]
        k += 1
    m = k - 1  # closed chain repeats the first vertex
    if m < 3:
        return False
    for i in range(m):
        j = i + 1
        if j == m:
            j = 0
        if (hx[j] - hx[i]) * (cy - hy[i]) - (hy[j] - hy[i]) * (cx - hx[i]) < 0:
            return False
    return True


@njit(cache=True, parallel=True)
def stable_map_kernel(hm, em, wmax, w, d, h, nz, use_empty):
    """Stable action map for one oriented box over all in-bounds anchors.

    hm, em: full int32 grids; wmax: per-anchor window maxima of shape
    (nx-w+1, ny-d+1); use_empty selects the grounded-support variant.
    """
    nx, ny = hm.shape
    ax = nx - w + 1
    ay = ny - d + 1
    out = np.zeros((nx, ny), np.bool_)
    if ax <= 0 or ay <= 0:
        return out
    cx = w - 1
    cy = d - 1
    for x in prange(ax):
        # only the min/max support column per row can be a hull vertex
        px = np.empty(2 * w, np.int64)
        py = np.empty(2 * w, np.int64)
        for y in range(ay):
            m = wmax[x, y]
            if m + h > nz:
                continue
            if m == 0:
                out[x, y] = True
                continue
            n = 0
            for i in range(w):
                jlo = -1
                jhi = -1
                for j in range(d):
                    if hm[x + i, y + j] == m and (not use_empty or em[x + i, y + j] == 0):
                        if jlo < 0:
                            jlo = j
                        jhi = j
                if jlo >= 0:
                    px[n] = 2 * i
                    py[n] = 2 * jlo
                    n += 1
                    if jhi != jlo:
                        px[n] = 2 * i
                        py[n] = 2 * jhi
                        n += 1
            out[x, y] = _center_in_support_hull(px, py, n, cx, cy)
    return out
