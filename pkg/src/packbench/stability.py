"""Stable-placement detection (convexHull-1 / convexHull-alpha) and empty-map accounting.

The bin is judged per anchor: a box is stable when the footprint center lies
inside the convex hull of the window's highest support columns; the alpha
variant first discards columns that sit above trapped gaps (nonzero empty-map
value), so support must be transmitted straight to the ground.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum

import numpy as np
from scipy.ndimage import maximum_filter1d

from . import _kernels
from .errors import BoundsError
from .geometry import GridDims, GridSpec, Heightmap, window_max


class CheckerMode(str, Enum):
    CH1 = "ch1"
    CHA = "cha"


@dataclass
class EmptyMap:
    """Per-column accumulated trapped-gap height in voxels. Never decreases."""

    spec: GridSpec
    cells: np.ndarray = field(default=None)  # type: ignore[assignment]

    def __post_init__(self):
        if self.cells is None:
            self.cells = np.zeros((self.spec.nx, self.spec.ny), dtype=np.int32)
        else:
            self.cells = np.asarray(self.cells, dtype=np.int32)
            if self.cells.shape != (self.spec.nx, self.spec.ny):
                raise ValueError("empty map shape does not match the grid spec")

    def clone(self) -> "EmptyMap":
        return EmptyMap(self.spec, self.cells.copy())

    def total_gap_voxels(self) -> int:
        return int(self.cells.sum(dtype=np.int64))


@dataclass(frozen=True)
class HullPolygon:
    """Convex polygon over window-local integer coordinates, CCW order.

    Hulls with fewer than three vertices (point or collinear segment) are
    degenerate and count as unstable support.
    """

    vertices: tuple[tuple[int, int], ...]

    @property
    def degenerate(self) -> bool:
        return len(self.vertices) < 3


def support_points(window: np.ndarray) -> list[tuple[int, int]]:
    """Window-local cells equal to the window maximum (the contact columns)."""
    win = np.asarray(window)
    m = win.max()
    if m <= 0:
        raise ValueError("support points are undefined for a bare-floor window")
    xs, ys = np.nonzero(win == m)
    return [(int(a), int(b)) for a, b in zip(xs, ys)]


def filter_grounded(points: list[tuple[int, int]], empty_window: np.ndarray) -> list[tuple[int, int]]:
    """Keep only support cells whose column carries no trapped gap."""
    ew = np.asarray(empty_window)
    return [p for p in points if ew[p] == 0]


def convex_hull(points: list[tuple[int, int]]) -> HullPolygon:
    """Monotone-chain convex hull; collinear interior points are excluded."""
    pts = sorted(set((int(x), int(y)) for x, y in points))
    if len(pts) <= 2:
        return HullPolygon(tuple(pts))

    def chain(seq):
        out: list[tuple[int, int]] = []
        for p in seq:
            while len(out) >= 2 and (
                (out[-1][0] - out[-2][0]) * (p[1] - out[-2][1])
                - (out[-1][1] - out[-2][1]) * (p[0] - out[-2][0])
            ) <= 0:
                out.pop()
            out.append(p)
        return out

    lower = chain(pts)
    upper = chain(reversed(pts))
    verts = lower[:-1] + upper[:-1]
    if len(verts) < 3:
        verts = lower if len(lower) >= len(upper) else upper
        return HullPolygon(tuple(verts[:2]))
    return HullPolygon(tuple(verts))


def center_in_hull(hull: HullPolygon, center: tuple[float, float]) -> bool:
    """Inclusive point-in-convex-polygon test; exact via doubled integers.

    Degenerate hulls are always judged outside (knife-edge support is not
    stable). Center coordinates must be multiples of one half.
    """
    if hull.degenerate:
        return False
    cx = round(2 * center[0])
    cy = round(2 * center[1])
    v = hull.vertices
    for i in range(len(v)):
        ax, ay = v[i]
        bx, by = v[(i + 1) % len(v)]
        if (2 * bx - 2 * ax) * (cy - 2 * ay) - (2 * by - 2 * ay) * (cx - 2 * ax) < 0:
            return False
    return True


def window_center(w: int, d: int) -> tuple[float, float]:
    """Geometric center of a w x d footprint in window-local cell coordinates."""
    return ((w - 1) / 2, (d - 1) / 2)


def anchor_window_max(cells: np.ndarray, w: int, d: int) -> np.ndarray:
    """Window maximum for every anchor; output shape (nx-w+1, ny-d+1)."""
    nx, ny = cells.shape
    ax, ay = nx - w + 1, ny - d + 1
    if ax <= 0 or ay <= 0:
        return np.zeros((max(ax, 0), max(ay, 0)), dtype=cells.dtype)
    m = maximum_filter1d(cells, w, axis=0, mode="constant", cval=0)
    m = m[w // 2 : w // 2 + ax, :]
    m = maximum_filter1d(m, d, axis=1, mode="constant", cval=0)
    return np.ascontiguousarray(m[:, d // 2 : d // 2 + ay])


def anchor_window_sum(cells: np.ndarray, w: int, d: int) -> np.ndarray:
    """Window sum for every anchor (int64); output shape (nx-w+1, ny-d+1)."""
    nx, ny = cells.shape
    ax, ay = nx - w + 1, ny - d + 1
    if ax <= 0 or ay <= 0:
        return np.zeros((max(ax, 0), max(ay, 0)), dtype=np.int64)
    c = np.zeros((nx + 1, ny + 1), dtype=np.int64)
    np.cumsum(cells, axis=0, dtype=np.int64, out=c[1:, 1:])
    np.cumsum(c[1:, 1:], axis=1, out=c[1:, 1:])
    return c[w:, d:] - c[:ax, d:] - c[w:, :ay] + c[:ax, :ay]


def stable_action_map(
    hm: Heightmap, em: EmptyMap, gd: GridDims, mode: CheckerMode = CheckerMode.CHA
) -> np.ndarray:
    """Boolean grid: True where the oriented box rests stably at that anchor.

    Anchors whose window exits the grid are False. A pure function of its
    arguments; evaluation is parallel over anchors.
    """
    nx, ny = hm.cells.shape
    if gd.w > nx or gd.d > ny:
        return np.zeros((nx, ny), dtype=bool)
    wmax = anchor_window_max(hm.cells, gd.w, gd.d)
    return _kernels.stable_map_kernel(
        hm.cells,
        em.cells,
        wmax.astype(np.int32),
        gd.w,
        gd.d,
        gd.h,
        hm.spec.nz,
        mode == CheckerMode.CHA,
    )


def stable_action_map_reference(
    hm: Heightmap, em: EmptyMap, gd: GridDims, mode: CheckerMode = CheckerMode.CHA
) -> np.ndarray:
    """Slow per-anchor evaluation through the public ops; test oracle for the kernel."""
    nx, ny = hm.cells.shape
    out = np.zeros((nx, ny), dtype=bool)
    if gd.w > nx or gd.d > ny:
        return out
    center = window_center(gd.w, gd.d)
    for x in range(nx - gd.w + 1):
        for y in range(ny - gd.d + 1):
            win = hm.cells[x : x + gd.w, y : y + gd.d]
            m = int(win.max())
            if m + gd.h > hm.spec.nz:
                continue
            if m == 0:
                out[x, y] = True
                continue
            pf = support_points(win)
            if mode == CheckerMode.CHA:
                pf = filter_grounded(pf, em.cells[x : x + gd.w, y : y + gd.d])
            out[x, y] = center_in_hull(convex_hull(pf), center)
    return out


def update_empty_map(
    hm: Heightmap, em: EmptyMap, anchor: tuple[int, int], gd: GridDims
) -> EmptyMap:
    """Accumulate the gaps a placement traps beneath itself.

    Must be called with the pre-placement heightmap: every footprint cell
    gains (window max - its height).
    """
    rest = window_max(hm, anchor, (gd.w, gd.d))
    x, y = anchor
    out = em.clone()
    out.cells[x : x + gd.w, y : y + gd.d] += rest - hm.cells[x : x + gd.w, y : y + gd.d]
    return out
