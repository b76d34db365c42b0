"""Voxel grid conventions, box dimensions, orientations, and heightmap primitives."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import BoundsError, ItemRejected, PlacementRejected

DEFAULT_RESOLUTION = 0.005

# Axis permutations applied to (w, d, h), in lexicographic order of the
# permutation indices. This order is a protocol constant: orientation index k
# means "oriented dims = (dims[p0], dims[p1], dims[p2])" with p = PERMS[k].
ORIENTATION_PERMS: tuple[tuple[int, int, int], ...] = (
    (0, 1, 2),
    (0, 2, 1),
    (1, 0, 2),
    (1, 2, 0),
    (2, 0, 1),
    (2, 1, 0),
)

N_ORIENTATIONS = len(ORIENTATION_PERMS)


@dataclass(frozen=True)
class GridSpec:
    """Bin dimensions in meters plus the voxel resolution.

    Cell counts are derived by rounding; the metric dims must sit within half
    a cell of an exact multiple of the resolution.
    """

    bin_w: float = 0.6
    bin_d: float = 0.6
    bin_h: float = 0.6
    resolution: float = DEFAULT_RESOLUTION

    def __post_init__(self):
        if self.resolution <= 0:
            raise ValueError("resolution must be positive")
        for name, dim, n in (
            ("bin_w", self.bin_w, self.nx),
            ("bin_d", self.bin_d, self.ny),
            ("bin_h", self.bin_h, self.nz),
        ):
            if n < 1:
                raise ValueError(f"{name} yields no cells at this resolution")
            if abs(n * self.resolution - dim) > self.resolution / 2:
                raise ValueError(f"{name}={dim} is not within half a cell of the grid")

    @property
    def nx(self) -> int:
        return round(self.bin_w / self.resolution)

    @property
    def ny(self) -> int:
        return round(self.bin_d / self.resolution)

    @property
    def nz(self) -> int:
        return round(self.bin_h / self.resolution)

    @property
    def bin_voxels(self) -> int:
        return self.nx * self.ny * self.nz


@dataclass(frozen=True)
class BoxDims:
    """Continuous box dimensions in meters, as drawn from a dataset."""

    w: float
    d: float
    h: float

    def __post_init__(self):
        if min(self.w, self.d, self.h) <= 0:
            raise ValueError("box dimensions must be strictly positive")

    @property
    def volume(self) -> float:
        return self.w * self.d * self.h

    def as_tuple(self) -> tuple[float, float, float]:
        return (self.w, self.d, self.h)


@dataclass(frozen=True)
class GridDims:
    """Box dimensions in whole voxels; produced by snap_dims."""

    w: int
    d: int
    h: int

    def __post_init__(self):
        if min(self.w, self.d, self.h) < 1:
            raise ValueError("grid dimensions must be at least one cell")

    @property
    def volume(self) -> int:
        return self.w * self.d * self.h

    def as_tuple(self) -> tuple[int, int, int]:
        return (self.w, self.d, self.h)

    def oriented(self, orientation: int) -> "GridDims":
        p = ORIENTATION_PERMS[orientation]
        t = self.as_tuple()
        return GridDims(t[p[0]], t[p[1]], t[p[2]])


def _snap_one(dim: float, resolution: float) -> int:
    # ceil with a small slack so exact multiples are not bumped up by float noise
    return max(1, math.ceil(dim / resolution - 1e-9))


def snap_dims(dims: BoxDims, spec: GridSpec) -> GridDims:
    """Discretize metric dims onto the voxel grid, rounding each dim up.

    Rounding up is conservative: the snapped footprint never understates the
    real one. Raises ItemRejected when no orientation fits inside the bin.
    """
    gd = GridDims(
        _snap_one(dims.w, spec.resolution),
        _snap_one(dims.d, spec.resolution),
        _snap_one(dims.h, spec.resolution),
    )
    if not fits_in_some_orientation(gd, spec):
        raise ItemRejected(f"{dims} does not fit the bin in any orientation")
    return gd


def fits_in_some_orientation(gd: GridDims, spec: GridSpec) -> bool:
    return any(
        o.w <= spec.nx and o.d <= spec.ny and o.h <= spec.nz
        for _, o in orientations_of(gd)
    )


def orientations_of(gd: GridDims, dedup: bool = False) -> list[tuple[int, GridDims]]:
    """All six axis permutations of gd as (orientation index, oriented dims).

    With dedup, only the first orientation producing each distinct dims tuple
    is kept (cube -> 1 entry, two equal dims -> 3 entries).
    """
    out: list[tuple[int, GridDims]] = []
    seen: set[tuple[int, int, int]] = set()
    for o in range(N_ORIENTATIONS):
        od = gd.oriented(o)
        if dedup:
            if od.as_tuple() in seen:
                continue
            seen.add(od.as_tuple())
        out.append((o, od))
    return out


@dataclass
class Heightmap:
    """Top-surface height of every bin column, in voxels.

    Mutable only through place_box (which returns a fresh copy); share freely
    across readers, clone before mutating.
    """

    spec: GridSpec
    cells: np.ndarray = field(default=None)  # type: ignore[assignment]

    def __post_init__(self):
        if self.cells is None:
            self.cells = np.zeros((self.spec.nx, self.spec.ny), dtype=np.int32)
        else:
            self.cells = np.asarray(self.cells, dtype=np.int32)
            if self.cells.shape != (self.spec.nx, self.spec.ny):
                raise ValueError("heightmap shape does not match the grid spec")

    def clone(self) -> "Heightmap":
        return Heightmap(self.spec, self.cells.copy())


def _check_window(hm: Heightmap, anchor: tuple[int, int], footprint: tuple[int, int]):
    x, y = anchor
    w, d = footprint
    nx, ny = hm.cells.shape
    if x < 0 or y < 0 or w < 1 or d < 1 or x + w > nx or y + d > ny:
        raise BoundsError(f"window anchor={anchor} footprint={footprint} exits the {nx}x{ny} grid")


def window_max(hm: Heightmap, anchor: tuple[int, int], footprint: tuple[int, int]) -> int:
    """Maximum height over the footprint window; 0 on bare floor."""
    _check_window(hm, anchor, footprint)
    x, y = anchor
    w, d = footprint
    return int(hm.cells[x : x + w, y : y + d].max())


def place_box(hm: Heightmap, anchor: tuple[int, int], gd: GridDims) -> tuple[Heightmap, int]:
    """Rest a box on the window maximum; returns (new heightmap, rest height).

    Every footprint cell is raised to rest + gd.h; a box never tilts into gaps.
    """
    rest = window_max(hm, anchor, (gd.w, gd.d))
    if rest + gd.h > hm.spec.nz:
        raise PlacementRejected(
            f"box of height {gd.h} at rest {rest} exceeds bin height {hm.spec.nz}"
        )
    out = hm.clone()
    x, y = anchor
    out.cells[x : x + gd.w, y : y + gd.d] = rest + gd.h
    return out, rest
