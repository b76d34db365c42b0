"""Item-sequence generation and persistence (RS random and CUT perfectly-packable)."""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .errors import SequenceParseError
from .geometry import BoxDims, GridSpec

SEQ_FORMAT = "PBSEQ v1"

KINDS = ("rs", "cut1", "cut2")


@dataclass(frozen=True)
class SequenceSpec:
    kind: str
    seed: int
    count: int
    min_dim: float = 0.03
    max_dim: float = 0.3
    grid: GridSpec = field(default_factory=GridSpec)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown sequence kind {self.kind!r}")
        largest = max(self.grid.bin_w, self.grid.bin_d, self.grid.bin_h)
        if not (0 < self.min_dim <= self.max_dim <= largest + 1e-12):
            raise ValueError("need 0 < min_dim <= max_dim <= largest bin dimension")
        if self.count < 1:
            raise ValueError("count must be positive")


@dataclass
class ItemSequence:
    spec: SequenceSpec
    items: list[BoxDims]
    # voxel positions (x, y, z) of each piece inside the bin; CUT kinds only
    positions: list[tuple[int, int, int]] | None = None

    def __len__(self) -> int:
        return len(self.items)

    def volumes(self) -> np.ndarray:
        return np.array([b.volume for b in self.items])


def _voxel_bounds(spec: SequenceSpec) -> tuple[int, int]:
    res = spec.grid.resolution
    lo = max(1, math.ceil(spec.min_dim / res - 1e-9))
    hi = math.floor(spec.max_dim / res + 1e-9)
    if lo > hi:
        raise ValueError("dim bounds contain no grid-aligned size")
    return lo, hi


def gen_rs(spec: SequenceSpec) -> ItemSequence:
    """Random sequence: each dim i.i.d. uniform over grid-aligned sizes in bounds."""
    if spec.kind != "rs":
        raise ValueError("gen_rs requires kind 'rs'")
    lo, hi = _voxel_bounds(spec)
    rng = np.random.default_rng(spec.seed)
    res = spec.grid.resolution
    sizes = rng.integers(lo, hi + 1, size=(spec.count, 3))
    items = [BoxDims(w * res, d * res, h * res) for w, d, h in sizes]
    return ItemSequence(spec, items)


@dataclass
class _Piece:
    x: int
    y: int
    z: int
    dims: tuple[int, int, int]


def _cut_pieces(spec: SequenceSpec, rng: np.random.Generator) -> list[_Piece]:
    lo, hi = _voxel_bounds(spec)
    g = spec.grid
    pieces = [_Piece(0, 0, 0, (g.nx, g.ny, g.nz))]

    def cuttable_axes(p: _Piece, oversize_only: bool) -> list[int]:
        return [
            a
            for a in range(3)
            if (p.dims[a] > hi if oversize_only else True) and p.dims[a] >= 2 * lo
        ]

    def split(idx: int, axis: int):
        p = pieces[idx]
        n = p.dims[axis]
        at = int(rng.integers(lo, n - lo + 1))
        d1 = list(p.dims)
        d2 = list(p.dims)
        d1[axis] = at
        d2[axis] = n - at
        pos2 = [p.x, p.y, p.z]
        pos2[axis] += at
        pieces[idx] = _Piece(p.x, p.y, p.z, tuple(d1))
        pieces.append(_Piece(pos2[0], pos2[1], pos2[2], tuple(d2)))

    # first bring every piece within the upper bound
    while True:
        todo = [i for i, p in enumerate(pieces) if max(p.dims) > hi]
        if not todo:
            break
        for i in todo:
            axes = cuttable_axes(pieces[i], oversize_only=True)
            if not axes:
                raise ValueError("bounds make guillotine cutting impossible")
            split(i, axes[int(rng.integers(len(axes)))])

    # then keep cutting random pieces until the requested count is reached
    while len(pieces) < spec.count:
        options = [i for i, p in enumerate(pieces) if cuttable_axes(p, False)]
        if not options:
            raise ValueError(
                f"cannot reach count {spec.count}: only {len(pieces)} pieces fit the bounds"
            )
        i = options[int(rng.integers(len(options)))]
        axes = cuttable_axes(pieces[i], oversize_only=False)
        split(i, axes[int(rng.integers(len(axes)))])
    return pieces


def _beneath(a: _Piece, b: _Piece) -> bool:
    """True when piece a lies (not necessarily directly) under piece b's footprint."""
    if a.z + a.dims[2] > b.z:
        return False
    ox = min(a.x + a.dims[0], b.x + b.dims[0]) - max(a.x, b.x)
    oy = min(a.y + a.dims[1], b.y + b.dims[1]) - max(a.y, b.y)
    return ox > 0 and oy > 0


def gen_cut(spec: SequenceSpec) -> ItemSequence:
    """Guillotine-cut the bin into pieces whose volumes sum to the bin volume.

    cut1 orders pieces top-down (decreasing rest height); cut2 emits a random
    stacking-dependency order: every piece appears after all pieces beneath it.
    """
    if spec.kind not in ("cut1", "cut2"):
        raise ValueError("gen_cut requires kind 'cut1' or 'cut2'")
    rng = np.random.default_rng(spec.seed)
    pieces = _cut_pieces(spec, rng)

    if spec.kind == "cut1":
        order = sorted(range(len(pieces)), key=lambda i: (-pieces[i].z, pieces[i].x, pieces[i].y))
    else:
        # random topological sort of the beneath relation
        n = len(pieces)
        deps = [set() for _ in range(n)]
        for i in range(n):
            for j in range(n):
                if i != j and _beneath(pieces[i], pieces[j]):
                    deps[j].add(i)
        order = []
        ready = sorted(i for i in range(n) if not deps[i])
        remaining = set(range(n)) - set(ready)
        while ready:
            k = ready.pop(int(rng.integers(len(ready))))
            order.append(k)
            newly = [j for j in remaining if deps[j] <= set(order)]
            for j in sorted(newly):
                remaining.discard(j)
                ready.append(j)
        if len(order) != n:
            raise AssertionError("dependency cycle in cut layout")

    res = spec.grid.resolution
    items = [
        BoxDims(pieces[i].dims[0] * res, pieces[i].dims[1] * res, pieces[i].dims[2] * res)
        for i in order
    ]
    positions = [(pieces[i].x, pieces[i].y, pieces[i].z) for i in order]
    # cutting oversize pieces can overshoot the requested count; record reality
    spec = replace(spec, count=len(items))
    return ItemSequence(spec, items, positions)


def generate(spec: SequenceSpec) -> ItemSequence:
    return gen_rs(spec) if spec.kind == "rs" else gen_cut(spec)


def save_sequence(seq: ItemSequence, path: str | Path) -> None:
    s = seq.spec
    g = s.grid
    header = {
        "format": SEQ_FORMAT,
        "kind": s.kind,
        "seed": s.seed,
        "count": len(seq),
        "min_dim": s.min_dim,
        "max_dim": s.max_dim,
        "bin": [g.bin_w, g.bin_d, g.bin_h],
        "resolution": g.resolution,
    }
    with open(path, "w") as f:
        f.write(json.dumps(header) + "\n")
        for i, b in enumerate(seq.items):
            rec: dict = {"w": b.w, "d": b.d, "h": b.h}
            if seq.positions is not None:
                rec["pos"] = list(seq.positions[i])
            f.write(json.dumps(rec) + "\n")


def load_sequence(path: str | Path) -> ItemSequence:
    with open(path) as f:
        lines = f.read().splitlines()
    if not lines:
        raise SequenceParseError("empty file", 1)
    try:
        header = json.loads(lines[0])
    except json.JSONDecodeError as e:
        raise SequenceParseError(f"bad header: {e}", 1) from e
    if header.get("format") != SEQ_FORMAT:
        raise SequenceParseError(f"expected {SEQ_FORMAT!r} header, got {header.get('format')!r}", 1)
    if header.get("kind") not in KINDS:
        raise SequenceParseError(f"unknown kind {header.get('kind')!r}", 1)
    grid = GridSpec(*header["bin"], resolution=header["resolution"])
    spec = SequenceSpec(
        kind=header["kind"],
        seed=header["seed"],
        count=header["count"],
        min_dim=header["min_dim"],
        max_dim=header["max_dim"],
        grid=grid,
    )
    items: list[BoxDims] = []
    positions: list[tuple[int, int, int]] = []
    for ln, raw in enumerate(lines[1:], start=2):
        if not raw.strip():
            continue
        try:
            rec = json.loads(raw)
            items.append(BoxDims(rec["w"], rec["d"], rec["h"]))
            if "pos" in rec:
                positions.append(tuple(rec["pos"]))
        except (json.JSONDecodeError, KeyError, TypeError, ValueError) as e:
            raise SequenceParseError(str(e), ln) from e
    if len(items) != header["count"]:
        raise SequenceParseError(
            f"truncated file: header promises {header['count']} items, found {len(items)}"
        )
    if positions and len(positions) != len(items):
        raise SequenceParseError("positions present on only some items")
    return ItemSequence(spec, items, positions or None)
