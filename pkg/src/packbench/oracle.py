"""Ground-truth stability judge: static equilibrium of stacked rigid boxes.

Each placement is judged by searching for non-negative vertical contact
forces (at the four corners of every support-overlap rectangle) that balance
every box's weight and its moments about both horizontal axes. Feasible means
stable; anything degenerate is conservatively unstable.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import linprog

from .errors import SceneCorruption
from .geometry import GridDims, GridSpec

VERDICT_FORMAT = "PBVERDICT v1"

GROUND = -1

# feasibility slack below this fraction of the (normalized) total weight is noise
_SLACK_TOL = 1e-7


@dataclass(frozen=True)
class PlacedBox:
    index: int
    x: int
    y: int
    z: int  # bottom height in voxels
    gd: GridDims
    density: float = 1.0

    @property
    def top(self) -> int:
        return self.z + self.gd.h

    @property
    def mass(self) -> float:
        return self.density * self.gd.volume

    @property
    def com(self) -> tuple[float, float, float]:
        return (self.x + self.gd.w / 2, self.y + self.gd.d / 2, self.z + self.gd.h / 2)

    def footprint(self) -> tuple[int, int, int, int]:
        return (self.x, self.x + self.gd.w, self.y, self.y + self.gd.d)


@dataclass(frozen=True)
class Contact:
    """Support contact: `below` carries `above` over a horizontal rectangle."""

    below: int  # box index or GROUND
    above: int
    x0: float
    x1: float
    y0: float
    y1: float

    def corners(self) -> list[tuple[float, float]]:
        return [(self.x0, self.y0), (self.x0, self.y1), (self.x1, self.y0), (self.x1, self.y1)]


@dataclass
class ContactGraph:
    boxes: list[PlacedBox]
    contacts: list[Contact] = field(default_factory=list)


@dataclass(frozen=True)
class StabilityVerdict:
    stable: bool
    first_infeasible: int | None = None


def _overlap(a: PlacedBox, b: PlacedBox) -> tuple[float, float, float, float] | None:
    x0 = max(a.x, b.x)
    x1 = min(a.x + a.gd.w, b.x + b.gd.w)
    y0 = max(a.y, b.y)
    y1 = min(a.y + a.gd.d, b.y + b.gd.d)
    if x1 <= x0 or y1 <= y0:
        return None
    return (x0, x1, y0, y1)


def build_contacts(boxes: list[PlacedBox]) -> ContactGraph:
    """Extract support contacts; boxes must come from flat-rest placements."""
    graph = ContactGraph(list(boxes))
    for i, a in enumerate(boxes):
        for b in boxes[i + 1 :]:
            rect = _overlap(a, b)
            if rect is None:
                continue
            if a.z < b.top and b.z < a.top:
                raise SceneCorruption(f"boxes {a.index} and {b.index} interpenetrate")
            lowbox, highbox = (a, b) if a.top <= b.z else (b, a)
            if lowbox.top == highbox.z:
                graph.contacts.append(Contact(lowbox.index, highbox.index, *rect))
    for b in boxes:
        if b.z == 0:
            x0, x1, y0, y1 = b.footprint()
            graph.contacts.append(Contact(GROUND, b.index, x0, x1, y0, y1))
    return graph


def equilibrium_feasible(graph: ContactGraph) -> StabilityVerdict:
    """Linear feasibility of force and moment balance for every box.

    Solved in phase-1 form (minimize total constraint slack); verdict is
    stable iff the residual is zero up to solver noise. Masses are normalized
    first, so verdicts are invariant under global mass scaling by construction.
    """
    boxes = graph.boxes
    if not boxes:
        return StabilityVerdict(True)
    total_mass = sum(b.mass for b in boxes)
    if total_mass <= 0:
        return StabilityVerdict(False, boxes[0].index)
    scale = len(boxes) / total_mass

    row_of = {b.index: 3 * k for k, b in enumerate(boxes)}
    coms = {b.index: b.com for b in boxes}
    n_rows = 3 * len(boxes)

    cols: list[np.ndarray] = []
    for c in graph.contacts:
        for px, py in c.corners():
            col = np.zeros(n_rows)
            r = row_of[c.above]
            cx, cy, _ = coms[c.above]
            col[r] += 1.0
            col[r + 1] += px - cx
            col[r + 2] += py - cy
            if c.below != GROUND:
                r = row_of[c.below]
                cx, cy, _ = coms[c.below]
                col[r] -= 1.0
                col[r + 1] -= px - cx
                col[r + 2] -= py - cy
            cols.append(col)

    b_eq = np.zeros(n_rows)
    for k, b in enumerate(boxes):
        b_eq[3 * k] = b.mass * scale

    n_f = len(cols)
    a_forces = np.column_stack(cols) if cols else np.zeros((n_rows, 0))
    # slack pair per row: A f + s+ - s- = b, minimize sum of slacks
    a_eq = np.hstack([a_forces, np.eye(n_rows), -np.eye(n_rows)])
    c = np.concatenate([np.zeros(n_f), np.ones(2 * n_rows)])
    res = linprog(c, A_eq=a_eq, b_eq=b_eq, bounds=(0, None), method="highs")
    if not res.success:
        return StabilityVerdict(False, boxes[0].index)
    slack = res.x[n_f:]
    residual = slack[:n_rows] + slack[n_rows:]
    if residual.sum() <= _SLACK_TOL * len(boxes):
        return StabilityVerdict(True)
    per_box = residual.reshape(-1, 3).sum(axis=1)
    worst = int(np.argmax(per_box))
    return StabilityVerdict(False, boxes[worst].index)


@dataclass
class SettleReport:
    verdicts: list[StabilityVerdict]

    @property
    def falls(self) -> int:
        return sum(not v.stable for v in self.verdicts)


def settle_check(
    spec: GridSpec, placements: list[tuple[tuple[int, int], GridDims, int]]
) -> SettleReport:
    """Judge each placement in order: (anchor, oriented dims, rest height).

    A fall is a placement whose scene is infeasible; fallen boxes are removed
    from the oracle's scene so later judgments are not contaminated (the
    heuristic world keeps them).
    """
    verdicts: list[StabilityVerdict] = []
    scene: list[PlacedBox] = []
    for i, ((x, y), gd, rest) in enumerate(placements):
        box = PlacedBox(i, x, y, rest, gd)
        verdict = judge_next(scene, box)
        verdicts.append(verdict)
        if verdict.stable:
            scene.append(box)
    return SettleReport(verdicts)


def judge_next(scene: list[PlacedBox], box: PlacedBox) -> StabilityVerdict:
    """Verdict for adding one box to an already-accepted (feasible) scene."""
    graph = build_contacts(scene + [box])
    return equilibrium_feasible(graph)
