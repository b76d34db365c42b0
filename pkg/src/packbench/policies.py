"""Baseline decision-makers over masked stable-action maps.

Every policy only ever returns anchors that are True in the current stable
maps; ties are broken lexicographically by (rest height, y, x, orientation)
so golden traces are reproducible.
"""
from __future__ import annotations

from enum import Enum

import numpy as np

from .env import Action, EnvState
from .geometry import N_ORIENTATIONS
from .stability import anchor_window_max, anchor_window_sum


class PolicyKind(str, Enum):
    RANDOM_STABLE = "random"
    DBLF = "dblf"
    GREEDY_MIN_WASTE = "minwaste"
    EXTERNAL = "external"


def random_stable(state: EnvState, rng: np.random.Generator) -> Action | None:
    """Uniform over all stable (orientation, x, y) triples; None when none exist."""
    if state.done or state.current is None:
        return None
    counts = [int(m.sum()) for m in state.current.maps]
    total = sum(counts)
    if total == 0:
        return None
    pick = int(rng.integers(total))
    for o, n in enumerate(counts):
        if pick < n:
            xs, ys = np.nonzero(state.current.maps[o])
            return Action(o, int(xs[pick]), int(ys[pick]))
        pick -= n
    raise AssertionError("unreachable")


def _candidates(state: EnvState):
    """Per orientation: stable anchor coords plus their rest heights and trapped-gap volumes."""
    hm = state.heightmap.cells
    for o in range(N_ORIENTATIONS):
        amap = state.current.maps[o]
        if not amap.any():
            continue
        gd = state.current.oriented(o)
        xs, ys = np.nonzero(amap)
        wmax = anchor_window_max(hm, gd.w, gd.d)
        wsum = anchor_window_sum(hm, gd.w, gd.d)
        rest = wmax[xs, ys].astype(np.int64)
        waste = rest * (gd.w * gd.d) - wsum[xs, ys]
        yield o, xs, ys, rest, waste


def greedy_dblf(state: EnvState) -> Action | None:
    """Deepest-bottom-left among stable anchors: min (rest, y, x), then orientation."""
    if state.done or state.current is None:
        return None
    best = None
    for o, xs, ys, rest, _ in _candidates(state):
        i = np.lexsort((xs, ys, rest))[0]
        key = (int(rest[i]), int(ys[i]), int(xs[i]), o)
        if best is None or key < best:
            best = key
    if best is None:
        return None
    return Action(best[3], best[2], best[1])


def greedy_min_waste(state: EnvState) -> Action | None:
    """Maximize the one-step reward, i.e. trap the least gap volume.

    The placed-volume term is identical across orientations of one item, so
    this is argmin of newly trapped voxels; ties fall back to the DBLF order.
    """
    if state.done or state.current is None:
        return None
    best = None
    for o, xs, ys, rest, waste in _candidates(state):
        i = np.lexsort((xs, ys, rest, waste))[0]
        key = (int(waste[i]), int(rest[i]), int(ys[i]), int(xs[i]), o)
        if best is None or key < best:
            best = key
    if best is None:
        return None
    return Action(best[4], best[3], best[2])


class Policy:
    """Callable wrapper so the runner can treat all policies uniformly."""

    def __init__(self, kind: PolicyKind, rng: np.random.Generator | None = None):
        if kind == PolicyKind.EXTERNAL:
            raise ValueError("external policies are driven through the protocol server")
        self.kind = kind
        self.rng = rng if rng is not None else np.random.default_rng(0)

    def __call__(self, state: EnvState) -> Action | None:
        if self.kind == PolicyKind.RANDOM_STABLE:
            return random_stable(state, self.rng)
        if self.kind == PolicyKind.DBLF:
            return greedy_dblf(state)
        return greedy_min_waste(state)
