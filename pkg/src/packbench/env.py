"""Online packing MDP: masked actions, exact-fraction rewards, episode accounting."""
from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from .datasets import ItemSequence
from .errors import ItemRejected, PlacementRejected
from .geometry import (
    N_ORIENTATIONS,
    BoxDims,
    GridDims,
    GridSpec,
    Heightmap,
    orientations_of,
    place_box,
    snap_dims,
)
from .stability import CheckerMode, EmptyMap, stable_action_map, update_empty_map

TRACE_FORMAT = "PBTRACE v1"


@dataclass(frozen=True)
class Action:
    orientation: int
    x: int
    y: int


@dataclass(frozen=True)
class RewardBreakdown:
    """One-step reward: placed-volume fraction minus newly-wasted fraction.

    Both weights are one; values are exact rationals of voxel counts.
    """

    r_v: Fraction
    r_waste: Fraction

    @property
    def total(self) -> Fraction:
        return self.r_v - self.r_waste


@dataclass
class Observation:
    """Heightmap channel (voxels) plus three constant channels of item dims (meters)."""

    heightmap: np.ndarray
    item_dims: tuple[float, float, float]

    def channels(self) -> np.ndarray:
        nx, ny = self.heightmap.shape
        out = np.empty((4, nx, ny), dtype=np.float64)
        out[0] = self.heightmap
        for k, v in enumerate(self.item_dims):
            out[1 + k] = v
        return out


@dataclass
class CurrentItem:
    dims: BoxDims
    gd: GridDims  # base (unoriented) snapped dims
    # CHA/CH1 stable map per orientation index, under the env's checker mode
    maps: list[np.ndarray]

    def oriented(self, o: int) -> GridDims:
        return self.gd.oriented(o)


@dataclass
class Placement:
    step: int
    action: Action
    gd: GridDims  # oriented dims as placed
    rest: int


@dataclass
class EnvState:
    spec: GridSpec
    sequence: ItemSequence
    checker: CheckerMode
    gamma: float
    seed: int
    heightmap: Heightmap
    empty: EmptyMap
    step_index: int = 0
    placed_voxels: int = 0
    wasted_voxels: int = 0
    done: bool = False
    reject_reason: str | None = None
    current: CurrentItem | None = None
    rewards: list[RewardBreakdown] = field(default_factory=list)
    placements: list[Placement] = field(default_factory=list)


@dataclass
class EpisodeResult:
    utilization: Fraction
    items_placed: int
    reject_reason: str | None
    wasted_fraction: Fraction
    step_rewards: list[RewardBreakdown]
    volume_std: float  # std of item volumes over the full input sequence, m^3
    seed: int


def _expose(state: EnvState) -> None:
    """Load the next item and its stable maps; flags done when nothing fits."""
    i = state.step_index
    if i >= len(state.sequence):
        state.done = True
        state.reject_reason = "sequence_exhausted"
        state.current = None
        return
    dims = state.sequence.items[i]
    try:
        gd = snap_dims(dims, state.spec)
    except ItemRejected:
        state.done = True
        state.reject_reason = "item_exceeds_bin"
        state.current = None
        return
    maps = [
        stable_action_map(state.heightmap, state.empty, gd.oriented(o), state.checker)
        for o in range(N_ORIENTATIONS)
    ]
    state.current = CurrentItem(dims, gd, maps)
    if not any(m.any() for m in maps):
        state.done = True
        state.reject_reason = "cannot_pack"


def reset(
    spec: GridSpec,
    sequence: ItemSequence,
    gamma: float = 1.0,
    checker: CheckerMode = CheckerMode.CHA,
    seed: int = 0,
) -> EnvState:
    if len(sequence) == 0:
        raise ValueError("cannot reset with an empty sequence")
    state = EnvState(
        spec=spec,
        sequence=sequence,
        checker=checker,
        gamma=gamma,
        seed=seed,
        heightmap=Heightmap(spec),
        empty=EmptyMap(spec),
    )
    _expose(state)
    return state


def orientation_mask(state: EnvState) -> list[bool]:
    """Bit per orientation: any stable anchor exists for the current item."""
    if state.done or state.current is None:
        raise PlacementRejected("orientation_mask on a finished episode")
    return [bool(m.any()) for m in state.current.maps]


def observation(state: EnvState) -> Observation:
    if state.done or state.current is None:
        raise PlacementRejected("observation on a finished episode")
    return Observation(state.heightmap.cells.copy(), state.current.dims.as_tuple())


def utilization(state: EnvState) -> Fraction:
    return Fraction(state.placed_voxels, state.spec.bin_voxels)


def wasted_fraction(state: EnvState) -> Fraction:
    return Fraction(state.wasted_voxels, state.spec.bin_voxels)


def step(state: EnvState, action: Action) -> tuple[EnvState, RewardBreakdown, bool]:
    """Execute a stable placement; raises PlacementRejected leaving state unchanged.

    Order per placement: account trapped gaps, mutate the heightmap, reward,
    expose the next item (done when exhausted or nothing fits).
    """
    if state.done or state.current is None:
        raise PlacementRejected("step on a finished episode")
    if not 0 <= action.orientation < N_ORIENTATIONS:
        raise PlacementRejected(f"orientation {action.orientation} out of range")
    item = state.current
    gd = item.oriented(action.orientation)
    amap = item.maps[action.orientation]
    nx, ny = amap.shape
    if not (0 <= action.x < nx and 0 <= action.y < ny) or not amap[action.x, action.y]:
        raise PlacementRejected(
            f"anchor ({action.x},{action.y}) orientation {action.orientation} is not stable"
        )

    anchor = (action.x, action.y)
    before = state.empty.total_gap_voxels()
    new_empty = update_empty_map(state.heightmap, state.empty, anchor, gd)
    gap_voxels = new_empty.total_gap_voxels() - before
    new_hm, rest = place_box(state.heightmap, anchor, gd)

    state.empty = new_empty
    state.heightmap = new_hm
    state.placed_voxels += gd.volume
    state.wasted_voxels += gap_voxels
    reward = RewardBreakdown(
        r_v=Fraction(gd.volume, state.spec.bin_voxels),
        r_waste=Fraction(gap_voxels, state.spec.bin_voxels),
    )
    state.rewards.append(reward)
    state.placements.append(Placement(state.step_index, action, gd, rest))
    state.step_index += 1
    _expose(state)
    return state, reward, state.done


def episode_result(state: EnvState) -> EpisodeResult:
    vols = state.sequence.volumes()
    return EpisodeResult(
        utilization=utilization(state),
        items_placed=len(state.placements),
        reject_reason=state.reject_reason,
        wasted_fraction=wasted_fraction(state),
        step_rewards=list(state.rewards),
        volume_std=float(vols.std()),
        seed=state.seed,
    )
