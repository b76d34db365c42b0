"""Deterministic online 3D bin-packing engine with physics-heuristic stability checks."""

from .env import Action, EnvState, EpisodeResult, Observation, RewardBreakdown, reset, step
from .errors import (
    BoundsError,
    ItemRejected,
    PackbenchError,
    PlacementRejected,
    ProtocolError,
    SceneCorruption,
    SequenceParseError,
)
from .geometry import (
    BoxDims,
    GridDims,
    GridSpec,
    Heightmap,
    orientations_of,
    place_box,
    snap_dims,
    window_max,
)
from .stability import (
    CheckerMode,
    EmptyMap,
    HullPolygon,
    center_in_hull,
    convex_hull,
    filter_grounded,
    stable_action_map,
    support_points,
    update_empty_map,
)

__all__ = [
    "Action",
    "BoundsError",
    "BoxDims",
    "CheckerMode",
    "EmptyMap",
    "EnvState",
    "EpisodeResult",
    "GridDims",
    "GridSpec",
    "Heightmap",
    "HullPolygon",
    "ItemRejected",
    "Observation",
    "PackbenchError",
    "PlacementRejected",
    "ProtocolError",
    "RewardBreakdown",
    "SceneCorruption",
    "SequenceParseError",
    "center_in_hull",
    "convex_hull",
    "filter_grounded",
    "orientations_of",
    "place_box",
    "reset",
    "snap_dims",
    "stable_action_map",
    "step",
    "support_points",
    "update_empty_map",
    "window_max",
]

__version__ = "0.1.0"
