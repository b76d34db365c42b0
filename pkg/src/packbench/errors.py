"""Exception types shared across the engine."""


class PackbenchError(Exception):
    """Base class for all engine errors."""


class BoundsError(PackbenchError):
    """A window or anchor falls outside the bin grid."""


class ItemRejected(PackbenchError):
    """An item cannot fit inside the bin in any orientation."""


class PlacementRejected(PackbenchError):
    """A placement was refused: unstable, out of bounds, or over bin height."""


class SceneCorruption(PackbenchError):
    """A placed-box scene violates the world model (e.g. interpenetration)."""


class SequenceParseError(PackbenchError):
    """A sequence file could not be parsed."""

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class ProtocolError(PackbenchError):
    """The environment protocol was violated by the peer."""
