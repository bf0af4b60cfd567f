"""Exception types shared across the navigation stack."""


class HolonavError(Exception):
    """Base class for all library-specific errors."""


class DegenerateConfigurationError(HolonavError, ValueError):
    """Point configuration cannot determine a rigid transform (collinear or coincident)."""


class UnobservableMotionError(HolonavError, ValueError):
    """Pose set does not constrain the pivot solution (rotations span too few axes)."""


class StateError(HolonavError, RuntimeError):
    """Operation not allowed in the current workflow or mount state."""


class FormatError(HolonavError, ValueError):
    """Persisted artifact (volume file, config file, log) is malformed."""


class ReplayError(FormatError):
    """Session log cannot be replayed (gap, bad sequence, malformed event)."""


class WireError(HolonavError, ValueError):
    """Incoming wire message is malformed or violates the protocol."""
