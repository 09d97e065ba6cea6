"""Exception hierarchy shared by every module."""


class LSDError(Exception):
    """Base class for all library errors."""

    category = "error"


class InvalidInputError(LSDError, ValueError):
    category = "invalid-input"


class ConfigError(LSDError, ValueError):
    category = "invalid-config"


class CapacityError(LSDError):
    """An exact oracle refused because the decomposition set is too large."""

    category = "capacity"

    def __init__(self, message, count=None):
        super().__init__(message)
        self.count = count


class StateError(LSDError, RuntimeError):
    category = "state"


class CorruptCheckpointError(LSDError):
    category = "corrupt-checkpoint"


class ShapeMismatchError(CorruptCheckpointError):
    category = "shape-mismatch"

    def __init__(self, message, name=None):
        super().__init__(message)
        self.name = name


class EmptyResultError(LSDError):
    """Beam search finished no hypothesis; ``partials`` holds the best live ones."""

    category = "empty-result"

    def __init__(self, message, partials=()):
        super().__init__(message)
        self.partials = list(partials)


class NonFiniteError(LSDError, FloatingPointError):
    category = "non-finite"
