"""Exception types shared across the package."""


class SiclopError(Exception):
    """Base class for all package errors."""


class InvalidDimensions(SiclopError):
    pass


class CapacityExceeded(SiclopError):
    pass


class TerminalState(SiclopError):
    pass


class LengthMismatch(SiclopError):
    pass


class ShapeMismatch(SiclopError):
    pass


class CorruptCheckpoint(SiclopError):
    pass


class VersionMismatch(SiclopError):
    pass


class NoConvergence(SiclopError):
    pass


class EmptyStore(SiclopError):
    pass


class TerminalRoot(SiclopError):
    pass


class ConfigError(SiclopError):
    pass
