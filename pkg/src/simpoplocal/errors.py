"""Exception hierarchy shared across the package."""


class SimpopLocalError(Exception):
    """Base class for all package errors."""


class InvalidStateError(SimpopLocalError, ValueError):
    """A quantity is non-finite or outside its physical range."""


class InvariantViolation(SimpopLocalError, ValueError):
    """A model invariant (e.g. resource capacity <= r_max) was broken."""


class DomainError(SimpopLocalError, ValueError):
    """An input lies outside the mathematical domain of an operation."""


class LandscapeError(SimpopLocalError, ValueError):
    """Landscape generation is infeasible for the requested spec."""


class ParseError(SimpopLocalError, ValueError):
    """A landscape or configuration file is malformed."""

    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class CheckpointError(SimpopLocalError):
    """A checkpoint is truncated, corrupt, or from another format version."""


class ConfigError(SimpopLocalError, ValueError):
    """A run configuration is invalid; ``key`` names the offending entry."""

    def __init__(self, key, message):
        self.key = key
        super().__init__(f"{key}: {message}")
