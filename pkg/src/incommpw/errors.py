"""Exception types shared across the package."""


class IncommpwError(Exception):
    """Base class for all library errors."""


class InvalidLatticeError(IncommpwError):
    """Raised for singular or malformed lattice bases."""


class CommensurateError(IncommpwError):
    """Raised when an operation requires an incommensurate lattice pair."""


class BasisSizeError(IncommpwError):
    """Raised when a plane-wave basis would exceed the configured size limit."""


class ValidationError(IncommpwError):
    """Raised when numerical validation of a computed object fails."""


class ConvergenceError(IncommpwError):
    """Raised when an iterative procedure fails to converge."""


class SingularConfigurationError(IncommpwError):
    """Raised when a geometry places a singularity on a quadrature node."""


class ConfigError(IncommpwError):
    """Configuration validation failure; carries the offending key."""

    def __init__(self, key, message):
        self.key = key
        super().__init__(f"config key '{key}': {message}")
