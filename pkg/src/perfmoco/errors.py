"""Exception types shared across the package.

The CLI maps these onto exit codes: ConfigError -> 2, DivergenceError and
RegistrationError -> 3, FormatError -> 4.
"""


class DimensionError(ValueError):
    """Array shapes or sizes do not match what an operation requires."""


class ConfigError(ValueError):
    """Invalid configuration, geometry, or specification values."""


class FormatError(ValueError):
    """Malformed array file header or payload."""


class DivergenceError(RuntimeError):
    """Non-finite values appeared in a solver iterate."""

    def __init__(self, message, iteration=None, variant=None):
        super().__init__(message)
        self.iteration = iteration
        self.variant = variant


class RegistrationError(RuntimeError):
    """Registration failed to make progress (SSD blew up)."""

    def __init__(self, message, diagnostics=None):
        super().__init__(message)
        self.diagnostics = diagnostics or {}


class TrackingError(RuntimeError):
    """Centroid tracking found no pixels above threshold."""
