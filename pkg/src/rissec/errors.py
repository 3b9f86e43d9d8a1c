class RissecError(Exception):
    """Base class for all package errors."""


class DomainError(RissecError, ValueError):
    """A scalar argument lies outside its admissible range."""


class ConfigError(RissecError, ValueError):
    """Invalid scenario configuration."""


class GeometryError(RissecError, ValueError):
    """Degenerate array geometry."""


class NotPSDError(RissecError, ValueError):
    """Matrix has an eigenvalue below the PSD repair tolerance."""


class DimensionError(RissecError, ValueError):
    """Array shapes are inconsistent with the system dimensions."""


class NumericalError(RissecError, ArithmeticError):
    """A computation produced a non-finite or otherwise unusable value."""

    def __init__(self, message, state=None):
        super().__init__(message)
        self.state = state
