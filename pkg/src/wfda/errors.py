"""Exception types shared across the library."""


class WfdaError(Exception):
    """Base class for all library-specific errors."""


class DomainError(WfdaError, ValueError):
    """A time point or sample lies outside the relevant domain."""


class ShapeError(WfdaError, ValueError):
    """Array arguments have incompatible lengths or shapes."""


class ConfigurationError(WfdaError, ValueError):
    """Invalid combination of weights, domains, or search settings."""


class ParameterError(WfdaError, ValueError):
    """A scalar parameter is out of its admissible range."""


class InsufficientDataError(WfdaError, ValueError):
    """Too few samples or observations for the requested estimate."""


class UndefinedScoreError(WfdaError, ArithmeticError):
    """A score is undefined, e.g. zero response variance in a relative score."""
