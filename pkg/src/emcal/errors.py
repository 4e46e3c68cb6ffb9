"""Exception types shared across the package."""


class EmcalError(Exception):
    """Base class for all package-specific errors."""


class DomainError(EmcalError, ValueError):
    """An input lies outside the physical or mathematical domain of an operation."""


class SingularityError(DomainError):
    """A parameter combination sits exactly on a pole of a closed-form expression."""


class ConfigurationError(EmcalError):
    """Invalid, inconsistent or incomplete configuration. CLI exit code 2."""


class FitError(EmcalError):
    """An estimation step failed beyond what a flagged result can express. CLI exit code 3."""


class DegenerateDataError(FitError):
    """The data carry no information for the requested fit (flat trace, identical abscissas)."""


class PeakResolutionError(FitError):
    """Spectral features overlap or are missing, so peak quantities cannot be separated."""
