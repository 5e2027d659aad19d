"""Exception hierarchy shared by all modules."""


class SDLError(Exception):
    """Base class for every error raised by the package."""


class DomainError(SDLError, ValueError):
    """An argument lies outside the domain of a function (e.g. r <= 0)."""


class UnsupportedPointError(DomainError):
    """A closed form is not available at the requested point."""


class ConfigurationError(SDLError, ValueError):
    """Incompatible mesh, weight, topology or experiment settings."""


class AssemblyError(SDLError):
    """The discrete form could not be assembled (e.g. disconnected graph)."""


class NumericalError(SDLError, ArithmeticError):
    """A solve failed or a quantity is numerically degenerate."""


class InsufficientDataError(SDLError):
    """A Monte Carlo statistic has no samples to average over."""
