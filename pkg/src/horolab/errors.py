"""Exception types shared across the package."""


class HorolabError(Exception):
    """Base class for all package errors."""


class InvalidElementError(HorolabError, ValueError):
    """A matrix is not a finite unimodular element, or a point is off the upper half plane."""


class ParameterError(HorolabError, ValueError):
    """An argument is outside its admissible range."""


class DomainError(HorolabError, ValueError):
    """A special function was asked for a value outside its supported domain."""


class AliasingError(HorolabError, ValueError):
    """Too few quadrature nodes to resolve the requested band limit."""


class ResolutionError(HorolabError, ValueError):
    """A uniform grid is too coarse to integrate a trigonometric polynomial exactly."""


class SamplingError(HorolabError, RuntimeError):
    """Rejection sampling hit its retry cap."""


class PrecisionError(HorolabError, RuntimeError):
    """Accumulated floating-point drift exceeded the allowed tolerance."""


class QuadratureError(HorolabError, RuntimeError):
    """A quadrature could not reach its tolerance within the evaluation budget."""


class ResourceError(HorolabError, RuntimeError):
    """A request would exceed a configured memory or work budget."""


class DegenerateFitError(HorolabError, ValueError):
    """A log-log fit was requested on data that cannot support it."""
