"""Exception types shared across the package."""


class ChemopatternError(Exception):
    """Base class for all errors raised by this package."""


class DimensionMismatchError(ChemopatternError):
    """Two fields or vectors do not live on the same grid / dimension."""


class InstabilityError(ChemopatternError):
    """Time integration blew up or produced non-finite values.

    Carries the simulation time at which the fault was detected.
    """

    def __init__(self, message, time=None):
        super().__init__(message)
        self.time = time


class SingularOperatorError(ChemopatternError):
    """A linear solve hit a (numerically) singular operator."""


class NumericalFaultError(ChemopatternError):
    """Non-finite values appeared inside a linear solver."""


class EllipticityError(ChemopatternError):
    """Cell density fell below the positivity floor required for ellipticity."""


class IngestionError(ChemopatternError):
    """An input raster could not be turned into a usable scalar field."""


class PoleError(ChemopatternError):
    """Evaluation at (or too close to) the pole of the stationary map."""
