"""Exception types shared across the package."""


class ShemomentsError(Exception):
    """Base class for all package errors."""


class ConfigError(ShemomentsError):
    pass


class NumericalError(ShemomentsError):
    """Base class for numeric failures (CLI exit code 3)."""


class SingularAtOrigin(ShemomentsError, ValueError):
    pass


class NotPointwise(ShemomentsError, ValueError):
    pass


class NonpositiveTime(ShemomentsError, ValueError):
    pass


class DimensionMismatch(ShemomentsError, ValueError):
    pass


class PoleError(NumericalError, ValueError):
    pass


class NonconvergentSeries(NumericalError):
    pass


class DivergentIntegral(NumericalError):
    pass


class QuadratureFailure(NumericalError):
    pass


class ToleranceNotMet(NumericalError):
    """Adaptive quadrature did not reach the requested accuracy.

    The best available estimate and its error bound are attached.
    """

    def __init__(self, message, estimate=None, error=None):
        super().__init__(message)
        self.estimate = estimate
        self.error = error


class GridMismatch(ShemomentsError, ValueError):
    pass


class TruncationNotConverged(NumericalError):
    def __init__(self, message, value=None, bound=None):
        super().__init__(message)
        self.value = value
        self.bound = bound


class UnsupportedMeasure(ShemomentsError, ValueError):
    pass


class InconsistentLimits(NumericalError):
    pass


class EquivalenceViolation(NumericalError):
    pass


class BoundViolated(NumericalError):
    def __init__(self, message, location=None, ratio=None):
        super().__init__(message)
        self.location = location
        self.ratio = ratio


class SlopeNotStabilized(NumericalError):
    def __init__(self, message, lemma_bound=None):
        super().__init__(message)
        self.lemma_bound = lemma_bound


class MissingExpMoment(ShemomentsError, ValueError):
    pass


class IndefiniteCovariance(NumericalError):
    pass


class StabilityViolated(ShemomentsError, ValueError):
    pass


class NaNDetected(NumericalError):
    pass


class TruncationWarning(UserWarning):
    pass
