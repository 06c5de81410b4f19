"""Exception hierarchy shared by every stage."""


class TradecorrError(Exception):
    """Base class; the CLI maps any subclass to a nonzero exit status."""


class SchemaError(TradecorrError, ValueError):
    pass


class EmptySampleError(TradecorrError, ValueError):
    pass


class EmptyMatrixError(TradecorrError, ValueError):
    pass


class DegenerateCorrelationError(TradecorrError, ValueError):
    pass


class InsufficientSampleError(TradecorrError, ValueError):
    pass


class OutOfRegimeError(TradecorrError, ValueError):
    pass


class NotSymmetricError(TradecorrError, ValueError):
    pass


class TrivialDendrogramError(TradecorrError, ValueError):
    pass


class DegenerateRegressorError(TradecorrError, ValueError):
    pass


class ExactModeLimitError(TradecorrError, ValueError):
    """Raised when a Poisson-binomial is too long for the exact DP; use Monte Carlo."""
