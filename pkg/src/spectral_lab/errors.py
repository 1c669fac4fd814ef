"""Exception types raised by the lab."""


class SpectralLabError(Exception):
    """Base class for all errors raised by this package."""


class MathPreconditionError(SpectralLabError, ValueError):
    """A mathematical precondition of an operation is violated."""


class NonPositiveWeight(MathPreconditionError):
    pass


class NotIntegrable(MathPreconditionError):
    pass


class DivergentIntegral(MathPreconditionError):
    pass


class CriticalCoupling(MathPreconditionError):
    pass


class RegimeError(MathPreconditionError):
    """Operation requested in the wrong coupling regime."""


class NoSubcriticalEdge(MathPreconditionError):
    pass


class NoRoot(MathPreconditionError):
    pass


class EmptyDomain(MathPreconditionError):
    pass


class DimensionMismatch(SpectralLabError, ValueError):
    pass


class OrderingViolated(DimensionMismatch):
    """Potential values are not sorted in descending order."""


class NoConvergence(SpectralLabError, ArithmeticError):
    """An iterative method exhausted its budget.

    ``payload`` carries whatever the method had when it gave up (best iterate,
    residual, last estimates).
    """

    def __init__(self, message, **payload):
        super().__init__(message)
        self.payload = payload


class ClusterWarning(UserWarning):
    """Nearly degenerate eigenvalues; eigenvectors were re-orthogonalized."""


class ParseError(SpectralLabError, ValueError):
    pass


class ValidationError(SpectralLabError, ValueError):
    pass


class SchemaError(SpectralLabError, ValueError):
    pass


class TrialFailureBudgetExceeded(SpectralLabError, RuntimeError):
    pass
