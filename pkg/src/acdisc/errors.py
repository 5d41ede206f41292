"""Exception hierarchy shared by all modules.

Every error raised for a violated hypothesis derives from
:class:`PreconditionError`; the CLI maps those to exit code 2.
"""


class AcdiscError(Exception):
    """Base class for toolkit errors."""


class PreconditionError(AcdiscError):
    """A documented hypothesis of an operation does not hold."""


class SingularBlock(PreconditionError):
    pass


class TooLarge(PreconditionError):
    pass


class SingularMatrix(PreconditionError):
    pass


class NonPositive(PreconditionError):
    pass


class InvalidCutoff(PreconditionError):
    pass


class PreconditionFailed(PreconditionError):
    """Raised with the list of hypotheses that failed."""

    def __init__(self, failures, message=None):
        self.failures = list(failures)
        super().__init__(message or "precondition failed: " + "; ".join(self.failures))


class DeltaTooLarge(PreconditionError):
    pass


class EmptyAtlas(PreconditionError):
    pass


class DegenerateDefiningFunctions(PreconditionError):
    pass


class CannotTame(PreconditionError):
    pass


class SingularLeadingMatrix(PreconditionError):
    pass


class NoDerivatives(PreconditionError):
    pass


class NoContraction(AcdiscError):
    pass


class MaxIter(AcdiscError):
    pass


class NotAttached(PreconditionError):
    pass


class RegionTooSmall(PreconditionError):
    pass


class EpsilonPrimeViolated(PreconditionError):
    def __init__(self, condition, worst_point, value):
        self.condition = condition
        self.worst_point = worst_point
        self.value = value
        super().__init__(f"{condition} violated (value {value:.6g}) at {list(worst_point)}")


class NotCertified(PreconditionError):
    pass
