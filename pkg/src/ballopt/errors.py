"""Exception hierarchy.

Validation problems derive from :class:`ValueError`; numerical failures
derive from :class:`ArithmeticError`.  The CLI maps the two families to
exit codes 1 and 2.
"""


class BallOptError(Exception):
    """Base class for all package errors."""


class ValidationError(BallOptError, ValueError):
    pass


class NumericalError(BallOptError, ArithmeticError):
    pass


class NonMonotoneBreakpoints(ValidationError):
    pass


class ValueOutOfRange(ValidationError):
    pass


class MeanConstraintViolated(ValidationError):
    pass


class NotBangBang(ValidationError):
    pass


class NonZeroMeanPerturbation(ValidationError):
    pass


class EndpointMeanMismatch(ValidationError):
    pass


class IndexExceedsSpectrum(ValidationError):
    pass


class GridTooCoarse(ValidationError):
    pass


class DomainError(ValidationError):
    pass


class OrderTooLarge(ValidationError):
    pass


class ConvergenceFailure(NumericalError):
    pass


class RootBracketFailure(NumericalError):
    pass


class SingularModeSystem(NumericalError):
    pass


class DegenerateProfile(NumericalError):
    pass


class ZeroDenominator(NumericalError):
    pass
