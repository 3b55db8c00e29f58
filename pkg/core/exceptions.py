class LambdaOUException(Exception):
    def __init__(self, message: str):
        self.message = message
        super().__init__(self.message)


# 1. Domain and input errors

class DomainError(LambdaOUException):
    def __init__(self, message="Argument outside the documented domain."):
        super().__init__(message)


class IndexRangeError(DomainError):
    def __init__(self, message="State index outside the valid range."):
        super().__init__(message)


class DataValidationError(LambdaOUException):
    def __init__(self, message="Provided data is invalid."):
        super().__init__(message)


class MeasureNotFoundError(LambdaOUException):
    def __init__(self, message="The requested measure could not be found."):
        super().__init__(message)


class UnsupportedRepresentationError(LambdaOUException):
    def __init__(self, message="The measure representation does not support this operation."):
        super().__init__(message)


class SingularityError(LambdaOUException):
    def __init__(self, message="The declared endpoint exponents make the integral infinite."):
        super().__init__(message)


class AssumptionViolatedError(LambdaOUException):
    def __init__(self, message="The measure does not satisfy the dust-integrability assumption."):
        super().__init__(message)


class StationarityUnavailableError(LambdaOUException):
    def __init__(self, message="No stationary law: drift is zero or the log-moment condition fails."):
        super().__init__(message)


class InconclusiveError(LambdaOUException):
    def __init__(self, message="The declared exponent metadata cannot decide the question."):
        super().__init__(message)


# 2. Numerical failures

class NumericalError(LambdaOUException):
    def __init__(self, message="An unexpected numerical failure occurred."):
        super().__init__(message)


class QuadratureError(NumericalError):
    def __init__(self, message="Adaptive quadrature could not certify the requested tolerance."):
        super().__init__(message)


class TruncationError(NumericalError):
    def __init__(self, message="Truncation did not reach the requested tail tolerance."):
        super().__init__(message)


class InversionError(NumericalError):
    def __init__(self, message="Characteristic-function inversion failed its error estimate."):
        super().__init__(message)


class CapTooSmallError(NumericalError):
    def __init__(self, message="The state-space cap leaves a truncation bound above the tolerance."):
        super().__init__(message)


EXCEPTION_EXIT_CODES = {
    LambdaOUException: 1,               # Generic fallback
    DomainError: 1,
    IndexRangeError: 1,
    DataValidationError: 1,
    MeasureNotFoundError: 1,
    UnsupportedRepresentationError: 1,
    SingularityError: 1,
    AssumptionViolatedError: 1,
    StationarityUnavailableError: 1,
    InconclusiveError: 1,
    NumericalError: 2,                  # Non-convergence
    QuadratureError: 2,
    TruncationError: 2,
    InversionError: 2,
    CapTooSmallError: 2,
}


def exit_code_for(exc: BaseException) -> int:
    for cls in type(exc).__mro__:
        if cls in EXCEPTION_EXIT_CODES:
            return EXCEPTION_EXIT_CODES[cls]
    return 1
