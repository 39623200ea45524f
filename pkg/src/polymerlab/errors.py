"""Exception hierarchy.

Every message is prefixed with ``module.operation`` so that CLI users can tell
where a failure came from. Validation problems map to exit code 2, numerical
failures to exit code 3.
"""


class PolymerLabError(Exception):
    exit_code = 1

    def __init__(self, where, message):
        self.where = where
        super().__init__(f"{where}: {message}")


class ValidationError(PolymerLabError, ValueError):
    exit_code = 2


class NumericalError(PolymerLabError, ArithmeticError):
    exit_code = 3


class InvalidParameterError(ValidationError):
    pass


class InvalidBracketError(ValidationError):
    pass


class InvalidReferenceError(ValidationError):
    pass


class UnsupportedModeError(ValidationError):
    pass


class UnsupportedOrderError(ValidationError):
    pass


class ConfigError(ValidationError):
    pass


class SingularityError(NumericalError):
    pass


class OutOfDomainError(NumericalError):
    pass


class PathEscapeError(NumericalError):
    pass


class NumericalOverflowError(NumericalError):
    pass


class SupercriticalBetaError(NumericalError):
    pass


class EnsembleAbortError(NumericalError):
    pass


def require(cond, exc, where, message):
    if not cond:
        raise exc(where, message)
