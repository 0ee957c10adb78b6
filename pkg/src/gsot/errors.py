"""Exception hierarchy. CLI exit codes hang off these classes."""


class GsotError(Exception):
    """Base class for all package errors."""

    exit_code = 1


class ConfigError(GsotError, ValueError):
    """Invalid experiment configuration or input file."""

    exit_code = 2


class ParseError(ConfigError):
    """Malformed input file; carries the offending line number."""

    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class NumericalFailure(GsotError, ArithmeticError):
    """An iterative routine failed to converge or produced non-finite values."""

    exit_code = 3


class DivergenceError(NumericalFailure):
    """Non-finite iterate in a solver loop."""

    def __init__(self, message, iteration=None):
        self.iteration = iteration
        if iteration is not None:
            message = f"{message} (iteration {iteration})"
        super().__init__(message)


class OracleInconclusive(GsotError):
    """A brute-force oracle ran out of budget or could not certify its answer."""

    exit_code = 3


class VerificationFailure(GsotError):
    """At least one verification check failed."""

    exit_code = 4
