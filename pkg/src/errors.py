"""Exception hierarchy shared by the library, the tools and the CLI.

Each exception carries the process exit code the CLI reports for it:
2 for configuration and validation problems, 3 for numerical failures and
4 when a density is rejected.
"""


class SteinDensityError(Exception):
    """Base class for all toolkit errors."""

    exit_code = 1


# Configuration / input problems (exit code 2)


class InputError(SteinDensityError, ValueError):
    """Invalid argument supplied by the caller."""

    exit_code = 2


class ConfigError(InputError):
    """Run configuration could not be loaded or is inconsistent."""


class ExpressionSyntaxError(InputError):
    """Expression text could not be parsed."""

    def __init__(self, message: str, position: int, text: str = ""):
        self.position = position
        self.text = text
        pointer = ""
        if text:
            pointer = f"\n  {text}\n  {' ' * position}^"
        super().__init__(f"{message} at position {position}{pointer}")


class DimensionError(InputError):
    """A variable index exceeds the declared dimension."""


class ValidationFailedError(InputError):
    """A decomposition failed validation."""

    def __init__(self, message: str, report=None):
        self.report = report
        super().__init__(message)


class UnknownReferenceError(InputError):
    """Reference case name is not registered."""


# Numerical problems (exit code 3)


class NumericalError(SteinDensityError, ArithmeticError):
    """A numerical procedure failed or produced non-finite output."""

    exit_code = 3


class QuadratureError(NumericalError):
    """Adaptive quadrature did not converge or hit non-finite values."""


class ExpressionDomainError(NumericalError):
    """Expression evaluated outside its domain (division by zero, log of a
    non-positive number, ...)."""

    def __init__(self, message: str, node_text: str = ""):
        self.node_text = node_text
        suffix = f" in `{node_text}`" if node_text else ""
        super().__init__(f"{message}{suffix}")


class DomainError(NumericalError, ValueError):
    """Argument outside the mathematical domain of an operation."""


class SupportBoundaryError(NumericalError):
    """Density vanishes at the evaluation point."""


class PreconditionError(NumericalError):
    """An operation's numerical precondition does not hold."""


class PrecisionError(NumericalError):
    """Requested evaluation would lose all significant digits."""


class DegenerateStatisticError(NumericalError):
    """The statistic is (numerically) constant."""


class WindowError(NumericalError):
    """Windowed Monte Carlo conditioning accepted no samples."""


# Existence (exit code 4)


class ExistenceError(SteinDensityError):
    """θ(T) vanishes where a density is required."""

    exit_code = 4

    def __init__(self, message: str, location: float | None = None, verdict=None):
        self.location = location
        self.verdict = verdict
        super().__init__(message)
