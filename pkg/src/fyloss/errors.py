"""Exception hierarchy shared by every fyloss module."""


class FYError(Exception):
    """Base class for all fyloss errors."""


class DomainViolation(FYError, ValueError):
    pass


class InvalidParameter(FYError, ValueError):
    pass


class NotSeparable(FYError, TypeError):
    pass


class OutOfRange(FYError, ValueError):
    pass


class BoundaryGradientUndefined(FYError, ValueError):
    pass


class SolverMismatch(FYError, ValueError):
    pass


class OneHotRequired(FYError, ValueError):
    pass


class MarginViolated(FYError, AssertionError):
    pass


class NonFiniteObjective(FYError, FloatingPointError):
    pass


class EmptyAfterFiltering(FYError, ValueError):
    pass


class IndexOutOfDeclaredRange(FYError, IndexError):
    pass


class NoConvergence(FYError, RuntimeError):
    """Raised when an iterative solver exhausts its budget.

    The best iterate found so far is attached so callers can still use it.
    """

    def __init__(self, message, best=None, residual=float("nan"), iterations=0):
        super().__init__(message)
        self.best = best
        self.residual = residual
        self.iterations = iterations


class ParseError(FYError, ValueError):
    def __init__(self, line, column, reason):
        super().__init__(f"line {line}, column {column}: {reason}")
        self.line = line
        self.column = column
        self.reason = reason
